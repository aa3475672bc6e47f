#pragma once

#include <json.hpp>

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mlquant/metrics.hpp"
#include "mlquant/quantify_ml.hpp"

namespace mlquant {

// One hyperparameter axis: a name understood by apply_grid_value plus the
// values to try, kept as strings so grids stay uniform and serializable.
struct GridDimension {
  std::string name;
  std::vector<std::string> values;
};

inline void apply_grid_value(PipelineSpec& spec, const std::string& name,
                             const std::string& value) {
  auto as_double = [&]() {
    try {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("grid value '" + value + "' for '" + name + "' is not a number");
    }
  };
  auto as_int = [&]() {
    try {
      std::size_t used = 0;
      int v = std::stoi(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("grid value '" + value + "' for '" + name + "' is not an integer");
    }
  };
  if (name == "c")
    spec.binary_gp.c = as_double();
  else if (name == "class_weight")
    spec.binary_gp.class_weight = class_weight_from_name(value);
  else if (name == "meta_c")
    spec.meta_gp.c = as_double();
  else if (name == "meta_class_weight")
    spec.meta_gp.class_weight = class_weight_from_name(value);
  else if (name == "normalize")
    spec.meta_gp.normalize = value == "true" || value == "1";
  else if (name == "ridge_alpha")
    spec.ridge_alpha = as_double();
  else if (name == "knn_k")
    spec.knn_k = as_int();
  else if (name == "k_clusters")
    spec.k_clusters = as_int();
  else if (name == "lpq_c")
    spec.lpq_gp.c = as_double();
  else if (name == "lpq_class_weight")
    spec.lpq_gp.class_weight = class_weight_from_name(value);
  else if (name == "regressor")
    spec.regressor = value;
  else if (name == "base_method")
    spec.base_method = base_method_from_name(value);
  else if (name == "cluster_method")
    spec.cluster_method = cluster_method_from_name(value);
  else
    throw ConfigError("unknown grid dimension '" + name + "'");
}

struct GridSpec {
  std::vector<GridDimension> dims;

  std::size_t size() const {
    std::size_t total = 1;
    for (const GridDimension& d : dims) total *= d.values.size();
    return total;
  }

  // Cartesian product in declaration order; the first dimension varies slowest.
  std::vector<std::vector<std::pair<std::string, std::string>>> configurations() const {
    for (const GridDimension& d : dims)
      if (d.values.empty()) throw ConfigError("grid dimension '" + d.name + "' has no values");
    std::vector<std::vector<std::pair<std::string, std::string>>> out;
    std::vector<std::size_t> idx(dims.size(), 0);
    if (dims.empty()) return out;
    while (true) {
      std::vector<std::pair<std::string, std::string>> cfg;
      for (std::size_t d = 0; d < dims.size(); ++d)
        cfg.emplace_back(dims[d].name, dims[d].values[idx[d]]);
      out.push_back(std::move(cfg));
      std::size_t d = dims.size();
      while (d > 0) {
        --d;
        if (++idx[d] < dims[d].values.size()) break;
        idx[d] = 0;
        if (d == 0) return out;
      }
    }
  }

  static GridSpec defaults_for(const PipelineSpec& spec, int n_classes) {
    GridSpec g;
    const std::vector<std::string> c_values = {"0.1", "1", "10", "100", "1000"};
    const std::vector<std::string> cw_values = {"none", "balanced"};
    if (spec.aggregator == AggregatorKind::LPQ) {
      std::vector<std::string> ks;
      for (int k : {1, 2, 5})
        if (k <= n_classes) ks.push_back(std::to_string(k));
      g.dims.push_back({"k_clusters", ks});
      g.dims.push_back({"lpq_c", c_values});
      g.dims.push_back({"lpq_class_weight", cw_values});
      return g;
    }
    if (spec.classifier == ClassifierKind::Stacked) {
      g.dims.push_back({"meta_c", c_values});
      g.dims.push_back({"meta_class_weight", cw_values});
      g.dims.push_back({"normalize", {"false", "true"}});
    } else {
      g.dims.push_back({"c", c_values});
      g.dims.push_back({"class_weight", cw_values});
    }
    if (spec.aggregator == AggregatorKind::RQ && spec.regressor == "ridge")
      g.dims.push_back(
          {"ridge_alpha", {"0.001", "0.01", "0.1", "1", "10", "100", "1000"}});
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const GridDimension& d : dims) j.push_back({{"name", d.name}, {"values", d.values}});
    return j;
  }

  // Accepts either the array-of-dimensions form (order preserved) or a plain
  // object (dimensions ordered by key).
  static GridSpec from_json(const nlohmann::json& j) {
    GridSpec g;
    auto to_strings = [](const nlohmann::json& values) {
      std::vector<std::string> out;
      for (const nlohmann::json& v : values) {
        if (v.is_string())
          out.push_back(v.get<std::string>());
        else if (v.is_boolean())
          out.push_back(v.get<bool>() ? "true" : "false");
        else if (v.is_number_integer())
          out.push_back(std::to_string(v.get<long long>()));
        else if (v.is_number())
          out.push_back(format_double(v.get<double>()));
        else
          throw ConfigError("grid values must be scalars");
      }
      return out;
    };
    if (j.is_array()) {
      for (const nlohmann::json& d : j)
        g.dims.push_back({d.at("name").get<std::string>(), to_strings(d.at("values"))});
    } else if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it)
        g.dims.push_back({it.key(), to_strings(it.value())});
    } else {
      throw ConfigError("grid must be an object or an array of dimensions");
    }
    return g;
  }
};

struct SelectionRow {
  int index = 0;
  std::vector<std::pair<std::string, std::string>> params;
  double mean_ae = std::numeric_limits<double>::infinity();
  int n_samples = 0;
  std::string error;
};

struct SelectionReport {
  std::vector<SelectionRow> rows;
  int chosen_index = -1;
  std::vector<int> per_class_choice;  // filled only in per-class mode
  std::uint64_t seed = 0;
  int n_validation_samples = 0;

  void write_csv(std::ostream& os) const {
    os << "# mlquant " << kVersion << "\n";
    os << "# seed " << seed << "\n";
    if (!per_class_choice.empty()) {
      os << "# per_class_choice";
      for (int c : per_class_choice) os << ' ' << c;
      os << "\n";
    }
    os << "index,params,mean_ae,n_samples,chosen,error\n";
    for (const SelectionRow& r : rows) {
      os << r.index << ',';
      for (std::size_t i = 0; i < r.params.size(); ++i) {
        if (i) os << ';';
        os << r.params[i].first << '=' << r.params[i].second;
      }
      os << ',' << (std::isfinite(r.mean_ae) ? format_double(r.mean_ae) : "inf") << ','
         << r.n_samples << ',' << (r.index == chosen_index ? 1 : 0) << ',' << r.error << "\n";
    }
  }
};

struct GridSearchOptions {
  double val_fraction = 0.4;
  MLAPPParams mlapp;       // grid defaults to 0:0.05:1 when left empty
  bool per_class = false;  // independent per-class hyperparameters (bc_* only)
};

// Quantification-oriented model selection: split the training data, score
// every configuration by mean AE on one shared set of validation samples,
// refit the winner on the full training data.
inline std::pair<MLQuantifier, SelectionReport> grid_search(const MultiLabelDataset& ds,
                                                            const PipelineSpec& base,
                                                            const GridSpec& grid,
                                                            const GridSearchOptions& opt,
                                                            std::uint64_t seed) {
  if (grid.dims.empty()) throw ConfigError("grid_search: grid must not be empty");
  if (opt.val_fraction <= 0.0 || opt.val_fraction >= 1.0)
    throw ConfigError("grid_search: val_fraction must be in (0,1)");
  if (opt.per_class &&
      (base.aggregator != AggregatorKind::PerClassBinary ||
       base.classifier != ClassifierKind::IndependentBinary))
    throw ConfigError("grid_search: per-class optimization requires the bc_ba family");

  std::vector<Sample> parts = iterative_stratified_split(
      ds, {1.0 - opt.val_fraction, opt.val_fraction}, derive_seed(seed, "modelsel_split"));
  MultiLabelDataset ltr = subset_rows(ds, parts[0].indices);
  MultiLabelDataset lva = subset_rows(ds, parts[1].indices);

  MLAPPParams params = opt.mlapp;
  if (params.grid.empty()) params.grid = make_grid(0.0, 0.05, 1.0);
  params.k = std::min(params.k, lva.n());
  params.seed = derive_seed(seed, "modelsel_val");
  std::vector<GeneratedSample> val_samples = mlapp_generate(lva, params);
  if (val_samples.empty())
    throw ConfigError("grid_search: validation sample set is empty");

  auto configs = grid.configurations();
  SelectionReport report;
  report.seed = seed;
  report.n_validation_samples = static_cast<int>(val_samples.size());

  const int L = ds.n_classes();
  // per_class_err[cfg][j]: summed absolute error of class j under config cfg.
  std::vector<std::vector<double>> per_class_err;
  std::vector<PipelineSpec> specs;

  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    SelectionRow row;
    row.index = static_cast<int>(ci);
    row.params = configs[ci];
    PipelineSpec spec = base;
    std::vector<double> cls_err(static_cast<std::size_t>(L), 0.0);
    try {
      for (const auto& [name, value] : configs[ci]) apply_grid_value(spec, name, value);
      spec.validate();
      MLQuantifier q;
      q.spec = spec;
      q.fit(ltr, derive_seed(seed, "modelsel_fit"));
      PoolContext ctx = q.prepare(lva.features);
      double total = 0.0;
      for (const GeneratedSample& s : val_samples) {
        PrevalenceVector est = q.quantify(ctx, s.sample.indices);
        total += ae_multilabel(s.true_prev, est);
        for (int j = 0; j < L; ++j)
          cls_err[static_cast<std::size_t>(j)] += std::abs(est.values[j] - s.true_prev.values[j]);
      }
      row.mean_ae = total / static_cast<double>(val_samples.size());
      row.n_samples = static_cast<int>(val_samples.size());
    } catch (const std::exception& e) {
      row.mean_ae = std::numeric_limits<double>::infinity();
      row.error = e.what();
    }
    specs.push_back(spec);
    per_class_err.push_back(std::move(cls_err));
    report.rows.push_back(std::move(row));
  }

  int best = -1;
  for (std::size_t ci = 0; ci < report.rows.size(); ++ci) {
    if (best < 0 || report.rows[ci].mean_ae < report.rows[static_cast<std::size_t>(best)].mean_ae)
      if (std::isfinite(report.rows[ci].mean_ae)) best = static_cast<int>(ci);
  }
  if (best < 0) throw ConfigError("grid_search: every configuration failed to fit");
  report.chosen_index = best;

  PipelineSpec winner = specs[static_cast<std::size_t>(best)];
  if (opt.per_class) {
    winner.per_class_gp.resize(static_cast<std::size_t>(L));
    report.per_class_choice.resize(static_cast<std::size_t>(L), -1);
    for (int j = 0; j < L; ++j) {
      int cls_best = -1;
      for (std::size_t ci = 0; ci < report.rows.size(); ++ci) {
        if (!std::isfinite(report.rows[ci].mean_ae)) continue;
        if (cls_best < 0 || per_class_err[ci][static_cast<std::size_t>(j)] <
                                per_class_err[static_cast<std::size_t>(cls_best)]
                                             [static_cast<std::size_t>(j)])
          cls_best = static_cast<int>(ci);
      }
      report.per_class_choice[static_cast<std::size_t>(j)] = cls_best;
      winner.per_class_gp[static_cast<std::size_t>(j)] =
          specs[static_cast<std::size_t>(cls_best)].binary_gp;
    }
  }

  MLQuantifier fitted;
  fitted.spec = winner;
  fitted.fit(ds, derive_seed(seed, "modelsel_refit"));
  return {std::move(fitted), std::move(report)};
}

}  // namespace mlquant
