#pragma once

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mlquant/metrics.hpp"
#include "mlquant/modelsel.hpp"
#include "mlquant/synth.hpp"

namespace mlquant {

struct MethodConfig {
  std::string name;
  PipelineSpec spec;

  nlohmann::json to_json() const {
    nlohmann::json j = spec.to_json();
    j["name"] = name;
    return j;
  }

  static MethodConfig from_json(const nlohmann::json& j) {
    MethodConfig m;
    m.spec = PipelineSpec::from_json(j);
    m.name = j.value("name", std::string());
    if (m.name.empty()) {
      m.name = std::string(family_name(m.spec.family)) + "_" +
               base_method_name(m.spec.base_method);
      if (m.spec.aggregator == AggregatorKind::RQ) m.name += "_rq_" + m.spec.regressor;
      if (m.spec.aggregator == AggregatorKind::LPQ) m.name += "_lpq";
    }
    return m;
  }
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string train_path;
  std::string test_path;
  bool use_synth = false;
  SynthConfig synth;
  int synth_train_rows = 5000;
  int synth_test_rows = 5000;
  int remove_rare = 0;  // drop classes with fewer training positives; 0 = keep all
  MLAPPParams mlapp;    // test sample generation; grid defaults to 0:0.05:1
  std::vector<MethodConfig> methods;
  bool gridsearch_enabled = false;
  GridSearchOptions gridsearch;
  GridSpec grid;  // empty: per-method defaults
  std::uint64_t seed = 42;

  void validate() const {
    if (methods.empty()) throw ConfigError("experiment: methods must not be empty");
    if (!use_synth && (train_path.empty() || test_path.empty()))
      throw ConfigError("experiment: train and test paths required unless synth is used");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    if (use_synth) {
      j["synth"] = synth.to_json();
      j["synth_train_rows"] = synth_train_rows;
      j["synth_test_rows"] = synth_test_rows;
    } else {
      j["train"] = train_path;
      j["test"] = test_path;
    }
    j["remove_rare"] = remove_rare;
    j["mlapp"] = {{"k", mlapp.k}, {"m", mlapp.m}, {"grid", mlapp.grid}};
    nlohmann::json ms = nlohmann::json::array();
    for (const MethodConfig& m : methods) ms.push_back(m.to_json());
    j["methods"] = ms;
    j["gridsearch"] = {{"enabled", gridsearch_enabled},
                       {"val_fraction", gridsearch.val_fraction},
                       {"per_class", gridsearch.per_class},
                       {"mlapp",
                        {{"k", gridsearch.mlapp.k},
                         {"m", gridsearch.mlapp.m},
                         {"grid", gridsearch.mlapp.grid}}}};
    if (!grid.dims.empty()) j["grid"] = grid.to_json();
    j["seed"] = seed;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.name = j.value("name", std::string("experiment"));
    if (j.contains("synth")) {
      c.use_synth = true;
      c.synth = SynthConfig::from_json(j.at("synth"));
      c.synth_train_rows = j.value("synth_train_rows", 5000);
      c.synth_test_rows = j.value("synth_test_rows", 5000);
    } else {
      c.train_path = j.value("train", std::string());
      c.test_path = j.value("test", std::string());
    }
    c.remove_rare = j.value("remove_rare", 0);
    if (j.contains("mlapp")) {
      c.mlapp.k = j.at("mlapp").value("k", 100);
      c.mlapp.m = j.at("mlapp").value("m", 1);
      if (j.at("mlapp").contains("grid"))
        c.mlapp.grid = j.at("mlapp").at("grid").get<std::vector<double>>();
    }
    if (!j.contains("methods")) throw ConfigError("experiment: 'methods' missing");
    for (const nlohmann::json& m : j.at("methods")) c.methods.push_back(MethodConfig::from_json(m));
    if (j.contains("gridsearch")) {
      const nlohmann::json& gs = j.at("gridsearch");
      c.gridsearch_enabled = gs.value("enabled", false);
      c.gridsearch.val_fraction = gs.value("val_fraction", 0.4);
      c.gridsearch.per_class = gs.value("per_class", false);
      if (gs.contains("mlapp")) {
        c.gridsearch.mlapp.k = gs.at("mlapp").value("k", 100);
        c.gridsearch.mlapp.m = gs.at("mlapp").value("m", 1);
        if (gs.at("mlapp").contains("grid"))
          c.gridsearch.mlapp.grid = gs.at("mlapp").at("grid").get<std::vector<double>>();
      }
    }
    if (j.contains("grid")) c.grid = GridSpec::from_json(j.at("grid"));
    c.seed = j.value("seed", 42ULL);
    c.validate();
    return c;
  }

  std::uint64_t config_hash() const { return fnv1a64(to_json().dump()); }

  std::string dataset_label() const {
    if (use_synth) return "synth:" + synth.mode;
    std::string base = train_path;
    std::size_t slash = base.find_last_of('/');
    if (slash != std::string::npos) base = base.substr(slash + 1);
    return base;
  }
};

struct ResultRecord {
  std::string dataset;
  std::string method;
  Family family = Family::BcBa;
  ClassifierKind classifier = ClassifierKind::IndependentBinary;
  BaseMethod base_method = BaseMethod::PCC;
  AggregatorKind aggregator = AggregatorKind::PerClassBinary;
  std::string bin;  // low | mid | high | error
  double mean_ae = 0.0;
  double mean_rae = 0.0;
  long n_samples = 0;
  double wall_ms = 0.0;  // reported in timings only, never in results.csv
  std::string error;
};

struct ExperimentOutput {
  std::vector<ResultRecord> records;
  std::string results_csv;
  std::string estimates_csv;
  std::string samples_csv;
  std::string timings;  // not a CSV: wall times vary run to run
  std::vector<std::pair<std::string, std::string>> selection_csvs;  // per method
  std::uint64_t config_hash = 0;
};

// Full pipeline for every configured method against one shared set of test
// samples. Deterministic given (config, seed): rerunning reproduces every CSV
// byte for byte. Wall times go to a separate non-CSV report.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentOutput out;
  out.config_hash = cfg.config_hash();
  const std::string hash_hex = to_hex(out.config_hash);
  const std::string label = cfg.dataset_label();

  MultiLabelDataset train, test;
  if (cfg.use_synth) {
    train = synth_generate(cfg.synth, cfg.synth_train_rows, derive_seed(cfg.seed, "synth_train"));
    test = synth_generate(cfg.synth, cfg.synth_test_rows, derive_seed(cfg.seed, "synth_test"));
  } else {
    train = load_dataset(cfg.train_path);
    test = load_dataset(cfg.test_path);
    if (train.n_classes() != test.n_classes())
      throw DataError("experiment: train and test class counts differ");
    if (train.d() != test.d()) {
      long d = std::max(train.d(), test.d());
      train.features.conservativeResize(train.n(), d);
      test.features.conservativeResize(test.n(), d);
    }
  }
  if (cfg.remove_rare > 0) {
    RareClassResult rr = remove_rare_classes(train, cfg.remove_rare);
    train = std::move(rr.dataset);
    test = select_classes(test, rr.kept_classes);
  }

  PrevalenceVector train_prev = true_prevalence(train);

  MLAPPParams params = cfg.mlapp;
  if (params.grid.empty()) params.grid = make_grid(0.0, 0.05, 1.0);
  params.k = std::min(params.k, test.n());
  params.seed = derive_seed(cfg.seed, "test_samples");
  std::vector<GeneratedSample> samples = mlapp_generate(test, params);
  if (samples.empty()) throw DataError("experiment: no test samples could be generated");
  fill_shifts(samples, train_prev);
  ShiftBinning binning = bin_shifts(samples);

  {
    std::ostringstream ss;
    write_samples_csv(samples, ss, hash_hex, cfg.seed);
    out.samples_csv = ss.str();
  }

  std::ostringstream est;
  est << "# mlquant " << kVersion << "\n# config " << hash_hex << "\n# seed " << cfg.seed << "\n";
  est << "method,sample_id,bin,true,estimate\n";

  std::ostringstream tim;
  tim << "mlquant " << kVersion << " timings (ms)\n";

  for (const MethodConfig& m : cfg.methods) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<ResultRecord> method_records;
    std::ostringstream method_est;
    try {
      MLQuantifier q;
      if (cfg.gridsearch_enabled) {
        GridSpec grid = cfg.grid.dims.empty()
                            ? GridSpec::defaults_for(m.spec, train.n_classes())
                            : cfg.grid;
        auto [fitted, report] =
            grid_search(train, m.spec, grid, cfg.gridsearch, derive_seed(cfg.seed, "modelsel/" + m.name));
        q = std::move(fitted);
        std::ostringstream rep;
        report.write_csv(rep);
        out.selection_csvs.emplace_back(m.name, rep.str());
      } else {
        q.spec = m.spec;
        q.fit(train, derive_seed(cfg.seed, "fit/" + m.name));
      }

      PoolContext ctx = q.prepare(test.features);
      std::vector<double> aes, raes;
      std::vector<int> bins;
      for (std::size_t s = 0; s < samples.size(); ++s) {
        PrevalenceVector estv = q.quantify(ctx, samples[s].sample.indices);
        int n_sample = static_cast<int>(samples[s].sample.indices.size());
        aes.push_back(ae_multilabel(samples[s].true_prev, estv));
        raes.push_back(rae_multilabel(samples[s].true_prev, estv, n_sample));
        bins.push_back(binning.bin_of[s]);
        method_est << m.name << ',' << s << ',' << ShiftBinning::bin_name(binning.bin_of[s])
                   << ',';
        for (int j = 0; j < samples[s].true_prev.values.size(); ++j) {
          if (j) method_est << ' ';
          method_est << format_double(samples[s].true_prev.values[j]);
        }
        method_est << ',';
        for (int j = 0; j < estv.values.size(); ++j) {
          if (j) method_est << ' ';
          method_est << format_double(estv.values[j]);
        }
        method_est << '\n';
      }
      est << method_est.str();
      auto ae_bins = aggregate_by_bin(bins, aes, 3);
      auto rae_bins = aggregate_by_bin(bins, raes, 3);
      for (int b = 0; b < 3; ++b) {
        if (!ae_bins[static_cast<std::size_t>(b)]) continue;
        ResultRecord r;
        r.dataset = label;
        r.method = m.name;
        r.family = m.spec.family;
        r.classifier = m.spec.classifier;
        r.base_method = m.spec.base_method;
        r.aggregator = m.spec.aggregator;
        r.bin = ShiftBinning::bin_name(b);
        r.mean_ae = ae_bins[static_cast<std::size_t>(b)]->mean;
        r.mean_rae = rae_bins[static_cast<std::size_t>(b)]->mean;
        r.n_samples = ae_bins[static_cast<std::size_t>(b)]->count;
        method_records.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      ResultRecord r;
      r.dataset = label;
      r.method = m.name;
      r.family = m.spec.family;
      r.classifier = m.spec.classifier;
      r.base_method = m.spec.base_method;
      r.aggregator = m.spec.aggregator;
      r.bin = "error";
      r.error = e.what();
      method_records = {std::move(r)};
    }
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    for (ResultRecord& r : method_records) r.wall_ms = ms;
    tim << m.name << ' ' << format_double(ms) << '\n';
    for (ResultRecord& r : method_records) out.records.push_back(std::move(r));
  }

  std::ostringstream res;
  res << "# mlquant " << kVersion << "\n# config " << hash_hex << "\n# seed " << cfg.seed << "\n";
  res << "dataset,method,family,classifier,base_method,aggregator,bin,mean_ae,mean_rae,n_samples,"
         "error\n";
  for (const ResultRecord& r : out.records) {
    res << r.dataset << ',' << r.method << ',' << family_name(r.family) << ','
        << classifier_kind_name(r.classifier) << ',' << base_method_name(r.base_method) << ','
        << aggregator_name(r.aggregator) << ',' << r.bin << ',';
    if (r.bin == "error")
      res << ",,0," << r.error << '\n';
    else
      res << format_double(r.mean_ae) << ',' << format_double(r.mean_rae) << ',' << r.n_samples
          << ",\n";
  }
  out.results_csv = res.str();
  out.estimates_csv = est.str();
  out.timings = tim.str();
  return out;
}

// Table-style markdown summary: methods as rows, shift bins as columns.
inline std::string render_markdown(const std::vector<ResultRecord>& records) {
  std::ostringstream md;
  md << "| method | family | low AE | mid AE | high AE | low RAE | mid RAE | high RAE |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  std::vector<std::string> seen;
  for (const ResultRecord& r : records) {
    if (std::find(seen.begin(), seen.end(), r.method) != seen.end()) continue;
    seen.push_back(r.method);
    double ae[3] = {0, 0, 0}, rae[3] = {0, 0, 0};
    bool has[3] = {false, false, false}, failed = false;
    std::string family;
    for (const ResultRecord& q : records) {
      if (q.method != r.method) continue;
      family = family_name(q.family);
      if (q.bin == "error") {
        failed = true;
        continue;
      }
      for (int b = 0; b < 3; ++b) {
        if (q.bin == ShiftBinning::bin_name(b)) {
          ae[b] = q.mean_ae;
          rae[b] = q.mean_rae;
          has[b] = true;
        }
      }
    }
    md << "| " << r.method << " | " << family << " |";
    for (int b = 0; b < 3; ++b)
      md << ' ' << (has[b] ? format_double(ae[b]) : (failed ? "error" : "-")) << " |";
    for (int b = 0; b < 3; ++b)
      md << ' ' << (has[b] ? format_double(rae[b]) : (failed ? "error" : "-")) << " |";
    md << '\n';
  }
  return md.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << content;
}

inline void write_experiment_outputs(const ExperimentOutput& out, const std::string& dir) {
  std::string base = dir.empty() ? std::string(".") : dir;
  write_text_file(base + "/results.csv", out.results_csv);
  write_text_file(base + "/estimates.csv", out.estimates_csv);
  write_text_file(base + "/samples.csv", out.samples_csv);
  write_text_file(base + "/timings.txt", out.timings);
  for (const auto& [name, content] : out.selection_csvs)
    write_text_file(base + "/selection_" + name + ".csv", content);
}

}  // namespace mlquant
