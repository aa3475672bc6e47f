#pragma once

#include <Eigen/Cholesky>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mlquant/protocol.hpp"
#include "mlquant/quantify_base.hpp"
#include "mlquant/stratify.hpp"

namespace mlquant {

enum class Family { BcBa, MlcBa, BcMla, MlcMla };
enum class ClassifierKind { IndependentBinary, Stacked, Chain };
enum class AggregatorKind { PerClassBinary, RQ, LPQ };
enum class ClusterMethod { Random, KMeans };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::BcBa: return "bc_ba";
    case Family::MlcBa: return "mlc_ba";
    case Family::BcMla: return "bc_mla";
    case Family::MlcMla: return "mlc_mla";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "bc_ba") return Family::BcBa;
  if (s == "mlc_ba") return Family::MlcBa;
  if (s == "bc_mla") return Family::BcMla;
  if (s == "mlc_mla") return Family::MlcMla;
  throw ConfigError("unknown family '" + s + "'");
}

inline const char* classifier_kind_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::IndependentBinary: return "independent_binary";
    case ClassifierKind::Stacked: return "stacked";
    case ClassifierKind::Chain: return "chain";
  }
  return "?";
}

inline ClassifierKind classifier_kind_from_name(const std::string& s) {
  if (s == "independent_binary") return ClassifierKind::IndependentBinary;
  if (s == "stacked") return ClassifierKind::Stacked;
  if (s == "chain") return ClassifierKind::Chain;
  throw ConfigError("unknown classifier kind '" + s + "'");
}

inline const char* aggregator_name(AggregatorKind a) {
  switch (a) {
    case AggregatorKind::PerClassBinary: return "per_class_binary";
    case AggregatorKind::RQ: return "rq";
    case AggregatorKind::LPQ: return "lpq";
  }
  return "?";
}

inline AggregatorKind aggregator_from_name(const std::string& s) {
  if (s == "per_class_binary") return AggregatorKind::PerClassBinary;
  if (s == "rq") return AggregatorKind::RQ;
  if (s == "lpq") return AggregatorKind::LPQ;
  throw ConfigError("unknown aggregator '" + s + "'");
}

inline const char* cluster_method_name(ClusterMethod m) {
  return m == ClusterMethod::Random ? "random" : "kmeans";
}

inline ClusterMethod cluster_method_from_name(const std::string& s) {
  if (s == "random") return ClusterMethod::Random;
  if (s == "kmeans") return ClusterMethod::KMeans;
  throw ConfigError("unknown cluster method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Multi-output regressors for RQ
// ---------------------------------------------------------------------------

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual void fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) = 0;
  virtual Eigen::VectorXd predict(const Eigen::VectorXd& x) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

// Closed-form ridge with intercept: centered normal equations plus alpha*I.
class RidgeRegressor : public Regressor {
 public:
  explicit RidgeRegressor(double alpha = 1.0) : alpha_(alpha) {
    if (alpha < 0.0) throw ConfigError("RidgeRegressor: alpha must be >= 0");
  }

  void fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) override {
    if (X.rows() != Y.rows() || X.rows() == 0) throw DataError("RidgeRegressor: bad training set");
    Eigen::RowVectorXd xm = X.colwise().mean();
    Eigen::RowVectorXd ym = Y.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - xm;
    Eigen::MatrixXd Yc = Y.rowwise() - ym;
    Eigen::MatrixXd G = Xc.transpose() * Xc;
    G.diagonal().array() += alpha_;
    W_ = G.ldlt().solve(Xc.transpose() * Yc);
    b_ = (ym - xm * W_).transpose();
  }

  Eigen::VectorXd predict(const Eigen::VectorXd& x) const override {
    if (x.size() != W_.rows()) throw DataError("RidgeRegressor: dimension mismatch");
    return W_.transpose() * x + b_;
  }

  nlohmann::json to_json() const override {
    nlohmann::json j;
    j["kind"] = "ridge";
    j["alpha"] = alpha_;
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < W_.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(W_.cols()));
      for (int c = 0; c < W_.cols(); ++c) row[static_cast<std::size_t>(c)] = W_(i, c);
      rows.push_back(row);
    }
    j["W"] = rows;
    j["b"] = std::vector<double>(b_.data(), b_.data() + b_.size());
    return j;
  }

  void load(const nlohmann::json& j) {
    alpha_ = j.at("alpha").get<double>();
    const nlohmann::json& rows = j.at("W");
    int r = static_cast<int>(rows.size());
    if (r > 0) {
      std::vector<double> first = rows.at(0).get<std::vector<double>>();
      W_.resize(r, static_cast<long>(first.size()));
      for (int i = 0; i < r; ++i) {
        std::vector<double> row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        for (std::size_t c = 0; c < row.size(); ++c) W_(i, static_cast<long>(c)) = row[c];
      }
    }
    std::vector<double> b = j.at("b").get<std::vector<double>>();
    b_ = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<long>(b.size()));
  }

 private:
  double alpha_;
  Eigen::MatrixXd W_;  // d_in x d_out
  Eigen::VectorXd b_;
};

// Mean of the k nearest training targets (Euclidean; ties broken by index).
class KnnRegressor : public Regressor {
 public:
  explicit KnnRegressor(int k = 5) : k_(k) {
    if (k < 1) throw ConfigError("KnnRegressor: k must be >= 1");
  }

  void fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) override {
    if (X.rows() != Y.rows() || X.rows() == 0) throw DataError("KnnRegressor: bad training set");
    X_ = X;
    Y_ = Y;
  }

  Eigen::VectorXd predict(const Eigen::VectorXd& x) const override {
    if (x.size() != X_.cols()) throw DataError("KnnRegressor: dimension mismatch");
    const int l = static_cast<int>(X_.rows());
    std::vector<std::pair<double, int>> d(static_cast<std::size_t>(l));
    for (int i = 0; i < l; ++i)
      d[static_cast<std::size_t>(i)] = {(X_.row(i).transpose() - x).squaredNorm(), i};
    std::stable_sort(d.begin(), d.end());
    int take = std::min(k_, l);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(Y_.cols());
    for (int i = 0; i < take; ++i) out += Y_.row(d[static_cast<std::size_t>(i)].second).transpose();
    return out / static_cast<double>(take);
  }

  nlohmann::json to_json() const override {
    nlohmann::json j;
    j["kind"] = "knn";
    j["k"] = k_;
    auto mat = [](const Eigen::MatrixXd& M) {
      nlohmann::json rows = nlohmann::json::array();
      for (int i = 0; i < M.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(M.cols()));
        for (int c = 0; c < M.cols(); ++c) row[static_cast<std::size_t>(c)] = M(i, c);
        rows.push_back(row);
      }
      return rows;
    };
    j["X"] = mat(X_);
    j["Y"] = mat(Y_);
    return j;
  }

  void load(const nlohmann::json& j) {
    k_ = j.at("k").get<int>();
    auto mat = [](const nlohmann::json& rows) {
      Eigen::MatrixXd M;
      int r = static_cast<int>(rows.size());
      if (r > 0) {
        std::vector<double> first = rows.at(0).get<std::vector<double>>();
        M.resize(r, static_cast<long>(first.size()));
        for (int i = 0; i < r; ++i) {
          std::vector<double> row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
          for (std::size_t c = 0; c < row.size(); ++c) M(i, static_cast<long>(c)) = row[c];
        }
      }
      return M;
    };
    X_ = mat(j.at("X"));
    Y_ = mat(j.at("Y"));
  }

 private:
  int k_;
  Eigen::MatrixXd X_, Y_;
};

// Pass-through regressor; handy as a neutral element in tests.
class IdentityRegressor : public Regressor {
 public:
  void fit(const Eigen::MatrixXd&, const Eigen::MatrixXd&) override {}
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const override { return x; }
  nlohmann::json to_json() const override { return {{"kind", "identity"}}; }
};

inline std::unique_ptr<Regressor> regressor_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "ridge") {
    auto r = std::make_unique<RidgeRegressor>(j.at("alpha").get<double>());
    r->load(j);
    return r;
  }
  if (kind == "knn") {
    auto r = std::make_unique<KnnRegressor>(j.at("k").get<int>());
    r->load(j);
    return r;
  }
  if (kind == "identity") return std::make_unique<IdentityRegressor>();
  throw ConfigError("unknown regressor kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Class clustering for LPQ
// ---------------------------------------------------------------------------

// Disjoint clusters covering all classes. Random mode shuffles and deals
// round-robin; kmeans treats each class as the binary vector of datapoints it
// labels and runs seeded Lloyd iterations.
inline std::vector<std::vector<int>> cluster_classes(const MultiLabelDataset& ds,
                                                     ClusterMethod method, int k_clusters,
                                                     std::uint64_t seed) {
  const int L = ds.n_classes();
  if (k_clusters < 1 || k_clusters > L)
    throw ConfigError("cluster_classes: k_clusters must be in [1, n_classes]");
  std::vector<std::vector<int>> clusters;
  if (k_clusters == L) {
    for (int j = 0; j < L; ++j) clusters.push_back({j});
    return clusters;
  }
  if (k_clusters == 1) {
    std::vector<int> all(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) all[static_cast<std::size_t>(j)] = j;
    clusters.push_back(std::move(all));
    return clusters;
  }

  if (method == ClusterMethod::Random) {
    Rng rng = substream(seed, "cluster_random");
    std::vector<int> ids(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) ids[static_cast<std::size_t>(j)] = j;
    rng.shuffle(ids);
    clusters.resize(static_cast<std::size_t>(k_clusters));
    for (int i = 0; i < L; ++i)
      clusters[static_cast<std::size_t>(i % k_clusters)].push_back(ids[static_cast<std::size_t>(i)]);
  } else {
    // Classes as points: columns of the label matrix.
    const int n = ds.n();
    Eigen::MatrixXd pts(L, n);
    for (int j = 0; j < L; ++j)
      for (int i = 0; i < n; ++i) pts(j, i) = static_cast<double>(ds.labels(i, j));
    Rng rng = substream(seed, "cluster_kmeans");
    std::vector<int> init = rng.sample_without_replacement(L, k_clusters);
    Eigen::MatrixXd centroids(k_clusters, n);
    for (int c = 0; c < k_clusters; ++c) centroids.row(c) = pts.row(init[static_cast<std::size_t>(c)]);
    std::vector<int> assign(static_cast<std::size_t>(L), -1);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (int j = 0; j < L; ++j) {
        int best = 0;
        double best_d = (pts.row(j) - centroids.row(0)).squaredNorm();
        for (int c = 1; c < k_clusters; ++c) {
          double d = (pts.row(j) - centroids.row(c)).squaredNorm();
          if (d < best_d - 1e-12) {
            best = c;
            best_d = d;
          }
        }
        if (assign[static_cast<std::size_t>(j)] != best) {
          assign[static_cast<std::size_t>(j)] = best;
          changed = true;
        }
      }
      // Re-seed empty clusters with the class farthest from its centroid.
      for (int c = 0; c < k_clusters; ++c) {
        bool empty = true;
        for (int j = 0; j < L; ++j)
          if (assign[static_cast<std::size_t>(j)] == c) empty = false;
        if (!empty) continue;
        int far = -1;
        double far_d = -1.0;
        for (int j = 0; j < L; ++j) {
          int a = assign[static_cast<std::size_t>(j)];
          double d = (pts.row(j) - centroids.row(a)).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = j;
          }
        }
        assign[static_cast<std::size_t>(far)] = c;
        centroids.row(c) = pts.row(far);
        changed = true;
      }
      for (int c = 0; c < k_clusters; ++c) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(n);
        int cnt = 0;
        for (int j = 0; j < L; ++j) {
          if (assign[static_cast<std::size_t>(j)] == c) {
            mean += pts.row(j);
            ++cnt;
          }
        }
        if (cnt > 0) centroids.row(c) = mean / static_cast<double>(cnt);
      }
      if (!changed) break;
    }
    clusters.resize(static_cast<std::size_t>(k_clusters));
    for (int j = 0; j < L; ++j) clusters[static_cast<std::size_t>(assign[static_cast<std::size_t>(j)])].push_back(j);
    clusters.erase(std::remove_if(clusters.begin(), clusters.end(),
                                  [](const std::vector<int>& c) { return c.empty(); }),
                   clusters.end());
  }
  for (std::vector<int>& c : clusters) std::sort(c.begin(), c.end());
  std::sort(clusters.begin(), clusters.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) { return a[0] < b[0]; });
  return clusters;
}

// ---------------------------------------------------------------------------
// Pipeline spec and fitted pipeline
// ---------------------------------------------------------------------------

struct PipelineSpec {
  Family family = Family::BcBa;
  ClassifierKind classifier = ClassifierKind::IndependentBinary;
  BaseMethod base_method = BaseMethod::PCC;
  AggregatorKind aggregator = AggregatorKind::PerClassBinary;

  BinaryGridPoint binary_gp;                  // independent binaries / chain links
  MetaGridPoint meta_gp;                      // stacked meta layer
  std::vector<BinaryGridPoint> per_class_gp;  // optional per-class override (bc_* route)
  std::vector<int> chain_order;               // optional; default natural order
  int cv_folds = 5;

  // RQ
  std::string regressor = "ridge";   // ridge | knn
  double ridge_alpha = 1.0;
  int knn_k = 5;
  double split_fraction_for_R = 0.4;
  MLAPPParams r_mlapp;               // grid defaults to 0:0.05:1 when empty

  // LPQ
  ClusterMethod cluster_method = ClusterMethod::Random;
  int k_clusters = 1;
  BaseMethod lpq_base = BaseMethod::PCC;
  BinaryGridPoint lpq_gp;

  void validate() const {
    bool bc = family == Family::BcBa || family == Family::BcMla;
    if (bc && classifier != ClassifierKind::IndependentBinary)
      throw ConfigError("bc_* families require the independent_binary classifier");
    if (!bc && classifier == ClassifierKind::IndependentBinary)
      throw ConfigError("mlc_* families require a stacked or chain classifier");
    bool ba = family == Family::BcBa || family == Family::MlcBa;
    if (ba && aggregator != AggregatorKind::PerClassBinary)
      throw ConfigError("*_ba families use the per_class_binary aggregator");
    if (!ba && aggregator == AggregatorKind::PerClassBinary)
      throw ConfigError("*_mla families need an rq or lpq aggregator");
    if (split_fraction_for_R <= 0.0 || split_fraction_for_R >= 1.0)
      throw ConfigError("split_fraction_for_R must be in (0,1)");
    if (regressor != "ridge" && regressor != "knn")
      throw ConfigError("unknown regressor '" + regressor + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["family"] = family_name(family);
    j["classifier"] = classifier_kind_name(classifier);
    j["base_method"] = base_method_name(base_method);
    j["aggregator"] = aggregator_name(aggregator);
    j["c"] = binary_gp.c;
    j["class_weight"] = class_weight_name(binary_gp.class_weight);
    j["meta_c"] = meta_gp.c;
    j["meta_class_weight"] = class_weight_name(meta_gp.class_weight);
    j["normalize"] = meta_gp.normalize;
    j["cv_folds"] = cv_folds;
    if (!per_class_gp.empty()) {
      nlohmann::json arr = nlohmann::json::array();
      for (const BinaryGridPoint& g : per_class_gp)
        arr.push_back({{"c", g.c}, {"class_weight", class_weight_name(g.class_weight)}});
      j["per_class"] = arr;
    }
    if (!chain_order.empty()) j["chain_order"] = chain_order;
    if (aggregator == AggregatorKind::RQ) {
      j["regressor"] = regressor;
      j["ridge_alpha"] = ridge_alpha;
      j["knn_k"] = knn_k;
      j["split_fraction_for_R"] = split_fraction_for_R;
      j["r_mlapp"] = {{"k", r_mlapp.k}, {"m", r_mlapp.m}, {"grid", r_mlapp.grid}};
    }
    if (aggregator == AggregatorKind::LPQ) {
      j["cluster_method"] = cluster_method_name(cluster_method);
      j["k_clusters"] = k_clusters;
      j["lpq_base"] = base_method_name(lpq_base);
      j["lpq_c"] = lpq_gp.c;
      j["lpq_class_weight"] = class_weight_name(lpq_gp.class_weight);
    }
    return j;
  }

  static PipelineSpec from_json(const nlohmann::json& j) {
    PipelineSpec s;
    s.family = family_from_name(j.at("family").get<std::string>());
    s.classifier = classifier_kind_from_name(j.at("classifier").get<std::string>());
    s.base_method = base_method_from_name(j.at("base_method").get<std::string>());
    s.aggregator = aggregator_from_name(j.at("aggregator").get<std::string>());
    s.binary_gp.c = j.value("c", 1.0);
    s.binary_gp.class_weight = class_weight_from_name(j.value("class_weight", std::string("none")));
    s.meta_gp.c = j.value("meta_c", 1.0);
    s.meta_gp.class_weight =
        class_weight_from_name(j.value("meta_class_weight", std::string("none")));
    s.meta_gp.normalize = j.value("normalize", false);
    s.cv_folds = j.value("cv_folds", 5);
    if (j.contains("per_class")) {
      for (const nlohmann::json& g : j.at("per_class")) {
        BinaryGridPoint gp;
        gp.c = g.at("c").get<double>();
        gp.class_weight = class_weight_from_name(g.at("class_weight").get<std::string>());
        s.per_class_gp.push_back(gp);
      }
    }
    if (j.contains("chain_order")) s.chain_order = j.at("chain_order").get<std::vector<int>>();
    if (s.aggregator == AggregatorKind::RQ) {
      s.regressor = j.value("regressor", std::string("ridge"));
      s.ridge_alpha = j.value("ridge_alpha", 1.0);
      s.knn_k = j.value("knn_k", 5);
      s.split_fraction_for_R = j.value("split_fraction_for_R", 0.4);
      if (j.contains("r_mlapp")) {
        s.r_mlapp.k = j.at("r_mlapp").value("k", 100);
        s.r_mlapp.m = j.at("r_mlapp").value("m", 1);
        if (j.at("r_mlapp").contains("grid"))
          s.r_mlapp.grid = j.at("r_mlapp").at("grid").get<std::vector<double>>();
      }
    }
    if (s.aggregator == AggregatorKind::LPQ) {
      s.cluster_method = cluster_method_from_name(j.value("cluster_method", std::string("random")));
      s.k_clusters = j.value("k_clusters", 1);
      s.lpq_base = base_method_from_name(j.value("lpq_base", std::string("pcc")));
      s.lpq_gp.c = j.value("lpq_c", 1.0);
      s.lpq_gp.class_weight =
          class_weight_from_name(j.value("lpq_class_weight", std::string("none")));
    }
    return s;
  }
};

// Posterior matrices precomputed over an evaluation pool so that quantifying
// many samples from the same pool stays cheap.
struct PoolContext {
  Eigen::MatrixXd posteriors;               // per-class route
  std::vector<Eigen::MatrixXd> lpq;         // per-cluster synthetic posteriors
  std::unique_ptr<PoolContext> base;        // RQ base context
};

inline Eigen::MatrixXd matrix_rows(const Eigen::MatrixXd& M, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<long>(rows.size()), M.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<long>(r)) = M.row(rows[r]);
  return out;
}

class MLQuantifier {
 public:
  PipelineSpec spec;

  // per-class route
  std::unique_ptr<MultiLabelClassifier> classifier;
  std::vector<BinaryClassQuantifier> per_class;

  // RQ route
  std::unique_ptr<MLQuantifier> rq_base;
  std::unique_ptr<Regressor> regressor;

  // LPQ route
  struct LpqCluster {
    std::vector<int> classes;            // ascending original class ids
    std::vector<std::uint64_t> masks;    // observed labelsets, ascending mask value
    SingleLabelQuantifier quantifier;

    // Assignment matrix A: rows = synthetic classes, columns = cluster classes.
    Eigen::MatrixXd assignment() const {
      Eigen::MatrixXd A(static_cast<long>(masks.size()), static_cast<long>(classes.size()));
      for (std::size_t i = 0; i < masks.size(); ++i)
        for (std::size_t jj = 0; jj < classes.size(); ++jj)
          A(static_cast<long>(i), static_cast<long>(jj)) =
              (masks[i] >> jj) & 1ULL ? 1.0 : 0.0;
      return A;
    }
  };
  std::vector<LpqCluster> lpq_clusters;

  int n_classes_ = 0;
  int n_classes() const { return n_classes_; }

  void fit(const MultiLabelDataset& ds, std::uint64_t seed) {
    spec.validate();
    n_classes_ = ds.n_classes();
    switch (spec.aggregator) {
      case AggregatorKind::PerClassBinary: fit_per_class(ds, seed); break;
      case AggregatorKind::RQ: fit_rq_route(ds, seed); break;
      case AggregatorKind::LPQ: fit_lpq_route(ds, seed); break;
    }
  }

  PoolContext prepare(const SparseFeatures& X) const {
    PoolContext ctx;
    switch (spec.aggregator) {
      case AggregatorKind::PerClassBinary:
        ctx.posteriors = classifier->posteriors(X);
        break;
      case AggregatorKind::RQ:
        ctx.base = std::make_unique<PoolContext>(rq_base->prepare(X));
        break;
      case AggregatorKind::LPQ:
        for (const LpqCluster& c : lpq_clusters)
          ctx.lpq.push_back(c.quantifier.pool_posteriors(X));
        break;
    }
    return ctx;
  }

  // Multi-label prevalence estimate for a sample given by pool row indices.
  PrevalenceVector quantify(const PoolContext& ctx, const std::vector<int>& indices) const {
    PrevalenceVector out;
    out.kind = PrevalenceVector::Kind::MultiLabel;
    switch (spec.aggregator) {
      case AggregatorKind::PerClassBinary: {
        out.values.resize(n_classes_);
        Eigen::MatrixXd rows = matrix_rows(ctx.posteriors, indices);
        for (int j = 0; j < n_classes_; ++j)
          out.values[j] = per_class[static_cast<std::size_t>(j)].quantify(rows.col(j));
        break;
      }
      case AggregatorKind::RQ: {
        PrevalenceVector base_est = rq_base->quantify(*ctx.base, indices);
        Eigen::VectorXd corrected = regressor->predict(base_est.values);
        out.values.resize(corrected.size());
        for (int j = 0; j < corrected.size(); ++j) out.values[j] = clip(corrected[j], 0.0, 1.0);
        break;
      }
      case AggregatorKind::LPQ: {
        out.values = Eigen::VectorXd::Zero(n_classes_);
        for (std::size_t ci = 0; ci < lpq_clusters.size(); ++ci) {
          const LpqCluster& c = lpq_clusters[ci];
          Eigen::MatrixXd rows = matrix_rows(ctx.lpq[ci], indices);
          PrevalenceVector est = c.quantifier.quantify_rows(rows);
          Eigen::VectorXd per_cls = c.assignment().transpose() * est.values;
          for (std::size_t jj = 0; jj < c.classes.size(); ++jj)
            out.values[c.classes[jj]] = per_cls[static_cast<long>(jj)];
        }
        break;
      }
    }
    return out;
  }

  PrevalenceVector quantify_dataset(const MultiLabelDataset& ds) const {
    PoolContext ctx = prepare(ds.features);
    return quantify(ctx, full_sample(ds).indices);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["tool_version"] = kVersion;
    j["spec"] = spec.to_json();
    j["n_classes"] = n_classes_;
    switch (spec.aggregator) {
      case AggregatorKind::PerClassBinary: {
        j["classifier"] = classifier->to_json();
        nlohmann::json arr = nlohmann::json::array();
        for (const BinaryClassQuantifier& q : per_class) arr.push_back(q.to_json());
        j["per_class"] = arr;
        break;
      }
      case AggregatorKind::RQ:
        j["rq_base"] = rq_base->to_json();
        j["regressor"] = regressor->to_json();
        break;
      case AggregatorKind::LPQ: {
        nlohmann::json arr = nlohmann::json::array();
        for (const LpqCluster& c : lpq_clusters) {
          nlohmann::json cj;
          cj["classes"] = c.classes;
          std::vector<std::string> masks;
          for (std::uint64_t m : c.masks) masks.push_back(std::to_string(m));
          cj["masks"] = masks;
          cj["quantifier"] = c.quantifier.to_json();
          arr.push_back(cj);
        }
        j["clusters"] = arr;
        break;
      }
    }
    return j;
  }

  static MLQuantifier from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
      throw ConfigError("unsupported pipeline format_version");
    MLQuantifier q;
    q.spec = PipelineSpec::from_json(j.at("spec"));
    q.n_classes_ = j.at("n_classes").get<int>();
    switch (q.spec.aggregator) {
      case AggregatorKind::PerClassBinary: {
        q.classifier = classifier_from_json(j.at("classifier"));
        for (const nlohmann::json& pj : j.at("per_class"))
          q.per_class.push_back(BinaryClassQuantifier::from_json(pj));
        break;
      }
      case AggregatorKind::RQ:
        q.rq_base = std::make_unique<MLQuantifier>(from_json(j.at("rq_base")));
        q.regressor = regressor_from_json(j.at("regressor"));
        break;
      case AggregatorKind::LPQ: {
        for (const nlohmann::json& cj : j.at("clusters")) {
          LpqCluster c;
          c.classes = cj.at("classes").get<std::vector<int>>();
          for (const nlohmann::json& m : cj.at("masks"))
            c.masks.push_back(std::stoull(m.get<std::string>()));
          c.quantifier = SingleLabelQuantifier::from_json(cj.at("quantifier"));
          q.lpq_clusters.push_back(std::move(c));
        }
        break;
      }
    }
    return q;
  }

 private:
  std::unique_ptr<MultiLabelClassifier> train_classifier(const MultiLabelDataset& ds,
                                                         std::uint64_t seed) const {
    switch (spec.classifier) {
      case ClassifierKind::IndependentBinary: {
        if (!spec.per_class_gp.empty()) {
          if (static_cast<int>(spec.per_class_gp.size()) != ds.n_classes())
            throw ConfigError("per_class grid points must match class count");
          auto clf = std::make_unique<IndependentBinaryClassifier>();
          FeatureView A;
          A.sparse = &ds.features;
          for (int j = 0; j < ds.n_classes(); ++j) {
            std::vector<std::uint8_t> yj;
            for (int i = 0; i < ds.n(); ++i) yj.push_back(ds.labels(i, j));
            const BinaryGridPoint& gp = spec.per_class_gp[static_cast<std::size_t>(j)];
            clf->models.push_back(train_binary_lr_or_constant(A, yj, gp.c, gp.class_weight, seed));
          }
          return clf;
        }
        return train_independent_binary(ds, spec.binary_gp, seed);
      }
      case ClassifierKind::Stacked:
        return train_stacked(ds, spec.cv_folds, spec.meta_gp, seed);
      case ClassifierKind::Chain: {
        std::vector<int> order = spec.chain_order;
        if (order.empty()) {
          order.resize(static_cast<std::size_t>(ds.n_classes()));
          for (int j = 0; j < ds.n_classes(); ++j) order[static_cast<std::size_t>(j)] = j;
        }
        return train_chain(ds, order, spec.binary_gp, seed);
      }
    }
    throw ConfigError("unknown classifier kind");
  }

  // Out-of-fold posteriors of the pipeline's classifier (any kind), for
  // misclassification-rate estimation.
  Eigen::MatrixXd classifier_oof_posteriors(const MultiLabelDataset& ds,
                                            std::uint64_t seed) const {
    const int folds = spec.cv_folds;
    std::vector<int> fold_of =
        stratified_fold_ids(ds.labels, folds, derive_seed(seed, "quantifier_cv"));
    Eigen::MatrixXd P(ds.n(), ds.n_classes());
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train_rows, test_rows;
      for (int i = 0; i < ds.n(); ++i)
        (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
      if (test_rows.empty()) continue;
      if (train_rows.empty()) throw DataError("classifier_oof_posteriors: empty training fold");
      MultiLabelDataset sub = subset_rows(ds, train_rows);
      std::unique_ptr<MultiLabelClassifier> m = train_classifier(sub, derive_seed(seed, "fold"));
      SparseFeatures Xte = sparse_rows(ds.features, test_rows);
      Eigen::MatrixXd p = m->posteriors(Xte);
      for (std::size_t t = 0; t < test_rows.size(); ++t)
        P.row(test_rows[t]) = p.row(static_cast<long>(t));
    }
    return P;
  }

  void fit_per_class(const MultiLabelDataset& ds, std::uint64_t seed) {
    classifier = train_classifier(ds, seed);
    bool needs_oof =
        spec.base_method == BaseMethod::ACC || spec.base_method == BaseMethod::PACC;
    Eigen::MatrixXd oof;
    if (needs_oof) oof = classifier_oof_posteriors(ds, seed);
    per_class.clear();
    for (int j = 0; j < ds.n_classes(); ++j) {
      std::vector<std::uint8_t> yj;
      for (int i = 0; i < ds.n(); ++i) yj.push_back(ds.labels(i, j));
      Eigen::VectorXd col =
          needs_oof ? Eigen::VectorXd(oof.col(j)) : Eigen::VectorXd::Zero(ds.n());
      per_class.push_back(BinaryClassQuantifier::fit(spec.base_method, col, yj));
    }
  }

  void fit_rq_route(const MultiLabelDataset& ds, std::uint64_t seed) {
    double fr = spec.split_fraction_for_R;
    std::vector<Sample> parts =
        iterative_stratified_split(ds, {1.0 - fr, fr}, derive_seed(seed, "rq_split"));
    MultiLabelDataset lq = subset_rows(ds, parts[0].indices);
    MultiLabelDataset lr = subset_rows(ds, parts[1].indices);

    rq_base = std::make_unique<MLQuantifier>();
    rq_base->spec = spec;
    rq_base->spec.aggregator = AggregatorKind::PerClassBinary;
    rq_base->spec.family = spec.classifier == ClassifierKind::IndependentBinary
                               ? Family::BcBa
                               : Family::MlcBa;
    rq_base->fit(lq, derive_seed(seed, "rq_base"));

    MLAPPParams params = spec.r_mlapp;
    if (params.grid.empty()) params.grid = make_grid(0.0, 0.05, 1.0);
    params.k = std::min(params.k, lr.n());
    params.seed = derive_seed(seed, "rq_mlapp");
    std::vector<GeneratedSample> samples = mlapp_generate(lr, params);
    if (samples.empty())
      throw ConfigError("fit_rq: regression set is empty (every class/grid pair was skipped)");

    PoolContext ctx = rq_base->prepare(lr.features);
    Eigen::MatrixXd Est(static_cast<long>(samples.size()), ds.n_classes());
    Eigen::MatrixXd True(static_cast<long>(samples.size()), ds.n_classes());
    for (std::size_t s = 0; s < samples.size(); ++s) {
      Est.row(static_cast<long>(s)) =
          rq_base->quantify(ctx, samples[s].sample.indices).values.transpose();
      True.row(static_cast<long>(s)) = samples[s].true_prev.values.transpose();
    }
    if (spec.regressor == "ridge")
      regressor = std::make_unique<RidgeRegressor>(spec.ridge_alpha);
    else
      regressor = std::make_unique<KnnRegressor>(spec.knn_k);
    regressor->fit(Est, True);
  }

  void fit_lpq_route(const MultiLabelDataset& ds, std::uint64_t seed) {
    std::vector<std::vector<int>> clusters =
        cluster_classes(ds, spec.cluster_method, spec.k_clusters, derive_seed(seed, "clusters"));
    lpq_clusters.clear();
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
      LpqCluster c;
      c.classes = clusters[ci];
      if (c.classes.size() > 60)
        throw ConfigError("fit_lpq: cluster too large (limit 60 classes)");
      // Observed labelsets, as bitmasks over the cluster's class order.
      std::map<std::uint64_t, int> dict;
      std::vector<std::uint64_t> row_mask(static_cast<std::size_t>(ds.n()), 0);
      for (int i = 0; i < ds.n(); ++i) {
        std::uint64_t mask = 0;
        for (std::size_t jj = 0; jj < c.classes.size(); ++jj)
          if (ds.labels(i, c.classes[jj])) mask |= 1ULL << jj;
        row_mask[static_cast<std::size_t>(i)] = mask;
        dict.emplace(mask, 0);
      }
      int next_id = 0;
      for (auto& [mask, id] : dict) {  // std::map keeps masks ascending
        id = next_id++;
        c.masks.push_back(mask);
      }
      std::vector<int> sids(static_cast<std::size_t>(ds.n()));
      for (int i = 0; i < ds.n(); ++i)
        sids[static_cast<std::size_t>(i)] = dict[row_mask[static_cast<std::size_t>(i)]];
      c.quantifier = SingleLabelQuantifier::fit(
          spec.lpq_base, ds.features, sids, static_cast<int>(c.masks.size()), spec.lpq_gp,
          spec.cv_folds, derive_seed(seed, "lpq/" + std::to_string(ci)));
      lpq_clusters.push_back(std::move(c));
    }
  }
};

// ---------------------------------------------------------------------------
// Convenience constructors for the four families
// ---------------------------------------------------------------------------

inline MLQuantifier fit_bc_ba(const MultiLabelDataset& ds, BaseMethod base,
                              const BinaryGridPoint& gp, std::uint64_t seed) {
  MLQuantifier q;
  q.spec.family = Family::BcBa;
  q.spec.classifier = ClassifierKind::IndependentBinary;
  q.spec.aggregator = AggregatorKind::PerClassBinary;
  q.spec.base_method = base;
  q.spec.binary_gp = gp;
  q.fit(ds, seed);
  return q;
}

inline MLQuantifier fit_mlc_ba(const MultiLabelDataset& ds, ClassifierKind kind, BaseMethod base,
                               const MetaGridPoint& meta_gp, std::uint64_t seed) {
  if (kind == ClassifierKind::IndependentBinary)
    throw ConfigError("fit_mlc_ba: classifier must be stacked or chain");
  MLQuantifier q;
  q.spec.family = Family::MlcBa;
  q.spec.classifier = kind;
  q.spec.aggregator = AggregatorKind::PerClassBinary;
  q.spec.base_method = base;
  q.spec.meta_gp = meta_gp;
  q.spec.binary_gp = BinaryGridPoint{meta_gp.c, meta_gp.class_weight};
  q.fit(ds, seed);
  return q;
}

inline MLQuantifier fit_rq(const MultiLabelDataset& ds, const PipelineSpec& base_spec,
                           const std::string& regressor, double ridge_alpha, int knn_k,
                           const MLAPPParams& r_mlapp, std::uint64_t seed) {
  MLQuantifier q;
  q.spec = base_spec;
  q.spec.aggregator = AggregatorKind::RQ;
  q.spec.family = base_spec.classifier == ClassifierKind::IndependentBinary ? Family::BcMla
                                                                            : Family::MlcMla;
  q.spec.regressor = regressor;
  q.spec.ridge_alpha = ridge_alpha;
  q.spec.knn_k = knn_k;
  q.spec.r_mlapp = r_mlapp;
  q.fit(ds, seed);
  return q;
}

inline MLQuantifier fit_lpq(const MultiLabelDataset& ds, ClusterMethod method, int k_clusters,
                            BaseMethod lpq_base, const BinaryGridPoint& gp, std::uint64_t seed) {
  MLQuantifier q;
  q.spec.family = Family::BcMla;
  q.spec.classifier = ClassifierKind::IndependentBinary;
  q.spec.aggregator = AggregatorKind::LPQ;
  q.spec.cluster_method = method;
  q.spec.k_clusters = k_clusters;
  q.spec.lpq_base = lpq_base;
  q.spec.lpq_gp = gp;
  q.fit(ds, seed);
  return q;
}

}  // namespace mlquant
