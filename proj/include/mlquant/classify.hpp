#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mlquant/dataset.hpp"
#include "mlquant/rng.hpp"
#include "mlquant/stratify.hpp"

namespace mlquant {

enum class ClassWeight { None, Balanced };

inline const char* class_weight_name(ClassWeight cw) {
  return cw == ClassWeight::Balanced ? "balanced" : "none";
}

inline ClassWeight class_weight_from_name(const std::string& s) {
  if (s == "none") return ClassWeight::None;
  if (s == "balanced") return ClassWeight::Balanced;
  throw ConfigError("unknown class_weight '" + s + "'");
}

// Design-matrix view: sparse base features with an optional dense augmentation
// block (stacked meta inputs, chain predictions), plus optional per-column
// standardization applied algebraically so sparse data never densifies.
struct FeatureView {
  const SparseFeatures* sparse = nullptr;
  const Eigen::MatrixXd* dense = nullptr;
  const Eigen::VectorXd* mean = nullptr;       // standardization, size cols()
  const Eigen::VectorXd* inv_scale = nullptr;  // 1/stddev, zero-variance cols use 1

  int rows() const {
    if (sparse) return static_cast<int>(sparse->rows());
    if (dense) return static_cast<int>(dense->rows());
    return 0;
  }
  int sparse_cols() const { return sparse ? static_cast<int>(sparse->cols()) : 0; }
  int dense_cols() const { return dense ? static_cast<int>(dense->cols()) : 0; }
  int cols() const { return sparse_cols() + dense_cols(); }
  bool standardized() const { return mean != nullptr; }

  Eigen::VectorXd raw_apply(const Eigen::VectorXd& w) const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(rows());
    if (sparse) s += (*sparse) * w.head(sparse_cols());
    if (dense) s += (*dense) * w.tail(dense_cols());
    return s;
  }

  // Scores A_eff * w + bias where A_eff is the (possibly standardized) design.
  Eigen::VectorXd scores(const Eigen::VectorXd& w, double bias) const {
    if (w.size() != cols()) throw DataError("FeatureView: weight dimension mismatch");
    if (!standardized()) {
      Eigen::VectorXd s = raw_apply(w);
      s.array() += bias;
      return s;
    }
    Eigen::VectorXd weff = w.cwiseProduct(*inv_scale);
    Eigen::VectorXd s = raw_apply(weff);
    s.array() += bias - mean->dot(weff);
    return s;
  }

  // A_eff^T * r.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& r) const {
    Eigen::VectorXd g(cols());
    if (sparse) g.head(sparse_cols()) = sparse->transpose() * r;
    if (dense) g.tail(dense_cols()) = dense->transpose() * r;
    if (standardized()) g = inv_scale->cwiseProduct(g - (*mean) * r.sum());
    return g;
  }

  void column_stats(Eigen::VectorXd& out_mean, Eigen::VectorXd& out_inv_scale) const {
    const int n = rows();
    const int D = cols();
    out_mean = Eigen::VectorXd::Zero(D);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(D);
    if (sparse) {
      for (int i = 0; i < sparse->rows(); ++i)
        for (SparseFeatures::InnerIterator it(*sparse, i); it; ++it) {
          out_mean[it.col()] += it.value();
          sq[it.col()] += it.value() * it.value();
        }
    }
    if (dense) {
      int off = sparse_cols();
      for (int j = 0; j < dense->cols(); ++j) {
        out_mean[off + j] = dense->col(j).sum();
        sq[off + j] = dense->col(j).squaredNorm();
      }
    }
    out_mean /= static_cast<double>(n);
    out_inv_scale.resize(D);
    for (int j = 0; j < D; ++j) {
      double var = sq[j] / static_cast<double>(n) - out_mean[j] * out_mean[j];
      out_inv_scale[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

struct BinaryLRModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double c = 1.0;
  ClassWeight class_weight = ClassWeight::None;
  bool constant_fallback = false;

  Eigen::VectorXd posterior(const FeatureView& A) const {
    Eigen::VectorXd s = A.scores(weights, bias);
    for (int i = 0; i < s.size(); ++i) s[i] = sigmoid(s[i]);
    return s;
  }

  Eigen::VectorXd posterior(const SparseFeatures& X) const {
    FeatureView A;
    A.sparse = &X;
    return posterior(A);
  }
};

namespace detail {

inline Eigen::VectorXd example_weights_binary(const std::vector<std::uint8_t>& y, ClassWeight cw) {
  const int n = static_cast<int>(y.size());
  long pos = 0;
  for (std::uint8_t v : y) pos += v;
  long neg = n - pos;
  Eigen::VectorXd a = Eigen::VectorXd::Ones(n);
  if (cw == ClassWeight::Balanced && pos > 0 && neg > 0) {
    double wp = static_cast<double>(n) / (2.0 * static_cast<double>(pos));
    double wn = static_cast<double>(n) / (2.0 * static_cast<double>(neg));
    for (int i = 0; i < n; ++i) a[i] = y[static_cast<std::size_t>(i)] ? wp : wn;
  }
  return a;
}

inline Eigen::VectorXd example_weights_softmax(const std::vector<int>& y, int n_classes,
                                               ClassWeight cw) {
  const int n = static_cast<int>(y.size());
  Eigen::VectorXd a = Eigen::VectorXd::Ones(n);
  if (cw != ClassWeight::Balanced) return a;
  std::vector<long> counts(static_cast<std::size_t>(n_classes), 0);
  for (int v : y) ++counts[static_cast<std::size_t>(v)];
  int present = 0;
  for (long cnt : counts) present += cnt > 0;
  for (int i = 0; i < n; ++i)
    a[i] = static_cast<double>(n) /
           (static_cast<double>(present) *
            static_cast<double>(counts[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])]));
  return a;
}

// Monotone full-batch gradient descent with Armijo backtracking; the initial
// step of each iteration comes from a safeguarded Barzilai-Borwein formula.
// `eval` returns the loss and fills the gradient. Deterministic, zero init.
template <typename EvalFn>
inline Eigen::VectorXd minimize_gd(int dim, const EvalFn& eval, int max_iter, double grad_tol) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd g(dim), prev_x(dim), prev_g(dim);
  double loss = eval(x, &g);
  double t = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    double ginf = g.lpNorm<Eigen::Infinity>();
    if (ginf < grad_tol) break;
    double gg = g.squaredNorm();
    if (iter == 0) {
      t = 1.0 / (1.0 + std::sqrt(gg));
    } else {
      Eigen::VectorXd s = x - prev_x;
      Eigen::VectorXd yv = g - prev_g;
      double sy = s.dot(yv);
      double yy = yv.squaredNorm();
      double bb = (sy > 0.0 && yy > 0.0) ? sy / yy : t * 2.0;
      if (!std::isfinite(bb) || bb <= 0.0) bb = t * 2.0;
      t = clip(bb, 1e-12, 1e12);
    }
    prev_x = x;
    prev_g = g;
    bool moved = false;
    for (int bt = 0; bt < 80; ++bt) {
      Eigen::VectorXd cand = x - t * g;
      double cand_loss = eval(cand, nullptr);
      if (cand_loss <= loss - 1e-4 * t * gg) {
        x = std::move(cand);
        loss = eval(x, &g);
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;  // no descent at machine precision
  }
  return x;
}

}  // namespace detail

// Weighted binary logistic objective (penalty ||w||^2 / (2c), bias
// unregularized) and its analytic gradient at x = (w, b). Scaled by 1/n so
// gradient tolerances mean the same thing at every dataset size. Training
// minimizes exactly this function; it is exposed so gradient diagnostics can
// probe arbitrary points.
inline double binary_lr_objective(const FeatureView& A, const Eigen::VectorXd& yv,
                                  const Eigen::VectorXd& alpha, double c,
                                  const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr) {
  const int n = A.rows();
  const int D = A.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd w = x.head(D);
  double b = x[D];
  Eigen::VectorXd z = A.scores(w, b);
  double loss = w.squaredNorm() * inv_n / (2.0 * c);
  for (int i = 0; i < n; ++i) loss += inv_n * alpha[i] * (softplus(z[i]) - yv[i] * z[i]);
  if (grad) {
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r[i] = inv_n * alpha[i] * (sigmoid(z[i]) - yv[i]);
    grad->resize(D + 1);
    grad->head(D) = A.apply_transpose(r) + w * (inv_n / c);
    (*grad)[D] = r.sum();
  }
  return loss;
}

// L2-regularized weighted logistic regression via full-batch descent on
// binary_lr_objective.
inline BinaryLRModel train_binary_lr(const FeatureView& A, const std::vector<std::uint8_t>& y,
                                     double c, ClassWeight class_weight,
                                     std::uint64_t /*seed*/ = 0) {
  const int n = A.rows();
  if (static_cast<int>(y.size()) != n) throw DataError("train_binary_lr: label size mismatch");
  if (c <= 0.0) throw ConfigError("train_binary_lr: c must be positive");
  long pos = 0;
  for (std::uint8_t v : y) pos += v;
  if (pos == 0 || pos == n)
    throw DataError("train_binary_lr: single-class input (use constant fallback)");

  const int D = A.cols();
  Eigen::VectorXd alpha = detail::example_weights_binary(y, class_weight);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) yv[i] = static_cast<double>(y[static_cast<std::size_t>(i)]);

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
    return binary_lr_objective(A, yv, alpha, c, x, grad);
  };

  Eigen::VectorXd x = detail::minimize_gd(D + 1, eval, 2000, 1e-6);
  BinaryLRModel m;
  m.weights = x.head(D);
  m.bias = x[D];
  m.c = c;
  m.class_weight = class_weight;
  return m;
}

inline BinaryLRModel train_binary_lr(const SparseFeatures& X, const std::vector<std::uint8_t>& y,
                                     double c, ClassWeight class_weight, std::uint64_t seed = 0) {
  FeatureView A;
  A.sparse = &X;
  return train_binary_lr(A, y, c, class_weight, seed);
}

// Constant-posterior model for degenerate (single-class) training columns: a
// zero-weight LR whose bias is the logit of the clamped empirical base rate.
inline BinaryLRModel constant_binary_model(int dim, double rate, double c,
                                           ClassWeight class_weight) {
  double r = clip(rate, 1e-4, 1.0 - 1e-4);
  BinaryLRModel m;
  m.weights = Eigen::VectorXd::Zero(dim);
  m.bias = std::log(r / (1.0 - r));
  m.c = c;
  m.class_weight = class_weight;
  m.constant_fallback = true;
  return m;
}

inline BinaryLRModel train_binary_lr_or_constant(const FeatureView& A,
                                                 const std::vector<std::uint8_t>& y, double c,
                                                 ClassWeight class_weight,
                                                 std::uint64_t seed = 0) {
  long pos = 0;
  for (std::uint8_t v : y) pos += v;
  if (pos == 0 || pos == static_cast<long>(y.size()))
    return constant_binary_model(A.cols(), static_cast<double>(pos) / static_cast<double>(y.size()),
                                 c, class_weight);
  return train_binary_lr(A, y, c, class_weight, seed);
}

struct SoftmaxLRModel {
  Eigen::MatrixXd weights;  // n_classes x d
  Eigen::VectorXd biases;   // n_classes
  double c = 1.0;
  ClassWeight class_weight = ClassWeight::None;
  bool constant_fallback = false;
  Eigen::VectorXd constant_distribution;  // used only by the fallback

  int n_classes() const {
    return constant_fallback ? static_cast<int>(constant_distribution.size())
                             : static_cast<int>(weights.rows());
  }

  // Rows on the simplex.
  Eigen::MatrixXd posterior(const FeatureView& A) const {
    const int n = A.rows();
    const int K = n_classes();
    Eigen::MatrixXd P(n, K);
    if (constant_fallback) {
      for (int i = 0; i < n; ++i) P.row(i) = constant_distribution.transpose();
      return P;
    }
    for (int k = 0; k < K; ++k) P.col(k) = A.scores(weights.row(k).transpose(), biases[k]);
    for (int i = 0; i < n; ++i) {
      double mx = P.row(i).maxCoeff();
      double denom = 0.0;
      for (int k = 0; k < K; ++k) {
        P(i, k) = std::exp(P(i, k) - mx);
        denom += P(i, k);
      }
      P.row(i) /= denom;
    }
    return P;
  }

  Eigen::MatrixXd posterior(const SparseFeatures& X) const {
    FeatureView A;
    A.sparse = &X;
    return posterior(A);
  }
};

// Weighted softmax cross-entropy objective and analytic gradient at x, with
// layout: K rows of D weights, then K biases. Scaled by 1/n like the binary
// objective; training minimizes exactly this function.
inline double softmax_lr_objective(const FeatureView& A, const std::vector<int>& y, int n_classes,
                                   const Eigen::VectorXd& alpha, double c,
                                   const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr) {
  const int n = A.rows();
  const int K = n_classes;
  const int D = A.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd Z(n, K);
  for (int k = 0; k < K; ++k)
    Z.col(k) = A.scores(x.segment(static_cast<long>(k) * D, D), x[static_cast<long>(K) * D + k]);
  double loss = x.head(static_cast<long>(K) * D).squaredNorm() * inv_n / (2.0 * c);
  Eigen::MatrixXd P(n, K);
  for (int i = 0; i < n; ++i) {
    double mx = Z.row(i).maxCoeff();
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(Z(i, k) - mx);
    double lse = mx + std::log(denom);
    loss += inv_n * alpha[i] * (lse - Z(i, y[static_cast<std::size_t>(i)]));
    for (int k = 0; k < K; ++k) P(i, k) = std::exp(Z(i, k) - lse);
  }
  if (grad) {
    grad->resize(x.size());
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd r(n);
      for (int i = 0; i < n; ++i)
        r[i] = inv_n * alpha[i] * (P(i, k) - (y[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0));
      grad->segment(static_cast<long>(k) * D, D) =
          A.apply_transpose(r) + x.segment(static_cast<long>(k) * D, D) * (inv_n / c);
      (*grad)[static_cast<long>(K) * D + k] = r.sum();
    }
  }
  return loss;
}

inline SoftmaxLRModel train_softmax_lr(const FeatureView& A, const std::vector<int>& y,
                                       int n_classes, double c, ClassWeight class_weight,
                                       std::uint64_t /*seed*/ = 0) {
  const int n = A.rows();
  const int K = n_classes;
  const int D = A.cols();
  if (static_cast<int>(y.size()) != n) throw DataError("train_softmax_lr: label size mismatch");
  if (c <= 0.0) throw ConfigError("train_softmax_lr: c must be positive");
  std::vector<long> counts(static_cast<std::size_t>(K), 0);
  for (int v : y) {
    if (v < 0 || v >= K) throw DataError("train_softmax_lr: class id out of range");
    ++counts[static_cast<std::size_t>(v)];
  }
  int present = 0;
  for (long cnt : counts) present += cnt > 0;
  if (present < 2) throw DataError("train_softmax_lr: single-class input (use constant fallback)");

  Eigen::VectorXd alpha = detail::example_weights_softmax(y, K, class_weight);

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
    return softmax_lr_objective(A, y, K, alpha, c, x, grad);
  };

  Eigen::VectorXd x = detail::minimize_gd(K * D + K, eval, 2000, 1e-6);
  SoftmaxLRModel m;
  m.weights.resize(K, D);
  for (int k = 0; k < K; ++k) m.weights.row(k) = x.segment(static_cast<long>(k) * D, D).transpose();
  m.biases = x.tail(K);
  m.c = c;
  m.class_weight = class_weight;
  return m;
}

inline SoftmaxLRModel train_softmax_lr(const SparseFeatures& X, const std::vector<int>& y,
                                       int n_classes, double c, ClassWeight class_weight,
                                       std::uint64_t seed = 0) {
  FeatureView A;
  A.sparse = &X;
  return train_softmax_lr(A, y, n_classes, c, class_weight, seed);
}

inline SoftmaxLRModel constant_softmax_model(const Eigen::VectorXd& distribution, double c,
                                             ClassWeight class_weight) {
  SoftmaxLRModel m;
  m.constant_fallback = true;
  Eigen::VectorXd d = distribution;
  for (int i = 0; i < d.size(); ++i) d[i] = std::max(d[i], 1e-12);
  m.constant_distribution = d / d.sum();
  m.c = c;
  m.class_weight = class_weight;
  return m;
}

inline SoftmaxLRModel train_softmax_lr_or_constant(const FeatureView& A, const std::vector<int>& y,
                                                   int n_classes, double c,
                                                   ClassWeight class_weight,
                                                   std::uint64_t seed = 0) {
  std::vector<long> counts(static_cast<std::size_t>(n_classes), 0);
  for (int v : y) ++counts[static_cast<std::size_t>(v)];
  int present = 0;
  for (long cnt : counts) present += cnt > 0;
  if (present < 2) {
    Eigen::VectorXd d(n_classes);
    for (int k = 0; k < n_classes; ++k)
      d[k] = static_cast<double>(counts[static_cast<std::size_t>(k)]) /
             static_cast<double>(std::max<std::size_t>(y.size(), 1));
    return constant_softmax_model(d, c, class_weight);
  }
  return train_softmax_lr(A, y, n_classes, c, class_weight, seed);
}

inline SparseFeatures sparse_rows(const SparseFeatures& X, const std::vector<int>& rows) {
  SparseFeatures out(static_cast<int>(rows.size()), X.cols());
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (SparseFeatures::InnerIterator it(X, rows[r]); it; ++it)
      trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Out-of-fold one-vs-rest posteriors: every row scored by a model whose
// training fold excluded it. Folds come from iterative stratification.
inline Eigen::MatrixXd cv_posteriors_binary(const SparseFeatures& X, const LabelMatrix& Y,
                                            int folds, double c, ClassWeight class_weight,
                                            std::uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  const int L = static_cast<int>(Y.cols());
  std::vector<int> fold_of = stratified_fold_ids(Y, folds, derive_seed(seed, "cv_folds"));
  Eigen::MatrixXd P(n, L);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
    if (test_rows.empty()) continue;
    if (train_rows.empty()) throw DataError("cv_posteriors: empty training fold");
    SparseFeatures Xtr = sparse_rows(X, train_rows);
    SparseFeatures Xte = sparse_rows(X, test_rows);
    for (int j = 0; j < L; ++j) {
      std::vector<std::uint8_t> yj;
      yj.reserve(train_rows.size());
      for (int i : train_rows) yj.push_back(Y(i, j));
      FeatureView A;
      A.sparse = &Xtr;
      BinaryLRModel m = train_binary_lr_or_constant(A, yj, c, class_weight, seed);
      Eigen::VectorXd p = m.posterior(Xte);
      for (std::size_t t = 0; t < test_rows.size(); ++t)
        P(test_rows[t], j) = p[static_cast<int>(t)];
    }
  }
  return P;
}

// Out-of-fold softmax posteriors for single-label data (LPQ synthetic classes).
inline Eigen::MatrixXd cv_posteriors_softmax(const SparseFeatures& X, const std::vector<int>& y,
                                             int n_classes, int folds, double c,
                                             ClassWeight class_weight, std::uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  LabelMatrix onehot = LabelMatrix::Zero(n, n_classes);
  for (int i = 0; i < n; ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1;
  std::vector<int> fold_of = stratified_fold_ids(onehot, folds, derive_seed(seed, "cv_folds"));
  Eigen::MatrixXd P(n, n_classes);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
    if (test_rows.empty()) continue;
    if (train_rows.empty()) throw DataError("cv_posteriors: empty training fold");
    SparseFeatures Xtr = sparse_rows(X, train_rows);
    SparseFeatures Xte = sparse_rows(X, test_rows);
    std::vector<int> ytr;
    ytr.reserve(train_rows.size());
    for (int i : train_rows) ytr.push_back(y[static_cast<std::size_t>(i)]);
    FeatureView A;
    A.sparse = &Xtr;
    SoftmaxLRModel m = train_softmax_lr_or_constant(A, ytr, n_classes, c, class_weight, seed);
    Eigen::MatrixXd p = m.posterior(Xte);
    for (std::size_t t = 0; t < test_rows.size(); ++t) P.row(test_rows[t]) = p.row(static_cast<int>(t));
  }
  return P;
}

// ---------------------------------------------------------------------------
// Multi-label classifiers
// ---------------------------------------------------------------------------

class MultiLabelClassifier {
 public:
  virtual ~MultiLabelClassifier() = default;
  virtual int n_classes() const = 0;
  // Multi-label posterior matrix: entries in [0,1], rows unconstrained.
  virtual Eigen::MatrixXd posteriors(const SparseFeatures& X) const = 0;
  virtual nlohmann::json to_json() const = 0;

  LabelMatrix hard_predictions(const SparseFeatures& X) const {
    Eigen::MatrixXd P = posteriors(X);
    LabelMatrix H(P.rows(), P.cols());
    for (int i = 0; i < P.rows(); ++i)
      for (int j = 0; j < P.cols(); ++j) H(i, j) = P(i, j) >= 0.5 ? 1 : 0;
    return H;
  }
};

struct BinaryGridPoint {
  double c = 1.0;
  ClassWeight class_weight = ClassWeight::None;
};

struct MetaGridPoint {
  double c = 1.0;
  ClassWeight class_weight = ClassWeight::None;
  bool normalize = false;
};

namespace detail {

inline nlohmann::json binary_model_to_json(const BinaryLRModel& m) {
  nlohmann::json j;
  j["weights"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
  j["bias"] = m.bias;
  j["c"] = m.c;
  j["class_weight"] = class_weight_name(m.class_weight);
  j["constant_fallback"] = m.constant_fallback;
  return j;
}

inline BinaryLRModel binary_model_from_json(const nlohmann::json& j) {
  BinaryLRModel m;
  std::vector<double> w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<long>(w.size()));
  m.bias = j.at("bias").get<double>();
  m.c = j.at("c").get<double>();
  m.class_weight = class_weight_from_name(j.at("class_weight").get<std::string>());
  m.constant_fallback = j.at("constant_fallback").get<bool>();
  return m;
}

inline nlohmann::json softmax_model_to_json(const SoftmaxLRModel& m) {
  nlohmann::json j;
  j["constant_fallback"] = m.constant_fallback;
  j["c"] = m.c;
  j["class_weight"] = class_weight_name(m.class_weight);
  if (m.constant_fallback) {
    j["distribution"] = std::vector<double>(
        m.constant_distribution.data(),
        m.constant_distribution.data() + m.constant_distribution.size());
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (int k = 0; k < m.weights.rows(); ++k) {
      Eigen::VectorXd row = m.weights.row(k).transpose();
      rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["weights"] = rows;
    j["biases"] = std::vector<double>(m.biases.data(), m.biases.data() + m.biases.size());
  }
  return j;
}

inline SoftmaxLRModel softmax_model_from_json(const nlohmann::json& j) {
  SoftmaxLRModel m;
  m.constant_fallback = j.at("constant_fallback").get<bool>();
  m.c = j.at("c").get<double>();
  m.class_weight = class_weight_from_name(j.at("class_weight").get<std::string>());
  if (m.constant_fallback) {
    std::vector<double> d = j.at("distribution").get<std::vector<double>>();
    m.constant_distribution = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<long>(d.size()));
  } else {
    const nlohmann::json& rows = j.at("weights");
    int K = static_cast<int>(rows.size());
    std::vector<double> first = rows.at(0).get<std::vector<double>>();
    m.weights.resize(K, static_cast<long>(first.size()));
    for (int k = 0; k < K; ++k) {
      std::vector<double> row = rows.at(static_cast<std::size_t>(k)).get<std::vector<double>>();
      m.weights.row(k) = Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<long>(row.size())).transpose();
    }
    std::vector<double> b = j.at("biases").get<std::vector<double>>();
    m.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<long>(b.size()));
  }
  return m;
}

}  // namespace detail

// Independent one-vs-rest binary LRs (the BC route).
class IndependentBinaryClassifier : public MultiLabelClassifier {
 public:
  std::vector<BinaryLRModel> models;

  int n_classes() const override { return static_cast<int>(models.size()); }

  Eigen::MatrixXd posteriors(const SparseFeatures& X) const override {
    Eigen::MatrixXd P(X.rows(), n_classes());
    for (int j = 0; j < n_classes(); ++j)
      P.col(j) = models[static_cast<std::size_t>(j)].posterior(X);
    return P;
  }

  nlohmann::json to_json() const override {
    nlohmann::json j;
    j["kind"] = "independent_binary";
    nlohmann::json arr = nlohmann::json::array();
    for (const BinaryLRModel& m : models) arr.push_back(detail::binary_model_to_json(m));
    j["models"] = arr;
    return j;
  }
};

inline std::unique_ptr<IndependentBinaryClassifier> train_independent_binary(
    const MultiLabelDataset& ds, const BinaryGridPoint& gp, std::uint64_t seed) {
  auto clf = std::make_unique<IndependentBinaryClassifier>();
  clf->models.reserve(static_cast<std::size_t>(ds.n_classes()));
  FeatureView A;
  A.sparse = &ds.features;
  for (int j = 0; j < ds.n_classes(); ++j) {
    std::vector<std::uint8_t> yj;
    yj.reserve(static_cast<std::size_t>(ds.n()));
    for (int i = 0; i < ds.n(); ++i) yj.push_back(ds.labels(i, j));
    clf->models.push_back(train_binary_lr_or_constant(A, yj, gp.c, gp.class_weight, seed));
  }
  return clf;
}

// Stacked generalization: per-class base LRs plus a per-class meta LR over
// [X | out-of-fold base posteriors], optionally standardized per column.
class StackedClassifier : public MultiLabelClassifier {
 public:
  std::vector<BinaryLRModel> base;
  std::vector<BinaryLRModel> meta;
  bool normalize = false;
  int folds = 5;
  Eigen::VectorXd norm_mean, norm_inv_scale;  // size d + n when normalize

  int n_classes() const override { return static_cast<int>(meta.size()); }

  Eigen::MatrixXd base_posteriors(const SparseFeatures& X) const {
    Eigen::MatrixXd P(X.rows(), static_cast<int>(base.size()));
    for (std::size_t j = 0; j < base.size(); ++j)
      P.col(static_cast<int>(j)) = base[j].posterior(X);
    return P;
  }

  Eigen::MatrixXd posteriors(const SparseFeatures& X) const override {
    Eigen::MatrixXd Pb = base_posteriors(X);
    FeatureView A;
    A.sparse = &X;
    A.dense = &Pb;
    if (normalize) {
      A.mean = &norm_mean;
      A.inv_scale = &norm_inv_scale;
    }
    Eigen::MatrixXd P(X.rows(), n_classes());
    for (int j = 0; j < n_classes(); ++j)
      P.col(j) = meta[static_cast<std::size_t>(j)].posterior(A);
    return P;
  }

  nlohmann::json to_json() const override {
    nlohmann::json j;
    j["kind"] = "stacked";
    nlohmann::json b = nlohmann::json::array(), m = nlohmann::json::array();
    for (const BinaryLRModel& x : base) b.push_back(detail::binary_model_to_json(x));
    for (const BinaryLRModel& x : meta) m.push_back(detail::binary_model_to_json(x));
    j["base"] = b;
    j["meta"] = m;
    j["normalize"] = normalize;
    j["folds"] = folds;
    if (normalize) {
      j["norm_mean"] =
          std::vector<double>(norm_mean.data(), norm_mean.data() + norm_mean.size());
      j["norm_inv_scale"] = std::vector<double>(norm_inv_scale.data(),
                                                norm_inv_scale.data() + norm_inv_scale.size());
    }
    return j;
  }
};

// Base members keep fixed defaults (c=1, no class weighting); only the meta
// layer takes the grid point.
inline constexpr BinaryGridPoint kStackedBaseDefaults{1.0, ClassWeight::None};

inline std::unique_ptr<StackedClassifier> train_stacked(const MultiLabelDataset& ds, int folds,
                                                        const MetaGridPoint& meta_gp,
                                                        std::uint64_t seed) {
  if (folds < 2) throw ConfigError("train_stacked: folds must be >= 2");
  auto clf = std::make_unique<StackedClassifier>();
  clf->normalize = meta_gp.normalize;
  clf->folds = folds;
  FeatureView A;
  A.sparse = &ds.features;
  for (int j = 0; j < ds.n_classes(); ++j) {
    std::vector<std::uint8_t> yj;
    for (int i = 0; i < ds.n(); ++i) yj.push_back(ds.labels(i, j));
    clf->base.push_back(train_binary_lr_or_constant(A, yj, kStackedBaseDefaults.c,
                                                    kStackedBaseDefaults.class_weight, seed));
  }
  Eigen::MatrixXd cvP =
      cv_posteriors_binary(ds.features, ds.labels, folds, kStackedBaseDefaults.c,
                           kStackedBaseDefaults.class_weight, derive_seed(seed, "stacked"));
  FeatureView M;
  M.sparse = &ds.features;
  M.dense = &cvP;
  if (meta_gp.normalize) {
    M.column_stats(clf->norm_mean, clf->norm_inv_scale);
    M.mean = &clf->norm_mean;
    M.inv_scale = &clf->norm_inv_scale;
  }
  for (int j = 0; j < ds.n_classes(); ++j) {
    std::vector<std::uint8_t> yj;
    for (int i = 0; i < ds.n(); ++i) yj.push_back(ds.labels(i, j));
    clf->meta.push_back(
        train_binary_lr_or_constant(M, yj, meta_gp.c, meta_gp.class_weight, seed));
  }
  return clf;
}

// Classifier chain: link i consumes X augmented with the hard predictions of
// links 0..i-1 (in-sample hard predictions at training time).
class ChainClassifier : public MultiLabelClassifier {
 public:
  std::vector<BinaryLRModel> links;  // in chain order
  std::vector<int> order;            // order[i] = class handled by link i

  int n_classes() const override { return static_cast<int>(links.size()); }

  Eigen::MatrixXd posteriors(const SparseFeatures& X) const override {
    const int n = static_cast<int>(X.rows());
    const int L = n_classes();
    Eigen::MatrixXd P(n, L);
    Eigen::MatrixXd aug(n, 0);
    for (int i = 0; i < L; ++i) {
      FeatureView A;
      A.sparse = &X;
      if (aug.cols() > 0) A.dense = &aug;
      Eigen::VectorXd p = links[static_cast<std::size_t>(i)].posterior(A);
      P.col(order[static_cast<std::size_t>(i)]) = p;
      aug.conservativeResize(n, aug.cols() + 1);
      for (int r = 0; r < n; ++r) aug(r, aug.cols() - 1) = p[r] >= 0.5 ? 1.0 : 0.0;
    }
    return P;
  }

  nlohmann::json to_json() const override {
    nlohmann::json j;
    j["kind"] = "chain";
    j["order"] = order;
    nlohmann::json arr = nlohmann::json::array();
    for (const BinaryLRModel& m : links) arr.push_back(detail::binary_model_to_json(m));
    j["links"] = arr;
    return j;
  }
};

inline std::unique_ptr<ChainClassifier> train_chain(const MultiLabelDataset& ds,
                                                    const std::vector<int>& order,
                                                    const BinaryGridPoint& gp,
                                                    std::uint64_t seed) {
  const int L = ds.n_classes();
  if (static_cast<int>(order.size()) != L) throw ConfigError("train_chain: order size mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(L), false);
  for (int v : order) {
    if (v < 0 || v >= L || seen[static_cast<std::size_t>(v)])
      throw ConfigError("train_chain: order is not a permutation");
    seen[static_cast<std::size_t>(v)] = true;
  }
  auto clf = std::make_unique<ChainClassifier>();
  clf->order = order;
  const int n = ds.n();
  Eigen::MatrixXd aug(n, 0);
  for (int i = 0; i < L; ++i) {
    FeatureView A;
    A.sparse = &ds.features;
    if (aug.cols() > 0) A.dense = &aug;
    std::vector<std::uint8_t> yj;
    for (int r = 0; r < n; ++r) yj.push_back(ds.labels(r, order[static_cast<std::size_t>(i)]));
    BinaryLRModel m = train_binary_lr_or_constant(A, yj, gp.c, gp.class_weight, seed);
    Eigen::VectorXd p = m.posterior(A);
    aug.conservativeResize(n, aug.cols() + 1);
    for (int r = 0; r < n; ++r) aug(r, aug.cols() - 1) = p[r] >= 0.5 ? 1.0 : 0.0;
    clf->links.push_back(std::move(m));
  }
  return clf;
}

inline std::unique_ptr<MultiLabelClassifier> classifier_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "independent_binary") {
    auto clf = std::make_unique<IndependentBinaryClassifier>();
    for (const nlohmann::json& m : j.at("models"))
      clf->models.push_back(detail::binary_model_from_json(m));
    return clf;
  }
  if (kind == "stacked") {
    auto clf = std::make_unique<StackedClassifier>();
    for (const nlohmann::json& m : j.at("base")) clf->base.push_back(detail::binary_model_from_json(m));
    for (const nlohmann::json& m : j.at("meta")) clf->meta.push_back(detail::binary_model_from_json(m));
    clf->normalize = j.at("normalize").get<bool>();
    clf->folds = j.at("folds").get<int>();
    if (clf->normalize) {
      std::vector<double> mu = j.at("norm_mean").get<std::vector<double>>();
      std::vector<double> sc = j.at("norm_inv_scale").get<std::vector<double>>();
      clf->norm_mean = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<long>(mu.size()));
      clf->norm_inv_scale = Eigen::Map<const Eigen::VectorXd>(sc.data(), static_cast<long>(sc.size()));
    }
    return clf;
  }
  if (kind == "chain") {
    auto clf = std::make_unique<ChainClassifier>();
    clf->order = j.at("order").get<std::vector<int>>();
    for (const nlohmann::json& m : j.at("links")) clf->links.push_back(detail::binary_model_from_json(m));
    return clf;
  }
  throw ConfigError("unknown classifier kind '" + kind + "'");
}

}  // namespace mlquant
