#pragma once

#include <Eigen/QR>
#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "mlquant/classify.hpp"
#include "mlquant/dataset.hpp"

namespace mlquant {

enum class BaseMethod { CC, PCC, ACC, PACC, SLD };

inline const char* base_method_name(BaseMethod m) {
  switch (m) {
    case BaseMethod::CC: return "cc";
    case BaseMethod::PCC: return "pcc";
    case BaseMethod::ACC: return "acc";
    case BaseMethod::PACC: return "pacc";
    case BaseMethod::SLD: return "sld";
  }
  return "?";
}

inline BaseMethod base_method_from_name(const std::string& s) {
  if (s == "cc") return BaseMethod::CC;
  if (s == "pcc") return BaseMethod::PCC;
  if (s == "acc") return BaseMethod::ACC;
  if (s == "pacc") return BaseMethod::PACC;
  if (s == "sld") return BaseMethod::SLD;
  throw ConfigError("unknown base method '" + s + "'");
}

struct MisclassificationMatrix {
  Eigen::MatrixXd m;  // m(i,j) = P(predicted i | true j); columns sum to 1
  enum class Mode { Hard, Soft } mode = Mode::Hard;
  std::vector<int> identity_fallback_cols;  // true classes with no validation rows

  int size() const { return static_cast<int>(m.rows()); }

  void validate() const {
    if (m.rows() != m.cols()) throw DataError("MisclassificationMatrix: not square");
    for (int j = 0; j < m.cols(); ++j) {
      double s = 0.0;
      for (int i = 0; i < m.rows(); ++i) {
        if (m(i, j) < -1e-12 || m(i, j) > 1.0 + 1e-12)
          throw DataError("MisclassificationMatrix: entry outside [0,1]");
        s += m(i, j);
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw DataError("MisclassificationMatrix: column does not sum to 1");
    }
  }
};

// Classify-and-count over hard class ids.
inline PrevalenceVector cc(const std::vector<int>& hard_labels, int n) {
  if (hard_labels.empty()) throw DataError("cc: empty sample");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
  for (int id : hard_labels) {
    if (id < 0 || id >= n) throw DataError("cc: class id out of range");
    counts[id] += 1.0;
  }
  PrevalenceVector p;
  p.values = counts / static_cast<double>(hard_labels.size());
  p.kind = PrevalenceVector::Kind::Simplex;
  return p;
}

// Probabilistic classify-and-count: column means of a simplex-row posterior matrix.
inline PrevalenceVector pcc(const Eigen::MatrixXd& posteriors) {
  if (posteriors.rows() == 0) throw DataError("pcc: empty sample");
  PrevalenceVector p;
  p.values = posteriors.colwise().mean().transpose();
  p.kind = PrevalenceVector::Kind::Simplex;
  return p;
}

inline int argmax_row(const Eigen::MatrixXd& P, int row) {
  int best = 0;
  for (int j = 1; j < P.cols(); ++j)
    if (P(row, j) > P(row, best)) best = j;
  return best;
}

// Hard-mode misclassification rates from (true, predicted) id pairs. A true
// class with no examples gets an identity column, recorded in the result.
inline MisclassificationMatrix estimate_M_hard(const std::vector<int>& true_ids,
                                               const std::vector<int>& pred_ids, int n) {
  if (true_ids.size() != pred_ids.size()) throw DataError("estimate_M: size mismatch");
  MisclassificationMatrix M;
  M.mode = MisclassificationMatrix::Mode::Hard;
  M.m = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd col_counts = Eigen::VectorXd::Zero(n);
  for (std::size_t r = 0; r < true_ids.size(); ++r) {
    int t = true_ids[r], p = pred_ids[r];
    if (t < 0 || t >= n || p < 0 || p >= n) throw DataError("estimate_M: class id out of range");
    M.m(p, t) += 1.0;
    col_counts[t] += 1.0;
  }
  for (int j = 0; j < n; ++j) {
    if (col_counts[j] > 0.0) {
      M.m.col(j) /= col_counts[j];
    } else {
      M.m.col(j).setZero();
      M.m(j, j) = 1.0;
      M.identity_fallback_cols.push_back(j);
    }
  }
  return M;
}

// Soft-mode rates: column j is the mean posterior vector over true-j examples.
inline MisclassificationMatrix estimate_M_soft(const std::vector<int>& true_ids,
                                               const Eigen::MatrixXd& posteriors) {
  const int n = static_cast<int>(posteriors.cols());
  if (static_cast<int>(true_ids.size()) != posteriors.rows())
    throw DataError("estimate_M: size mismatch");
  MisclassificationMatrix M;
  M.mode = MisclassificationMatrix::Mode::Soft;
  M.m = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd col_counts = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < posteriors.rows(); ++r) {
    int t = true_ids[static_cast<std::size_t>(r)];
    if (t < 0 || t >= n) throw DataError("estimate_M: class id out of range");
    M.m.col(t) += posteriors.row(r).transpose();
    col_counts[t] += 1.0;
  }
  for (int j = 0; j < n; ++j) {
    if (col_counts[j] > 0.0) {
      M.m.col(j) /= col_counts[j];
    } else {
      M.m.col(j).setZero();
      M.m(j, j) = 1.0;
      M.identity_fallback_cols.push_back(j);
    }
  }
  return M;
}

struct CorrectionResult {
  PrevalenceVector p;
  bool fallback = false;  // singular system; p is the uncorrected input
};

namespace detail {

inline CorrectionResult correction_fallback(const Eigen::VectorXd& p_cc) {
  CorrectionResult res;
  res.p.values = p_cc;
  res.p.kind = PrevalenceVector::Kind::Simplex;
  res.fallback = true;
  return res;
}

// Least-squares solve of M p = p_cc followed by clip-to-zero and simplex
// renormalization; rank deficiency falls back to the uncorrected input.
inline CorrectionResult solve_correction_least_squares(const Eigen::VectorXd& p_cc,
                                                       const Eigen::MatrixXd& M) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  if (qr.rank() < M.cols()) return correction_fallback(p_cc);
  Eigen::VectorXd sol = qr.solve(p_cc);
  double sum = 0.0;
  for (int i = 0; i < sol.size(); ++i) {
    if (sol[i] < 0.0) sol[i] = 0.0;
    sum += sol[i];
  }
  if (sum <= 0.0) return correction_fallback(p_cc);
  CorrectionResult res;
  res.p.values = sol / sum;
  res.p.kind = PrevalenceVector::Kind::Simplex;
  return res;
}

}  // namespace detail

// Adjusted classify-and-count: invert the law-of-total-probability system.
// Binary systems use the closed form (p_cc - fpr) / (tpr - fpr).
inline CorrectionResult acc_correct(const PrevalenceVector& p_cc,
                                    const MisclassificationMatrix& M) {
  const int n = M.size();
  if (p_cc.size() != n) throw DataError("acc_correct: dimension mismatch");
  if (n == 2) {
    double tpr = M.m(0, 0), fpr = M.m(0, 1);
    if (std::abs(tpr - fpr) <= 1e-9) return detail::correction_fallback(p_cc.values);
    double p0 = clip((p_cc.values[0] - fpr) / (tpr - fpr), 0.0, 1.0);
    CorrectionResult res;
    res.p.values = Eigen::Vector2d(p0, 1.0 - p0);
    res.p.kind = PrevalenceVector::Kind::Simplex;
    return res;
  }
  return detail::solve_correction_least_squares(p_cc.values, M.m);
}

// PACC shares the correction; only the M estimation mode differs.
inline CorrectionResult pacc_correct(const PrevalenceVector& p_pcc,
                                     const MisclassificationMatrix& M_soft) {
  return acc_correct(p_pcc, M_soft);
}

struct SldResult {
  PrevalenceVector prevalence;
  Eigen::MatrixXd posteriors;
  int iterations = 0;
  bool converged = false;
};

// Saerens-Latinne-Decaestecker EM: rescale posteriors by the prior ratio,
// renormalize rows, take column means as the new prior; repeat to consistency.
inline SldResult sld(const Eigen::MatrixXd& posteriors, const PrevalenceVector& train_prev,
                     double eps = 1e-4, int max_iter = 1000) {
  const int n = static_cast<int>(posteriors.cols());
  const int rows = static_cast<int>(posteriors.rows());
  if (train_prev.size() != n) throw DataError("sld: dimension mismatch");
  if (rows == 0) throw DataError("sld: empty sample");
  for (int j = 0; j < n; ++j)
    if (train_prev.values[j] <= 0.0) throw DataError("sld: train prevalence must be positive");

  SldResult res;
  Eigen::VectorXd p_cur = train_prev.values;
  Eigen::MatrixXd Pt = posteriors;
  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd ratio = p_cur.cwiseQuotient(train_prev.values);
    Pt = posteriors * ratio.asDiagonal();
    for (int i = 0; i < rows; ++i) {
      double s = Pt.row(i).sum();
      if (s <= 0.0) throw DataError("sld: degenerate posterior row");
      Pt.row(i) /= s;
    }
    Eigen::VectorXd p_next = Pt.colwise().mean().transpose();
    double delta = (p_next - p_cur).lpNorm<Eigen::Infinity>();
    p_cur = p_next;
    res.iterations = iter;
    if (delta < eps) {
      res.converged = true;
      break;
    }
  }
  res.prevalence.values = p_cur;
  res.prevalence.kind = PrevalenceVector::Kind::Simplex;
  res.posteriors = Pt;
  return res;
}

// ---------------------------------------------------------------------------
// Fitted per-class binary quantifier (class j present vs absent; index 0 of
// the internal 2-class system is "present").
// ---------------------------------------------------------------------------

struct BinaryClassQuantifier {
  BaseMethod method = BaseMethod::PCC;
  MisclassificationMatrix M;       // acc/pacc
  double train_prev_pos = 0.5;     // sld, clamped into [1e-6, 1-1e-6]
  double sld_eps = 1e-4;
  int sld_max_iter = 1000;

  // Fit from out-of-fold positive-class posteriors and true binary labels.
  static BinaryClassQuantifier fit(BaseMethod method, const Eigen::VectorXd& oof_posterior,
                                   const std::vector<std::uint8_t>& y_true) {
    if (oof_posterior.size() != static_cast<long>(y_true.size()))
      throw DataError("BinaryClassQuantifier: size mismatch");
    BinaryClassQuantifier q;
    q.method = method;
    if (method == BaseMethod::ACC || method == BaseMethod::PACC) {
      std::vector<int> true_ids(y_true.size());
      for (std::size_t i = 0; i < y_true.size(); ++i) true_ids[i] = y_true[i] ? 0 : 1;
      if (method == BaseMethod::ACC) {
        std::vector<int> pred_ids(y_true.size());
        for (std::size_t i = 0; i < y_true.size(); ++i)
          pred_ids[i] = oof_posterior[static_cast<long>(i)] >= 0.5 ? 0 : 1;
        q.M = estimate_M_hard(true_ids, pred_ids, 2);
      } else {
        Eigen::MatrixXd P(oof_posterior.size(), 2);
        P.col(0) = oof_posterior;
        P.col(1) = Eigen::VectorXd::Ones(oof_posterior.size()) - oof_posterior;
        q.M = estimate_M_soft(true_ids, P);
      }
    } else if (method == BaseMethod::SLD) {
      double pos = 0.0;
      for (std::uint8_t v : y_true) pos += v;
      q.train_prev_pos = clip(pos / static_cast<double>(y_true.size()), 1e-6, 1.0 - 1e-6);
    }
    return q;
  }

  // Estimate positive-class prevalence from the sample's posterior column.
  double quantify(const Eigen::VectorXd& sample_posterior) const {
    if (sample_posterior.size() == 0) throw DataError("BinaryClassQuantifier: empty sample");
    const long k = sample_posterior.size();
    switch (method) {
      case BaseMethod::CC: {
        double cnt = 0.0;
        for (long i = 0; i < k; ++i) cnt += sample_posterior[i] >= 0.5 ? 1.0 : 0.0;
        return cnt / static_cast<double>(k);
      }
      case BaseMethod::PCC:
        return sample_posterior.mean();
      case BaseMethod::ACC: {
        double cnt = 0.0;
        for (long i = 0; i < k; ++i) cnt += sample_posterior[i] >= 0.5 ? 1.0 : 0.0;
        PrevalenceVector p_cc;
        p_cc.values = Eigen::Vector2d(cnt / k, 1.0 - cnt / k);
        p_cc.kind = PrevalenceVector::Kind::Simplex;
        return acc_correct(p_cc, M).p.values[0];
      }
      case BaseMethod::PACC: {
        double mean = sample_posterior.mean();
        PrevalenceVector p_pcc;
        p_pcc.values = Eigen::Vector2d(mean, 1.0 - mean);
        p_pcc.kind = PrevalenceVector::Kind::Simplex;
        return pacc_correct(p_pcc, M).p.values[0];
      }
      case BaseMethod::SLD: {
        Eigen::MatrixXd P(k, 2);
        P.col(0) = sample_posterior;
        P.col(1) = Eigen::VectorXd::Ones(k) - sample_posterior;
        PrevalenceVector tp;
        tp.values = Eigen::Vector2d(train_prev_pos, 1.0 - train_prev_pos);
        tp.kind = PrevalenceVector::Kind::Simplex;
        return sld(P, tp, sld_eps, sld_max_iter).prevalence.values[0];
      }
    }
    throw ConfigError("BinaryClassQuantifier: unknown method");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = base_method_name(method);
    j["train_prev_pos"] = train_prev_pos;
    j["sld_eps"] = sld_eps;
    j["sld_max_iter"] = sld_max_iter;
    if (method == BaseMethod::ACC || method == BaseMethod::PACC) {
      j["M"] = {{M.m(0, 0), M.m(0, 1)}, {M.m(1, 0), M.m(1, 1)}};
      j["M_mode"] = M.mode == MisclassificationMatrix::Mode::Hard ? "hard" : "soft";
    }
    return j;
  }

  static BinaryClassQuantifier from_json(const nlohmann::json& j) {
    BinaryClassQuantifier q;
    q.method = base_method_from_name(j.at("method").get<std::string>());
    q.train_prev_pos = j.at("train_prev_pos").get<double>();
    q.sld_eps = j.at("sld_eps").get<double>();
    q.sld_max_iter = j.at("sld_max_iter").get<int>();
    if (j.contains("M")) {
      q.M.m.resize(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 2; ++c)
          q.M.m(i, c) = j.at("M").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
      q.M.mode = j.at("M_mode").get<std::string>() == "hard" ? MisclassificationMatrix::Mode::Hard
                                                             : MisclassificationMatrix::Mode::Soft;
    }
    return q;
  }
};

// ---------------------------------------------------------------------------
// Fitted single-label (multiclass) quantifier over a softmax classifier; used
// for the synthetic labelset classes of label-powerset quantification.
// ---------------------------------------------------------------------------

struct SingleLabelQuantifier {
  BaseMethod method = BaseMethod::PCC;
  SoftmaxLRModel model;
  int n_classes = 0;
  MisclassificationMatrix M;       // acc/pacc
  PrevalenceVector train_prev;     // sld, clamped + renormalized
  double sld_eps = 1e-4;
  int sld_max_iter = 1000;

  static SingleLabelQuantifier fit(BaseMethod method, const SparseFeatures& X,
                                   const std::vector<int>& class_ids, int n_classes,
                                   const BinaryGridPoint& gp, int folds, std::uint64_t seed) {
    SingleLabelQuantifier q;
    q.method = method;
    q.n_classes = n_classes;
    FeatureView A;
    A.sparse = &X;
    q.model = train_softmax_lr_or_constant(A, class_ids, n_classes, gp.c, gp.class_weight, seed);
    if (method == BaseMethod::ACC || method == BaseMethod::PACC) {
      Eigen::MatrixXd oof = q.model.constant_fallback
                                ? q.model.posterior(X)
                                : cv_posteriors_softmax(X, class_ids, n_classes, folds, gp.c,
                                                        gp.class_weight, seed);
      if (method == BaseMethod::ACC) {
        std::vector<int> pred_ids(class_ids.size());
        for (std::size_t i = 0; i < class_ids.size(); ++i)
          pred_ids[i] = argmax_row(oof, static_cast<int>(i));
        q.M = estimate_M_hard(class_ids, pred_ids, n_classes);
      } else {
        q.M = estimate_M_soft(class_ids, oof);
      }
    } else if (method == BaseMethod::SLD) {
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_classes);
      for (int id : class_ids) counts[id] += 1.0;
      Eigen::VectorXd tp = counts / static_cast<double>(class_ids.size());
      for (int i = 0; i < n_classes; ++i) tp[i] = clip(tp[i], 1e-6, 1.0 - 1e-6);
      q.train_prev.values = tp / tp.sum();
      q.train_prev.kind = PrevalenceVector::Kind::Simplex;
    }
    return q;
  }

  Eigen::MatrixXd pool_posteriors(const SparseFeatures& X) const { return model.posterior(X); }

  // Quantify from precomputed posterior rows of the sample.
  PrevalenceVector quantify_rows(const Eigen::MatrixXd& post_rows) const {
    switch (method) {
      case BaseMethod::CC: {
        std::vector<int> ids(static_cast<std::size_t>(post_rows.rows()));
        for (int i = 0; i < post_rows.rows(); ++i) ids[static_cast<std::size_t>(i)] = argmax_row(post_rows, i);
        return cc(ids, n_classes);
      }
      case BaseMethod::PCC:
        return pcc(post_rows);
      case BaseMethod::ACC: {
        std::vector<int> ids(static_cast<std::size_t>(post_rows.rows()));
        for (int i = 0; i < post_rows.rows(); ++i) ids[static_cast<std::size_t>(i)] = argmax_row(post_rows, i);
        return acc_correct(cc(ids, n_classes), M).p;
      }
      case BaseMethod::PACC:
        return pacc_correct(pcc(post_rows), M).p;
      case BaseMethod::SLD:
        return sld(post_rows, train_prev, sld_eps, sld_max_iter).prevalence;
    }
    throw ConfigError("SingleLabelQuantifier: unknown method");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = base_method_name(method);
    j["n_classes"] = n_classes;
    j["model"] = detail::softmax_model_to_json(model);
    j["sld_eps"] = sld_eps;
    j["sld_max_iter"] = sld_max_iter;
    if (method == BaseMethod::ACC || method == BaseMethod::PACC) {
      nlohmann::json rows = nlohmann::json::array();
      for (int i = 0; i < M.m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(M.m.cols()));
        for (int c = 0; c < M.m.cols(); ++c) row[static_cast<std::size_t>(c)] = M.m(i, c);
        rows.push_back(row);
      }
      j["M"] = rows;
      j["M_mode"] = M.mode == MisclassificationMatrix::Mode::Hard ? "hard" : "soft";
    }
    if (method == BaseMethod::SLD)
      j["train_prev"] = std::vector<double>(train_prev.values.data(),
                                            train_prev.values.data() + train_prev.values.size());
    return j;
  }

  static SingleLabelQuantifier from_json(const nlohmann::json& j) {
    SingleLabelQuantifier q;
    q.method = base_method_from_name(j.at("method").get<std::string>());
    q.n_classes = j.at("n_classes").get<int>();
    q.model = detail::softmax_model_from_json(j.at("model"));
    q.sld_eps = j.at("sld_eps").get<double>();
    q.sld_max_iter = j.at("sld_max_iter").get<int>();
    if (j.contains("M")) {
      const nlohmann::json& rows = j.at("M");
      q.M.m.resize(static_cast<long>(rows.size()), static_cast<long>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<double> row = rows.at(i).get<std::vector<double>>();
        for (std::size_t c = 0; c < row.size(); ++c)
          q.M.m(static_cast<long>(i), static_cast<long>(c)) = row[c];
      }
      q.M.mode = j.at("M_mode").get<std::string>() == "hard" ? MisclassificationMatrix::Mode::Hard
                                                             : MisclassificationMatrix::Mode::Soft;
    }
    if (j.contains("train_prev")) {
      std::vector<double> tp = j.at("train_prev").get<std::vector<double>>();
      q.train_prev.values = Eigen::Map<const Eigen::VectorXd>(tp.data(), static_cast<long>(tp.size()));
      q.train_prev.kind = PrevalenceVector::Kind::Simplex;
    }
    return q;
  }
};

}  // namespace mlquant
