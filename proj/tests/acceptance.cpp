// Acceptance gate: nine numbered criteria, one PASS/FAIL line each, nonzero
// exit when any fails. Every tolerance is pinned in this file.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mlquant/mlquant.hpp"

using namespace mlquant;

namespace {

std::string fmt(double v) { return format_double(v); }

Eigen::VectorXd simplex_point(Rng& rng, int n, double floor_mass) {
  Eigen::VectorXd p(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = floor_mass + rng.next_double();
    s += p[i];
  }
  return p / s;
}

// -------------------------------------------------------------------------
// 1. Labelset decomposition on the three-class worked example.
// -------------------------------------------------------------------------
bool ac1(std::string& note) {
  MLQuantifier::LpqCluster cl;
  cl.classes = {0, 1, 2};
  for (std::uint64_t mask = 0; mask < 8; ++mask) cl.masks.push_back(mask);
  Eigen::VectorXd est(8);
  est << 0.15, 0.10, 0.26, 0.19, 0.05, 0.13, 0.11, 0.01;

  Eigen::VectorXd per_class = cl.assignment().transpose() * est;
  Eigen::Vector3d expected(0.43, 0.57, 0.30);
  // The same example is often quoted with the triple in reverse class order,
  // (0.30, 0.57, 0.43); the assignment-matrix arithmetic fixes the
  // orientation, and the reversed reading carries identical values.
  Eigen::Vector3d reversed(0.30, 0.57, 0.43);
  bool ok = per_class.size() == 3;
  for (int j = 0; ok && j < 3; ++j) {
    ok = std::abs(per_class[j] - expected[j]) <= 1e-12 &&
         std::abs(per_class[2 - j] - reversed[j]) <= 1e-12;
  }
  note = "decomposition (" + fmt(per_class[0]) + ", " + fmt(per_class[1]) + ", " +
         fmt(per_class[2]) + "); reversed class order reads (0.30, 0.57, 0.43)";
  return ok;
}

// -------------------------------------------------------------------------
// 2. Adjusted-count recovery on well-conditioned systems.
// -------------------------------------------------------------------------
bool ac2(std::string& note) {
  Rng rng(20250816);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    int n = 2 + static_cast<int>(rng.below(5));
    MisclassificationMatrix M;
    M.m.resize(n, n);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd col(n);
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        col[i] = 0.05 + 0.95 * rng.next_double();
        s += col[i];
      }
      col[j] += 2.0 * s;  // diagonal dominance keeps the system well conditioned
      M.m.col(j) = col / col.sum();
    }
    M.validate();
    Eigen::VectorXd p = simplex_point(rng, n, 0.05);
    PrevalenceVector p_cc;
    p_cc.values = M.m * p;
    p_cc.kind = PrevalenceVector::Kind::Simplex;
    CorrectionResult res = acc_correct(p_cc, M);
    if (res.fallback) {
      note = "unexpected fallback on a well-conditioned system (trial " + std::to_string(t) + ")";
      return false;
    }
    worst = std::max(worst, (res.p.values - p).lpNorm<Eigen::Infinity>());
  }
  note = "100 systems (n 2..6), worst recovery error " + fmt(worst) + " <= 1e-9";
  return worst <= 1e-9;
}

// -------------------------------------------------------------------------
// 3. Expectation-maximization prior fixed point.
// -------------------------------------------------------------------------
bool ac3(std::string& note) {
  Rng rng(333);
  double worst_move = 0.0;
  for (int t = 0; t < 50; ++t) {
    int n = 2 + static_cast<int>(rng.below(3));
    int rows = 100 + static_cast<int>(rng.below(201));
    Eigen::MatrixXd P(rows, n);
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        P(i, j) = std::exp(rng.next_normal());
        s += P(i, j);
      }
      P.row(i) /= s;
    }
    PrevalenceVector tp;
    tp.values = simplex_point(rng, n, 0.1);
    tp.kind = PrevalenceVector::Kind::Simplex;

    SldResult res = sld(P, tp, 1e-6, 1000);
    if (!res.converged) {
      note = "instance " + std::to_string(t) + " did not converge";
      return false;
    }
    // Consistency: one extra EM step from the returned prior barely moves it.
    Eigen::VectorXd prev = res.prevalence.values;
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < rows; ++i) {
      Eigen::VectorXd w(n);
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        w[j] = prev[j] / tp.values[j] * P(i, j);
        s += w[j];
      }
      next += w / s;
    }
    next /= static_cast<double>(rows);
    worst_move = std::max(worst_move, (next - prev).lpNorm<Eigen::Infinity>());
  }
  note = "50 instances, worst extra-step movement " + fmt(worst_move) + " < 1e-4";
  return worst_move < 1e-4;
}

// -------------------------------------------------------------------------
// 4. Sweep-protocol exactness on a 5000-row pool.
// -------------------------------------------------------------------------
bool ac4(std::string& note) {
  SynthConfig sc;
  // One rare class (~1% of rows) so the positive-pool guard actually binds;
  // every negative pool holds thousands of rows, so it never does.
  sc.intervals = {{0.0, 0.01}, {0.0, 0.35}, {0.65, 1.0},
                  {0.15, 0.5}, {0.5, 0.85}, {0.3, 0.7}};
  sc.label_noise = 0.0;
  MultiLabelDataset pool = synth_generate(sc, 5000, 99);

  MLAPPParams params;
  params.k = 100;
  params.m = 1;
  params.grid = make_grid(0.0, 0.05, 1.0);
  params.seed = 4242;
  std::vector<GeneratedSample> samples = mlapp_generate(pool, params);

  const std::size_t bound = static_cast<std::size_t>(params.m) * 6 * params.grid.size();
  if (samples.size() > bound) {
    note = "emitted " + std::to_string(samples.size()) + " samples, bound is " +
           std::to_string(bound);
    return false;
  }

  std::vector<long> pos_total(6, 0);
  for (int i = 0; i < pool.n(); ++i)
    for (int j = 0; j < 6; ++j) pos_total[static_cast<std::size_t>(j)] += pool.labels(i, j);

  std::set<std::pair<int, int>> feasible;  // (class, positive count) under the pool guard
  for (int cls = 0; cls < 6; ++cls)
    for (double g : params.grid) {
      int pos = positives_for(params.k, g);
      if (pos <= pos_total[static_cast<std::size_t>(cls)]) feasible.insert({cls, pos});
    }

  std::set<std::pair<int, int>> emitted;
  for (const GeneratedSample& gs : samples) {
    std::set<int> uniq(gs.sample.indices.begin(), gs.sample.indices.end());
    if (static_cast<int>(uniq.size()) != params.k) {
      note = "sample with duplicate or missing indices";
      return false;
    }
    int realized = 0;
    for (int idx : gs.sample.indices) realized += pool.labels(idx, gs.targeted_class);
    double want = static_cast<double>(realized) / static_cast<double>(params.k);
    if (gs.targeted_prevalence != want ||
        gs.true_prev.values[gs.targeted_class] != want) {
      note = "targeted prevalence is not exactly (positives/k)";
      return false;
    }
    emitted.insert({gs.targeted_class, realized});
  }

  if (emitted != feasible) {
    note = "skipped pairs differ from the positive-pool guard";
    return false;
  }
  if (feasible.size() == bound) {
    note = "no pair was skipped; the guard check is vacuous";
    return false;
  }
  note = std::to_string(samples.size()) + " samples emitted, " +
         std::to_string(bound - feasible.size()) +
         " infeasible pairs skipped, prevalences integer-exact";
  return true;
}

// -------------------------------------------------------------------------
// 5. Metric arithmetic against hand-derived values.
// -------------------------------------------------------------------------
bool ac5(std::string& note) {
  Eigen::Vector2d p(0.1, 0.9), q(0.3, 0.7);
  bool ok = std::abs(ae_multilabel(p, q) - 0.2) <= 1e-12;
  ok = ok && std::abs(smooth(0.0, 100) - 0.005 / 1.01) <= 1e-12;
  Eigen::Vector2d r(0.5, 0.5), rh(0.25, 0.75);
  ok = ok && std::abs(rae_core(r, rh) - 0.5) <= 1e-12;
  // Smoothing is affine with fixed point 0.5, so the smoothed value is the
  // unsmoothed one scaled by 1/1.01.
  ok = ok && std::abs(rae_multilabel(r, rh, 100) - 0.5 / 1.01) <= 1e-12;
  note = "ae 0.2, smooth(0,100) = 0.005/1.01, rae 0.5 unsmoothed and 0.5/1.01 smoothed";
  return ok;
}

// -------------------------------------------------------------------------
// 6. Analytic gradients against central finite differences.
// -------------------------------------------------------------------------
bool ac6(std::string& note) {
  Rng rng(606);
  double worst = 0.0;
  const double h = 1e-6;

  for (int t = 0; t < 10; ++t) {  // binary, alternating plain and balanced
    int n = 20 + static_cast<int>(rng.below(41));
    int d = 2 + static_cast<int>(rng.below(9));
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) trips.emplace_back(i, j, rng.next_normal());
      y[static_cast<std::size_t>(i)] = i < 2 ? static_cast<std::uint8_t>(i) : (rng.next_double() < 0.4 ? 1 : 0);
    }
    SparseFeatures X(n, d);
    X.setFromTriplets(trips.begin(), trips.end());
    FeatureView A;
    A.sparse = &X;
    double c = t % 2 ? 0.3 : 3.0;
    ClassWeight cw = t % 2 ? ClassWeight::Balanced : ClassWeight::None;
    Eigen::VectorXd alpha = detail::example_weights_binary(y, cw);
    Eigen::VectorXd yv(n);
    for (int i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];

    Eigen::VectorXd x(d + 1);
    for (int i = 0; i <= d; ++i) x[i] = rng.next_normal();
    Eigen::VectorXd ga;
    binary_lr_objective(A, yv, alpha, c, x, &ga);
    double scale = std::max(1.0, ga.lpNorm<Eigen::Infinity>());
    for (int i = 0; i <= d; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fd = (binary_lr_objective(A, yv, alpha, c, xp) -
                   binary_lr_objective(A, yv, alpha, c, xm)) /
                  (2.0 * h);
      worst = std::max(worst, std::abs(ga[i] - fd) / scale);
    }
  }

  for (int t = 0; t < 10; ++t) {  // softmax, alternating plain and balanced
    int n = 20 + static_cast<int>(rng.below(41));
    int d = 2 + static_cast<int>(rng.below(9));
    int K = 2 + static_cast<int>(rng.below(3));
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) trips.emplace_back(i, j, rng.next_normal());
      y[static_cast<std::size_t>(i)] = i < K ? i : static_cast<int>(rng.below(K));
    }
    SparseFeatures X(n, d);
    X.setFromTriplets(trips.begin(), trips.end());
    FeatureView A;
    A.sparse = &X;
    double c = t % 2 ? 0.3 : 3.0;
    ClassWeight cw = t % 2 ? ClassWeight::Balanced : ClassWeight::None;
    Eigen::VectorXd alpha = detail::example_weights_softmax(y, K, cw);

    Eigen::VectorXd x(K * d + K);
    for (int i = 0; i < x.size(); ++i) x[i] = rng.next_normal();
    Eigen::VectorXd ga;
    softmax_lr_objective(A, y, K, alpha, c, x, &ga);
    double scale = std::max(1.0, ga.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fd = (softmax_lr_objective(A, y, K, alpha, c, xp) -
                   softmax_lr_objective(A, y, K, alpha, c, xm)) /
                  (2.0 * h);
      worst = std::max(worst, std::abs(ga[i] - fd) / scale);
    }
  }

  note = "20 instances, worst relative gradient mismatch " + fmt(worst) + " <= 1e-6";
  return worst <= 1e-6;
}

// -------------------------------------------------------------------------
// 7. Directional family ordering on correlated synthetic data.
// -------------------------------------------------------------------------
const char* kOrderingConfig = R"({
  "name": "ordering",
  "synth": {"mode": "intervals", "n_classes": 6},
  "synth_train_rows": 5000,
  "synth_test_rows": 5000,
  "mlapp": {"k": 100, "m": 1},
  "seed": 1,
  "methods": [
    {"name": "bc_ba", "family": "bc_ba", "classifier": "independent_binary", "base_method": "pcc", "aggregator": "per_class_binary"},
    {"name": "mlc_ba", "family": "mlc_ba", "classifier": "stacked", "base_method": "pcc", "aggregator": "per_class_binary"},
    {"name": "bc_mla", "family": "bc_mla", "classifier": "independent_binary", "base_method": "pcc", "aggregator": "rq", "regressor": "ridge", "ridge_alpha": 1.0},
    {"name": "mlc_mla", "family": "mlc_mla", "classifier": "stacked", "base_method": "pcc", "aggregator": "rq", "regressor": "ridge", "ridge_alpha": 1.0}
  ]
})";

bool ac7(std::string& note) {
  int passes = 0;
  double worst_margin = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(kOrderingConfig));
    cfg.seed = seed;
    ExperimentOutput out = run_experiment(cfg);

    std::map<std::string, double> high;
    for (const ResultRecord& r : out.records)
      if (r.bin == "high") high[r.method] = r.mean_ae;
    if (high.size() != 4) continue;

    double bc_ba = high["bc_ba"], mlc_ba = high["mlc_ba"];
    double bc_mla = high["bc_mla"], mlc_mla = high["mlc_mla"];
    double rel_mlc = (bc_ba - mlc_ba) / bc_ba;
    double rel_rq = (bc_ba - bc_mla) / bc_ba;
    bool ok = rel_mlc >= 0.15 && rel_rq >= 0.15 && mlc_mla <= bc_ba && mlc_mla <= mlc_ba &&
              mlc_mla <= bc_mla;
    if (ok) {
      ++passes;
      worst_margin = std::min(worst_margin, std::min(rel_mlc, rel_rq));
    }
  }
  note = "high-shift ordering held on " + std::to_string(passes) +
         "/10 seeds (need >= 8); weakest relative improvement " + fmt(worst_margin);
  return passes >= 8;
}

// -------------------------------------------------------------------------
// 8. Stratified split proportionality.
// -------------------------------------------------------------------------
bool ac8(std::string& note) {
  Rng rng(8);
  LabelMatrix Y(200, 8);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 8; ++j) Y(i, j) = rng.next_double() < 0.3 ? 1 : 0;

  std::vector<Sample> parts = iterative_stratified_split_labels(Y, {0.6, 0.4}, 17);
  double worst = 0.0;
  for (int j = 0; j < 8; ++j) {
    long total = 0;
    for (int i = 0; i < 200; ++i) total += Y(i, j);
    double fraction = 0.6;
    for (const Sample& part : parts) {
      long pos = 0;
      for (int idx : part.indices) pos += Y(idx, j);
      worst = std::max(worst,
                       std::abs(static_cast<double>(pos) - fraction * static_cast<double>(total)));
      fraction = 0.4;
    }
  }
  note = "200 rows, 8 labels, 60/40 split: worst deviation from the proportional target " +
         fmt(worst) + " <= 1";
  return worst <= 1.0 + 1e-9;
}

// -------------------------------------------------------------------------
// 9. Byte-identical experiment CSVs across reruns.
// -------------------------------------------------------------------------
const char* kDeterminismConfig = R"({
  "name": "determinism",
  "synth": {"mode": "intervals", "n_classes": 6},
  "synth_train_rows": 600,
  "synth_test_rows": 600,
  "mlapp": {"k": 50, "m": 1, "grid": [0.0, 0.25, 0.5, 0.75, 1.0]},
  "gridsearch": {"enabled": true, "val_fraction": 0.4, "mlapp": {"k": 30, "m": 1, "grid": [0.0, 0.5, 1.0]}},
  "grid": {"c": ["1"]},
  "seed": 11,
  "methods": [
    {"name": "bc_ba", "family": "bc_ba", "classifier": "independent_binary", "base_method": "pcc", "aggregator": "per_class_binary"},
    {"name": "mlc_mla", "family": "mlc_mla", "classifier": "stacked", "base_method": "pcc", "aggregator": "rq", "regressor": "ridge", "ridge_alpha": 1.0}
  ]
})";

bool ac9(std::string& note) {
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(kDeterminismConfig));
  ExperimentOutput a = run_experiment(cfg);
  ExperimentOutput b = run_experiment(cfg);
  bool ok = a.results_csv == b.results_csv && a.estimates_csv == b.estimates_csv &&
            a.samples_csv == b.samples_csv && a.selection_csvs.size() == 2 &&
            a.selection_csvs.size() == b.selection_csvs.size();
  for (std::size_t i = 0; ok && i < a.selection_csvs.size(); ++i)
    ok = a.selection_csvs[i].first == b.selection_csvs[i].first &&
         a.selection_csvs[i].second == b.selection_csvs[i].second;
  note = ok ? "results, estimates, samples, and two selection reports byte-identical across runs"
            : "csv outputs differ between same-seed runs";
  return ok;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
  };
  const Criterion criteria[] = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string note;
    bool ok = false;
    try {
      ok = c.fn(note);
    } catch (const std::exception& e) {
      note = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::cout << c.name << ' ' << (ok ? "PASS" : "FAIL") << ": " << note << '\n';
  }
  std::cout << (9 - failures) << "/9 criteria passed\n";
  return failures == 0 ? 0 : 1;
}
