#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "mlquant/dataset.hpp"
#include "mlquant/rng.hpp"

namespace mlquant {

// Synthetic multi-label generators.
//
// intervals: one latent factor u ~ U(0,1); class j is active when u falls in
//   its interval. Overlapping intervals induce strong pairwise label
//   correlations, and interior intervals give classes whose optimal posterior
//   is non-monotone in u, which a linear per-class model cannot represent but
//   a stacked model can recover from the edge classes' posteriors.
// independent: random logistic hyperplanes over Gaussian features, one per
//   class, with no cross-class coupling. Negative control.
// copy: like independent, but classes come in pairs where the second member
//   copies the first with a small flip probability. Extreme correlation.
struct SynthConfig {
  std::string mode = "intervals";
  int n_classes = 6;
  int n_measure = 6;
  int n_noise = 4;
  double measure_noise = 0.22;
  double label_noise = 0.02;
  double copy_noise = 0.05;
  std::vector<std::pair<double, double>> intervals;  // optional explicit override

  void validate() const {
    if (mode != "intervals" && mode != "independent" && mode != "copy")
      throw ConfigError("synth: unknown mode '" + mode + "'");
    if (n_classes < 1) throw ConfigError("synth: n_classes must be >= 1");
    if (n_measure < 1) throw ConfigError("synth: n_measure must be >= 1");
    if (n_noise < 0) throw ConfigError("synth: n_noise must be >= 0");
    if (measure_noise < 0.0) throw ConfigError("synth: measure_noise must be >= 0");
    if (label_noise < 0.0 || label_noise >= 0.5)
      throw ConfigError("synth: label_noise must be in [0, 0.5)");
    if (copy_noise < 0.0 || copy_noise >= 0.5)
      throw ConfigError("synth: copy_noise must be in [0, 0.5)");
    if (!intervals.empty()) {
      if (static_cast<int>(intervals.size()) != n_classes)
        throw ConfigError("synth: intervals count must equal n_classes");
      for (const auto& [lo, hi] : intervals)
        if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
          throw ConfigError("synth: intervals must satisfy 0 <= lo < hi <= 1");
    }
  }

  std::vector<std::pair<double, double>> effective_intervals() const {
    if (!intervals.empty()) return intervals;
    if (n_classes == 6) {
      // Three edge classes (monotone in u) and three interior ones.
      return {{0.00, 0.35}, {0.65, 1.00}, {0.15, 0.50},
              {0.50, 0.85}, {0.30, 0.70}, {0.00, 0.50}};
    }
    std::vector<std::pair<double, double>> out;
    for (int j = 0; j < n_classes; ++j) {
      double center = static_cast<double>(j + 1) / static_cast<double>(n_classes + 1);
      double lo = clip(center - 0.2, 0.0, 1.0);
      double hi = clip(center + 0.2, 0.0, 1.0);
      if (j % 3 == 0) lo = 0.0;
      if (j % 3 == 1) hi = 1.0;
      out.emplace_back(lo, hi);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["n_classes"] = n_classes;
    j["n_measure"] = n_measure;
    j["n_noise"] = n_noise;
    j["measure_noise"] = measure_noise;
    j["label_noise"] = label_noise;
    j["copy_noise"] = copy_noise;
    if (!intervals.empty()) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& [lo, hi] : intervals) arr.push_back({lo, hi});
      j["intervals"] = arr;
    }
    return j;
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.mode = j.value("mode", std::string("intervals"));
    c.n_classes = j.value("n_classes", 6);
    c.n_measure = j.value("n_measure", 6);
    c.n_noise = j.value("n_noise", 4);
    c.measure_noise = j.value("measure_noise", 0.22);
    c.label_noise = j.value("label_noise", 0.02);
    c.copy_noise = j.value("copy_noise", 0.05);
    if (j.contains("intervals"))
      for (const nlohmann::json& iv : j.at("intervals"))
        c.intervals.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
    c.validate();
    return c;
  }
};

inline MultiLabelDataset synth_generate(const SynthConfig& cfg, int n_rows, std::uint64_t seed) {
  cfg.validate();
  if (n_rows < 1) throw ConfigError("synth: n_rows must be >= 1");
  Rng rng = substream(seed, "synth");
  const int d = cfg.n_measure + cfg.n_noise;
  const int L = cfg.n_classes;

  MultiLabelDataset ds;
  ds.labels.resize(n_rows, L);
  ds.labels.setZero();
  for (int j = 0; j < L; ++j) ds.class_names.push_back("y" + std::to_string(j));

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(d));

  if (cfg.mode == "intervals") {
    const auto ivs = cfg.effective_intervals();
    for (int i = 0; i < n_rows; ++i) {
      double u = rng.next_double();
      for (int f = 0; f < cfg.n_measure; ++f)
        trip.emplace_back(i, f, u + cfg.measure_noise * rng.next_normal());
      for (int f = cfg.n_measure; f < d; ++f) trip.emplace_back(i, f, rng.next_normal());
      for (int j = 0; j < L; ++j) {
        bool on = u >= ivs[static_cast<std::size_t>(j)].first &&
                  u < ivs[static_cast<std::size_t>(j)].second;
        if (rng.next_double() < cfg.label_noise) on = !on;
        ds.labels(i, j) = on ? 1 : 0;
      }
    }
  } else {
    // Random hyperplanes over the measurement block; one per (lead) class.
    Eigen::MatrixXd W(L, cfg.n_measure);
    Eigen::VectorXd b(L);
    for (int j = 0; j < L; ++j) {
      for (int f = 0; f < cfg.n_measure; ++f) W(j, f) = rng.next_normal();
      // Bias chosen so the marginal prevalence lands in a moderate band.
      double target = 0.2 + 0.6 * rng.next_double();
      b[j] = std::log(target / (1.0 - target)) * W.row(j).norm() * 0.5;
    }
    for (int i = 0; i < n_rows; ++i) {
      Eigen::VectorXd x(d);
      for (int f = 0; f < d; ++f) x[f] = rng.next_normal();
      for (int f = 0; f < d; ++f) trip.emplace_back(i, f, x[f]);
      for (int j = 0; j < L; ++j) {
        bool on;
        if (cfg.mode == "copy" && j % 2 == 1) {
          on = ds.labels(i, j - 1) != 0;
          if (rng.next_double() < cfg.copy_noise) on = !on;
        } else {
          double z = W.row(j).dot(x.head(cfg.n_measure)) + b[j];
          on = rng.next_double() < 1.0 / (1.0 + std::exp(-z));
        }
        if (rng.next_double() < cfg.label_noise) on = !on;
        ds.labels(i, j) = on ? 1 : 0;
      }
    }
  }

  ds.features.resize(n_rows, d);
  ds.features.setFromTriplets(trip.begin(), trip.end());
  ds.features.makeCompressed();
  ds.validate();
  return ds;
}

}  // namespace mlquant
