#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mlquant/dataset.hpp"
#include "mlquant/metrics.hpp"
#include "mlquant/rng.hpp"

namespace mlquant {

struct MLAPPParams {
  int k = 100;                 // sample size
  int m = 1;                   // repetitions per (class, grid value)
  std::vector<double> grid;    // strictly increasing, entries in [0,1]
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ConfigError("MLAPPParams: k must be >= 1");
    if (m < 1) throw ConfigError("MLAPPParams: m must be >= 1");
    if (grid.empty()) throw ConfigError("MLAPPParams: empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < 0.0 || grid[i] > 1.0) throw ConfigError("MLAPPParams: grid entry outside [0,1]");
      if (i > 0 && grid[i] <= grid[i - 1])
        throw ConfigError("MLAPPParams: grid must be strictly increasing");
    }
  }
};

inline std::vector<double> make_grid(double start, double step, double stop) {
  if (step <= 0.0) throw ConfigError("make_grid: step must be positive");
  std::vector<double> g;
  for (int i = 0;; ++i) {
    double v = start + i * step;
    if (v > stop + 1e-12) break;
    g.push_back(std::min(v, 1.0));
  }
  return g;
}

struct GeneratedSample {
  Sample sample;
  int targeted_class = -1;                    // -1 when not class-targeted (uniform baseline)
  double targeted_prevalence = std::numeric_limits<double>::quiet_NaN();
  PrevalenceVector true_prev;
  double shift = std::numeric_limits<double>::quiet_NaN();
};

// ceil(k*g) with a nearest-integer snap so grid values without an exact binary
// representation (0.05, 0.15, ...) still produce integer-exact counts.
inline int positives_for(int k, double g) {
  double t = static_cast<double>(k) * g;
  double nearest = std::nearbyint(t);
  if (std::abs(t - nearest) <= 1e-9 * std::max(1.0, std::abs(t)))
    return static_cast<int>(nearest);
  return static_cast<int>(std::ceil(t));
}

// Algorithm: for each class and each grid value, draw m samples of size k that
// contain exactly ceil(k*g) rows carrying the class, positives and negatives
// drawn uniformly without replacement from their pools. Pools are not consumed
// across samples. Pairs that cannot be realized are skipped.
inline std::vector<GeneratedSample> mlapp_generate(const MultiLabelDataset& ds,
                                                   const MLAPPParams& params) {
  params.validate();
  if (ds.n() < 1) throw DataError("mlapp_generate: empty dataset");
  if (params.k > ds.n()) throw DataError("mlapp_generate: k exceeds dataset size");

  std::vector<GeneratedSample> out;
  for (int cls = 0; cls < ds.n_classes(); ++cls) {
    std::vector<int> pos_pool, neg_pool;
    for (int i = 0; i < ds.n(); ++i)
      (ds.labels(i, cls) ? pos_pool : neg_pool).push_back(i);

    for (std::size_t j = 0; j < params.grid.size(); ++j) {
      int pos = positives_for(params.k, params.grid[j]);
      int neg = params.k - pos;
      if (pos > static_cast<int>(pos_pool.size())) continue;
      if (neg > static_cast<int>(neg_pool.size())) continue;

      for (int rep = 0; rep < params.m; ++rep) {
        Rng rng = substream(params.seed, "mlapp/" + std::to_string(cls) + "/" +
                                             std::to_string(j) + "/" + std::to_string(rep));
        GeneratedSample gs;
        gs.targeted_class = cls;
        gs.targeted_prevalence = static_cast<double>(pos) / static_cast<double>(params.k);
        gs.sample.indices.reserve(static_cast<std::size_t>(params.k));
        for (int pick : rng.sample_without_replacement(static_cast<int>(pos_pool.size()), pos))
          gs.sample.indices.push_back(pos_pool[static_cast<std::size_t>(pick)]);
        for (int pick : rng.sample_without_replacement(static_cast<int>(neg_pool.size()), neg))
          gs.sample.indices.push_back(neg_pool[static_cast<std::size_t>(pick)]);
        gs.true_prev = true_prevalence(ds, gs.sample);
        out.push_back(std::move(gs));
      }
    }
  }
  return out;
}

inline std::vector<GeneratedSample> uniform_generate(const MultiLabelDataset& ds, int k, int count,
                                                     std::uint64_t seed) {
  if (ds.n() < 1) throw DataError("uniform_generate: empty dataset");
  if (k > ds.n()) throw DataError("uniform_generate: k exceeds dataset size");
  if (k < 1) throw ConfigError("uniform_generate: k must be >= 1");
  std::vector<GeneratedSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    Rng rng = substream(seed, "uniform/" + std::to_string(c));
    GeneratedSample gs;
    gs.sample.indices = rng.sample_without_replacement(ds.n(), k);
    gs.true_prev = true_prevalence(ds, gs.sample);
    out.push_back(std::move(gs));
  }
  return out;
}

// Prior probability shift between two prevalence vectors, measured as AE.
inline double compute_shift(const PrevalenceVector& train_prev,
                            const PrevalenceVector& sample_prev) {
  return ae_multilabel(train_prev, sample_prev);
}

inline void fill_shifts(std::vector<GeneratedSample>& samples, const PrevalenceVector& train_prev) {
  for (GeneratedSample& gs : samples) gs.shift = compute_shift(train_prev, gs.true_prev);
}

struct ShiftBinning {
  std::array<double, 2> boundaries{};  // low/mid and mid/high edges
  std::vector<int> bin_of;             // 0 = low, 1 = mid, 2 = high

  static const char* bin_name(int b) {
    static const char* names[3] = {"low", "mid", "high"};
    return names[b];
  }
};

// Three equal-width bins over the observed shift range; left-closed,
// right-open, except the last bin which is closed. A degenerate range puts
// everything in the low bin.
inline ShiftBinning bin_shifts(const std::vector<GeneratedSample>& samples) {
  if (samples.empty()) throw DataError("bin_shifts: no samples");
  double lo = samples[0].shift, hi = samples[0].shift;
  for (const GeneratedSample& gs : samples) {
    if (std::isnan(gs.shift)) throw DataError("bin_shifts: sample with unset shift");
    lo = std::min(lo, gs.shift);
    hi = std::max(hi, gs.shift);
  }
  ShiftBinning binning;
  double width = (hi - lo) / 3.0;
  binning.boundaries = {lo + width, lo + 2.0 * width};
  binning.bin_of.reserve(samples.size());
  for (const GeneratedSample& gs : samples) {
    int b;
    if (hi == lo)
      b = 0;
    else if (gs.shift < binning.boundaries[0])
      b = 0;
    else if (gs.shift < binning.boundaries[1])
      b = 1;
    else
      b = 2;
    binning.bin_of.push_back(b);
  }
  return binning;
}

inline void write_samples_csv(const std::vector<GeneratedSample>& samples, std::ostream& out,
                              const std::string& config_hash, std::uint64_t seed) {
  out << "# mlquant " << kVersion << "\n";
  out << "# config " << config_hash << "\n";
  out << "# seed " << seed << "\n";
  out << "targeted_class,targeted_prevalence,shift,indices\n";
  for (const GeneratedSample& gs : samples) {
    out << gs.targeted_class << ',';
    out << (std::isnan(gs.targeted_prevalence) ? std::string("nan")
                                               : format_double(gs.targeted_prevalence))
        << ',';
    out << (std::isnan(gs.shift) ? std::string("nan") : format_double(gs.shift)) << ',';
    for (std::size_t i = 0; i < gs.sample.indices.size(); ++i) {
      if (i) out << ' ';
      out << gs.sample.indices[i];
    }
    out << '\n';
  }
}

// Reads the CSV written by write_samples_csv. true_prevalence is not stored in
// the file; callers recompute it against the dataset with fill_true_prevalence.
inline std::vector<GeneratedSample> read_samples_csv(std::istream& in) {
  std::vector<GeneratedSample> out;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    std::vector<std::string> cols = split_string(line, ',');
    if (cols.size() != 4)
      throw DataError("samples csv line " + std::to_string(line_no) + ": expected 4 columns");
    GeneratedSample gs;
    gs.targeted_class = static_cast<int>(detail::parse_long(cols[0], line_no, "targeted_class"));
    gs.targeted_prevalence =
        cols[1] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                         : detail::parse_dbl(cols[1], line_no, "targeted_prevalence");
    gs.shift = cols[2] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                : detail::parse_dbl(cols[2], line_no, "shift");
    std::istringstream is(cols[3]);
    int idx;
    while (is >> idx) gs.sample.indices.push_back(idx);
    if (gs.sample.indices.empty())
      throw DataError("samples csv line " + std::to_string(line_no) + ": empty index list");
    out.push_back(std::move(gs));
  }
  return out;
}

inline void fill_true_prevalence(std::vector<GeneratedSample>& samples,
                                 const MultiLabelDataset& ds) {
  for (GeneratedSample& gs : samples) gs.true_prev = true_prevalence(ds, gs.sample);
}

}  // namespace mlquant
