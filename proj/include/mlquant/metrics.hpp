#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mlquant/dataset.hpp"

namespace mlquant {

inline double ae_multilabel(const Eigen::VectorXd& p, const Eigen::VectorXd& p_hat) {
  if (p.size() != p_hat.size()) throw DataError("ae_multilabel: length mismatch");
  if (p.size() == 0) throw DataError("ae_multilabel: empty vectors");
  return (p - p_hat).cwiseAbs().mean();
}

inline double ae_multilabel(const PrevalenceVector& p, const PrevalenceVector& p_hat) {
  return ae_multilabel(p.values, p_hat.values);
}

// Additive smoothing with epsilon = 1/(2*sample_size); maps [0,1] into (0,1)
// and keeps smooth(p) + smooth(1-p) = 1.
inline double smooth(double p, long sample_size) {
  if (sample_size < 1) throw ConfigError("smooth: sample_size must be >= 1");
  double eps = 1.0 / (2.0 * static_cast<double>(sample_size));
  return (eps + p) / (2.0 * eps + 1.0);
}

// Relative absolute error without smoothing; callers must keep entries away
// from 0 and 1 themselves.
inline double rae_core(const Eigen::VectorXd& p, const Eigen::VectorXd& p_hat) {
  if (p.size() != p_hat.size()) throw DataError("rae_core: length mismatch");
  if (p.size() == 0) throw DataError("rae_core: empty vectors");
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    acc += std::abs(p[i] - p_hat[i]) / p[i];
    acc += std::abs((1.0 - p[i]) - (1.0 - p_hat[i])) / (1.0 - p[i]);
  }
  return acc / (2.0 * static_cast<double>(p.size()));
}

inline double rae_multilabel(const Eigen::VectorXd& p, const Eigen::VectorXd& p_hat,
                             long sample_size) {
  if (p.size() != p_hat.size()) throw DataError("rae_multilabel: length mismatch");
  Eigen::VectorXd ps(p.size()), qs(p.size());
  for (int i = 0; i < p.size(); ++i) {
    ps[i] = smooth(p[i], sample_size);
    qs[i] = smooth(p_hat[i], sample_size);
  }
  return rae_core(ps, qs);
}

inline double rae_multilabel(const PrevalenceVector& p, const PrevalenceVector& p_hat,
                             long sample_size) {
  return rae_multilabel(p.values, p_hat.values, sample_size);
}

struct BinAggregate {
  double mean = 0.0;
  long count = 0;
};

// Per-bin arithmetic means; a bin with no records stays absent (nullopt).
inline std::vector<std::optional<BinAggregate>> aggregate_by_bin(const std::vector<int>& bin_ids,
                                                                 const std::vector<double>& values,
                                                                 int n_bins) {
  if (bin_ids.size() != values.size()) throw DataError("aggregate_by_bin: size mismatch");
  std::vector<double> sums(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<long> counts(static_cast<std::size_t>(n_bins), 0);
  for (std::size_t i = 0; i < bin_ids.size(); ++i) {
    int b = bin_ids[i];
    if (b < 0 || b >= n_bins) throw DataError("aggregate_by_bin: bin id out of range");
    sums[static_cast<std::size_t>(b)] += values[i];
    ++counts[static_cast<std::size_t>(b)];
  }
  std::vector<std::optional<BinAggregate>> out(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    if (counts[static_cast<std::size_t>(b)] > 0)
      out[static_cast<std::size_t>(b)] = BinAggregate{
          sums[static_cast<std::size_t>(b)] / static_cast<double>(counts[static_cast<std::size_t>(b)]),
          counts[static_cast<std::size_t>(b)]};
  }
  return out;
}

}  // namespace mlquant
