#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mlquant/dataset.hpp"
#include "mlquant/rng.hpp"

namespace mlquant {

// Greedy Sechidis-style iterative stratification over a binary label matrix.
// Repeatedly takes the label with the fewest unassigned positive rows and
// assigns each of those rows to the part with the greatest remaining demand
// for that label; ties fall back to greatest total remaining demand, then to
// the seeded RNG. Zero-label rows are assigned last, each to the part with the
// greatest remaining row capacity.
inline std::vector<Sample> iterative_stratified_split_labels(const LabelMatrix& labels,
                                                             const std::vector<double>& fractions,
                                                             std::uint64_t seed) {
  const int n = static_cast<int>(labels.rows());
  const int L = static_cast<int>(labels.cols());
  const int P = static_cast<int>(fractions.size());
  if (P == 0) throw ConfigError("iterative_stratified_split: no fractions");
  double fsum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw ConfigError("iterative_stratified_split: fraction <= 0");
    fsum += f;
  }
  if (std::abs(fsum - 1.0) > 1e-9)
    throw ConfigError("iterative_stratified_split: fractions must sum to 1");

  Rng rng = substream(seed, "stratified_split");

  std::vector<long> total_pos(static_cast<std::size_t>(L), 0);
  for (int j = 0; j < L; ++j)
    for (int i = 0; i < n; ++i) total_pos[static_cast<std::size_t>(j)] += labels(i, j);

  // demand[p][l]: how many positives of label l part p still wants.
  std::vector<std::vector<double>> demand(static_cast<std::size_t>(P),
                                          std::vector<double>(static_cast<std::size_t>(L), 0.0));
  std::vector<double> capacity(static_cast<std::size_t>(P), 0.0);
  for (int p = 0; p < P; ++p) {
    capacity[static_cast<std::size_t>(p)] = fractions[static_cast<std::size_t>(p)] * n;
    for (int l = 0; l < L; ++l)
      demand[static_cast<std::size_t>(p)][static_cast<std::size_t>(l)] =
          fractions[static_cast<std::size_t>(p)] * static_cast<double>(total_pos[static_cast<std::size_t>(l)]);
  }

  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  std::vector<long> remaining_pos = total_pos;

  auto assign_row = [&](int row, int part) {
    assignment[static_cast<std::size_t>(row)] = part;
    capacity[static_cast<std::size_t>(part)] -= 1.0;
    for (int l = 0; l < L; ++l) {
      if (labels(row, l)) {
        demand[static_cast<std::size_t>(part)][static_cast<std::size_t>(l)] -= 1.0;
        --remaining_pos[static_cast<std::size_t>(l)];
      }
    }
  };

  while (true) {
    // Label with the fewest remaining unassigned positives (>0); ties by id.
    int target = -1;
    long best = 0;
    for (int l = 0; l < L; ++l) {
      long r = remaining_pos[static_cast<std::size_t>(l)];
      if (r > 0 && (target < 0 || r < best)) {
        target = l;
        best = r;
      }
    }
    if (target < 0) break;

    for (int i = 0; i < n; ++i) {
      if (assignment[static_cast<std::size_t>(i)] >= 0 || !labels(i, target)) continue;
      std::vector<int> cand;
      double best_d = -1e300;
      for (int p = 0; p < P; ++p) {
        double d = demand[static_cast<std::size_t>(p)][static_cast<std::size_t>(target)];
        if (d > best_d + 1e-12) {
          best_d = d;
          cand.assign(1, p);
        } else if (d > best_d - 1e-12) {
          cand.push_back(p);
        }
      }
      if (cand.size() > 1) {
        double best_t = -1e300;
        std::vector<int> cand2;
        for (int p : cand) {
          double t = 0.0;
          for (int l = 0; l < L; ++l) t += demand[static_cast<std::size_t>(p)][static_cast<std::size_t>(l)];
          if (t > best_t + 1e-12) {
            best_t = t;
            cand2.assign(1, p);
          } else if (t > best_t - 1e-12) {
            cand2.push_back(p);
          }
        }
        cand = std::move(cand2);
      }
      int part = cand.size() == 1 ? cand[0] : cand[static_cast<std::size_t>(rng.below(cand.size()))];
      assign_row(i, part);
    }
  }

  // Zero-label rows: greatest remaining capacity, ties by RNG.
  for (int i = 0; i < n; ++i) {
    if (assignment[static_cast<std::size_t>(i)] >= 0) continue;
    std::vector<int> cand;
    double best_c = -1e300;
    for (int p = 0; p < P; ++p) {
      double c = capacity[static_cast<std::size_t>(p)];
      if (c > best_c + 1e-12) {
        best_c = c;
        cand.assign(1, p);
      } else if (c > best_c - 1e-12) {
        cand.push_back(p);
      }
    }
    int part = cand.size() == 1 ? cand[0] : cand[static_cast<std::size_t>(rng.below(cand.size()))];
    assign_row(i, part);
  }

  std::vector<Sample> parts(static_cast<std::size_t>(P));
  for (int i = 0; i < n; ++i)
    parts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].indices.push_back(i);
  return parts;
}

inline std::vector<Sample> iterative_stratified_split(const MultiLabelDataset& ds,
                                                      const std::vector<double>& fractions,
                                                      std::uint64_t seed) {
  return iterative_stratified_split_labels(ds.labels, fractions, seed);
}

// Stratified k-fold as equal fractions; returns fold membership per row.
inline std::vector<int> stratified_fold_ids(const LabelMatrix& labels, int folds,
                                            std::uint64_t seed) {
  if (folds < 2) throw ConfigError("stratified_fold_ids: folds must be >= 2");
  std::vector<double> fractions(static_cast<std::size_t>(folds),
                                1.0 / static_cast<double>(folds));
  // Guard against accumulated rounding in the sum check.
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < fractions.size(); ++i) s += fractions[i];
  fractions.back() = 1.0 - s;
  std::vector<Sample> parts = iterative_stratified_split_labels(labels, fractions, seed);
  std::vector<int> fold(static_cast<std::size_t>(labels.rows()), -1);
  for (int f = 0; f < folds; ++f)
    for (int idx : parts[static_cast<std::size_t>(f)].indices)
      fold[static_cast<std::size_t>(idx)] = f;
  return fold;
}

}  // namespace mlquant
