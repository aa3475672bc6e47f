#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "mlquant/protocol.hpp"
#include "mlquant/synth.hpp"

using namespace mlquant;

namespace {

MultiLabelDataset tiny_pool(int n, int L, double density, std::uint64_t seed) {
  Rng rng(seed);
  MultiLabelDataset ds;
  ds.labels.resize(n, L);
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, 0, rng.next_double());
    for (int j = 0; j < L; ++j) ds.labels(i, j) = rng.next_double() < density ? 1 : 0;
  }
  ds.features.resize(n, 1);
  ds.features.setFromTriplets(trip.begin(), trip.end());
  for (int j = 0; j < L; ++j) ds.class_names.push_back("y" + std::to_string(j));
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("make_grid hits exact endpoints") {
  std::vector<double> g = make_grid(0.0, 0.05, 1.0);
  REQUIRE(g.size() == 21);
  REQUIRE(g.front() == 0.0);
  REQUIRE(g.back() == 1.0);
  MLAPPParams p;
  p.grid = g;
  REQUIRE_NOTHROW(p.validate());
}

TEST_CASE("positives_for snaps near-integer targets before the ceiling") {
  REQUIRE(positives_for(100, 0.05) == 5);      // 100*0.05 = 5.000000000000001 in fp
  REQUIRE(positives_for(100, 0.0) == 0);
  REQUIRE(positives_for(100, 1.0) == 100);
  REQUIRE(positives_for(100, 1.0 / 3.0) == 34);  // 33.33 -> ceil
  REQUIRE(positives_for(20, 0.15) == 3);
}

TEST_CASE("generated samples carry the exact targeted prevalence") {
  MultiLabelDataset ds = tiny_pool(300, 4, 0.4, 7);
  MLAPPParams params;
  params.k = 50;
  params.m = 2;
  params.grid = make_grid(0.0, 0.25, 1.0);
  params.seed = 42;
  std::vector<GeneratedSample> samples = mlapp_generate(ds, params);
  REQUIRE(!samples.empty());
  REQUIRE(samples.size() <= static_cast<std::size_t>(params.m * 4 * 5));
  for (const GeneratedSample& gs : samples) {
    REQUIRE(gs.sample.indices.size() == 50);
    std::set<int> uniq(gs.sample.indices.begin(), gs.sample.indices.end());
    REQUIRE(uniq.size() == 50);
    int pos = 0;
    for (int idx : gs.sample.indices) pos += ds.labels(idx, gs.targeted_class);
    int want = positives_for(params.k, gs.targeted_prevalence);
    REQUIRE(pos == want);
    // true prevalence of the targeted class equals Pos/k exactly
    REQUIRE(gs.true_prev.values[gs.targeted_class] ==
            Catch::Approx(static_cast<double>(want) / 50.0).margin(1e-12));
  }
}

TEST_CASE("skipped pairs are exactly the pool-guard violations") {
  // y0 has 6 positives of 30 rows; k = 20 means grid values needing more than
  // 6 positives (or more than 24 negatives) must be skipped.
  MultiLabelDataset ds = tiny_pool(30, 1, 0.2, 9);
  long pos_total = 0;
  for (int i = 0; i < 30; ++i) pos_total += ds.labels(i, 0);
  MLAPPParams params;
  params.k = 20;
  params.m = 1;
  params.grid = make_grid(0.0, 0.1, 1.0);
  params.seed = 5;
  std::vector<GeneratedSample> samples = mlapp_generate(ds, params);
  std::set<int> got;
  for (const GeneratedSample& gs : samples) {
    int pos = 0;
    for (int idx : gs.sample.indices) pos += ds.labels(idx, 0);
    got.insert(pos);
  }
  for (double g : params.grid) {
    int pos = positives_for(params.k, g);
    int neg = params.k - pos;
    bool feasible = pos <= pos_total && neg <= 30 - pos_total;
    REQUIRE(got.count(pos) == (feasible ? 1u : 0u));
  }
}

TEST_CASE("generation is deterministic and pools are not consumed") {
  MultiLabelDataset ds = tiny_pool(100, 3, 0.3, 11);
  MLAPPParams params;
  params.k = 30;
  params.m = 3;
  params.grid = {0.0, 0.5, 1.0};
  params.seed = 77;
  auto a = mlapp_generate(ds, params);
  auto b = mlapp_generate(ds, params);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].sample.indices == b[i].sample.indices);
  // repetitions for the same (class, g) differ
  bool some_rep_differs = false;
  for (std::size_t i = 0; i + 1 < a.size(); ++i)
    if (a[i].targeted_class == a[i + 1].targeted_class &&
        a[i].targeted_prevalence == a[i + 1].targeted_prevalence &&
        a[i].sample.indices != a[i + 1].sample.indices)
      some_rep_differs = true;
  REQUIRE(some_rep_differs);
}

TEST_CASE("uniform samples have the requested size") {
  MultiLabelDataset ds = tiny_pool(60, 2, 0.4, 13);
  std::vector<GeneratedSample> samples = uniform_generate(ds, 25, 4, 99);
  REQUIRE(samples.size() == 4);
  for (const GeneratedSample& gs : samples) {
    REQUIRE(gs.sample.indices.size() == 25);
    REQUIRE(gs.targeted_class == -1);
  }
}

TEST_CASE("shift binning splits the observed range in thirds") {
  std::vector<GeneratedSample> samples(6);
  double shifts[6] = {0.0, 0.05, 0.35, 0.55, 0.65, 0.9};
  for (int i = 0; i < 6; ++i) samples[static_cast<std::size_t>(i)].shift = shifts[i];
  ShiftBinning b = bin_shifts(samples);
  REQUIRE(b.boundaries[0] == Catch::Approx(0.3));
  REQUIRE(b.boundaries[1] == Catch::Approx(0.6));
  REQUIRE(b.bin_of == std::vector<int>{0, 0, 1, 1, 2, 2});

  std::vector<GeneratedSample> flat(3);
  for (auto& gs : flat) gs.shift = 0.25;
  ShiftBinning fb = bin_shifts(flat);
  REQUIRE(fb.bin_of == std::vector<int>{0, 0, 0});

  std::vector<GeneratedSample> unset(1);
  REQUIRE_THROWS_AS(bin_shifts(unset), DataError);
}

TEST_CASE("samples csv round-trips") {
  MultiLabelDataset ds = tiny_pool(80, 2, 0.4, 17);
  MLAPPParams params;
  params.k = 20;
  params.m = 1;
  params.grid = {0.0, 0.5, 1.0};
  params.seed = 3;
  std::vector<GeneratedSample> samples = mlapp_generate(ds, params);
  fill_shifts(samples, true_prevalence(ds));

  std::ostringstream out;
  write_samples_csv(samples, out, "deadbeef", 3);
  REQUIRE(out.str().rfind("# mlquant", 0) == 0);
  REQUIRE(out.str().find("# config deadbeef") != std::string::npos);
  REQUIRE(out.str().find("# seed 3") != std::string::npos);

  std::istringstream in(out.str());
  std::vector<GeneratedSample> back = read_samples_csv(in);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    REQUIRE(back[i].sample.indices == samples[i].sample.indices);
    REQUIRE(back[i].targeted_class == samples[i].targeted_class);
    REQUIRE(back[i].targeted_prevalence ==
            Catch::Approx(samples[i].targeted_prevalence).margin(1e-12));
  }
  fill_true_prevalence(back, ds);
  for (std::size_t i = 0; i < samples.size(); ++i)
    REQUIRE(back[i].true_prev.values == samples[i].true_prev.values);
}
