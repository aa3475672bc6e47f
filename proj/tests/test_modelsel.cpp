#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <vector>

#include "mlquant/modelsel.hpp"
#include "mlquant/rng.hpp"

using namespace mlquant;

namespace {

// One latent factor drives both classes; extra columns are pure noise. Heavy
// regularization flattens the signal, so model selection has a real choice.
MultiLabelDataset latent_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  MultiLabelDataset ds;
  ds.labels.resize(n, 2);
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_double();
    trip.emplace_back(i, 0, u + 0.05 * rng.next_normal());
    for (int j = 1; j < 4; ++j) trip.emplace_back(i, j, rng.next_normal());
    ds.labels(i, 0) = u < 0.5 ? 1 : 0;
    ds.labels(i, 1) = u > 0.3 ? 1 : 0;
  }
  ds.labels(0, 0) = 0;
  ds.labels(0, 1) = 1;
  ds.labels(1, 0) = 1;
  ds.labels(1, 1) = 0;
  ds.features.resize(n, 4);
  ds.features.setFromTriplets(trip.begin(), trip.end());
  ds.class_names = {"lo", "hi"};
  ds.validate();
  return ds;
}

PipelineSpec bc_pcc_spec() {
  PipelineSpec s;
  s.family = Family::BcBa;
  s.classifier = ClassifierKind::IndependentBinary;
  s.aggregator = AggregatorKind::PerClassBinary;
  s.base_method = BaseMethod::PCC;
  return s;
}

GridSearchOptions fast_options() {
  GridSearchOptions opt;
  opt.mlapp.k = 20;
  opt.mlapp.m = 1;
  opt.mlapp.grid = make_grid(0.0, 0.25, 1.0);
  return opt;
}

}  // namespace

TEST_CASE("grid configurations enumerate the cartesian product in order") {
  GridSpec g;
  g.dims.push_back({"a", {"1", "2"}});
  g.dims.push_back({"b", {"x", "y", "z"}});
  REQUIRE(g.size() == 6);
  auto cfgs = g.configurations();
  REQUIRE(cfgs.size() == 6);
  // First dimension varies slowest.
  REQUIRE(cfgs[0] == std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "x"}});
  REQUIRE(cfgs[1] == std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "y"}});
  REQUIRE(cfgs[3] == std::vector<std::pair<std::string, std::string>>{{"a", "2"}, {"b", "x"}});
  REQUIRE(cfgs[5] == std::vector<std::pair<std::string, std::string>>{{"a", "2"}, {"b", "z"}});

  GridSpec empty_dim;
  empty_dim.dims.push_back({"a", {}});
  REQUIRE_THROWS_AS(empty_dim.configurations(), ConfigError);
}

TEST_CASE("grid values map onto PipelineSpec fields") {
  PipelineSpec s = bc_pcc_spec();
  apply_grid_value(s, "c", "12.5");
  REQUIRE(s.binary_gp.c == 12.5);
  apply_grid_value(s, "class_weight", "balanced");
  REQUIRE(s.binary_gp.class_weight == ClassWeight::Balanced);
  apply_grid_value(s, "meta_c", "3");
  REQUIRE(s.meta_gp.c == 3.0);
  apply_grid_value(s, "normalize", "true");
  REQUIRE(s.meta_gp.normalize);
  apply_grid_value(s, "ridge_alpha", "0.01");
  REQUIRE(s.ridge_alpha == 0.01);
  apply_grid_value(s, "knn_k", "7");
  REQUIRE(s.knn_k == 7);
  apply_grid_value(s, "k_clusters", "3");
  REQUIRE(s.k_clusters == 3);
  apply_grid_value(s, "lpq_c", "0.5");
  REQUIRE(s.lpq_gp.c == 0.5);
  apply_grid_value(s, "base_method", "sld");
  REQUIRE(s.base_method == BaseMethod::SLD);
  REQUIRE_THROWS_AS(apply_grid_value(s, "c", "abc"), ConfigError);
  REQUIRE_THROWS_AS(apply_grid_value(s, "knn_k", "1.5"), ConfigError);
  REQUIRE_THROWS_AS(apply_grid_value(s, "mystery", "1"), ConfigError);
}

TEST_CASE("grid specs parse from json in both shapes") {
  GridSpec a = GridSpec::from_json(nlohmann::json::parse(
      R"([{"name":"c","values":[0.1,1,10]},{"name":"class_weight","values":["none"]}])"));
  REQUIRE(a.dims.size() == 2);
  REQUIRE(a.dims[0].name == "c");
  REQUIRE(a.dims[0].values == std::vector<std::string>{"0.1", "1", "10"});

  GridSpec b = GridSpec::from_json(nlohmann::json::parse(
      R"({"normalize":[true,false],"c":[1]})"));
  REQUIRE(b.dims.size() == 2);
  REQUIRE(b.dims[0].name == "c");  // object keys iterate sorted
  REQUIRE(b.dims[1].values == std::vector<std::string>{"true", "false"});

  REQUIRE_THROWS_AS(GridSpec::from_json(nlohmann::json::parse("3")), ConfigError);
  GridSpec rt = GridSpec::from_json(nlohmann::json::parse(a.to_json().dump()));
  REQUIRE(rt.to_json().dump() == a.to_json().dump());
}

TEST_CASE("default grids depend on the pipeline shape") {
  PipelineSpec bc = bc_pcc_spec();
  GridSpec g1 = GridSpec::defaults_for(bc, 6);
  REQUIRE(g1.dims.size() == 2);
  REQUIRE(g1.dims[0].name == "c");
  REQUIRE(g1.dims[0].values.size() == 5);
  REQUIRE(g1.dims[1].name == "class_weight");

  PipelineSpec stacked = bc;
  stacked.family = Family::MlcBa;
  stacked.classifier = ClassifierKind::Stacked;
  GridSpec g2 = GridSpec::defaults_for(stacked, 6);
  REQUIRE(g2.dims[0].name == "meta_c");
  REQUIRE(g2.dims[2].name == "normalize");

  PipelineSpec rq = bc;
  rq.family = Family::BcMla;
  rq.aggregator = AggregatorKind::RQ;
  GridSpec g3 = GridSpec::defaults_for(rq, 6);
  REQUIRE(g3.dims.back().name == "ridge_alpha");
  REQUIRE(g3.dims.back().values.size() == 7);

  PipelineSpec lpq = rq;
  lpq.aggregator = AggregatorKind::LPQ;
  GridSpec g4 = GridSpec::defaults_for(lpq, 3);
  REQUIRE(g4.dims[0].name == "k_clusters");
  REQUIRE(g4.dims[0].values == std::vector<std::string>{"1", "2"});  // 5 > n_classes
}

TEST_CASE("a one-point grid selects that point and refits it") {
  MultiLabelDataset ds = latent_dataset(80, 3);
  GridSpec grid;
  grid.dims.push_back({"c", {"2"}});
  auto [model, report] = grid_search(ds, bc_pcc_spec(), grid, fast_options(), 5);
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.chosen_index == 0);
  REQUIRE(report.rows[0].error.empty());
  REQUIRE(std::isfinite(report.rows[0].mean_ae));
  REQUIRE(model.spec.binary_gp.c == 2.0);
  REQUIRE(model.n_classes() == 2);

  std::ostringstream csv;
  report.write_csv(csv);
  REQUIRE(csv.str().find("index,params,mean_ae,n_samples,chosen,error") != std::string::npos);
  REQUIRE(csv.str().find("c=2") != std::string::npos);
}

TEST_CASE("equal scores keep the earliest configuration") {
  MultiLabelDataset ds = latent_dataset(70, 7);
  GridSpec grid;
  grid.dims.push_back({"c", {"1", "1", "1"}});
  auto [model, report] = grid_search(ds, bc_pcc_spec(), grid, fast_options(), 9);
  REQUIRE(report.rows.size() == 3);
  REQUIRE(report.rows[0].mean_ae == report.rows[1].mean_ae);
  REQUIRE(report.rows[1].mean_ae == report.rows[2].mean_ae);
  REQUIRE(report.chosen_index == 0);
}

TEST_CASE("a failing configuration scores infinity and is skipped") {
  MultiLabelDataset ds = latent_dataset(70, 11);
  GridSpec grid;
  grid.dims.push_back({"c", {"1"}});
  grid.dims.push_back({"regressor", {"forest", "ridge"}});
  auto [model, report] = grid_search(ds, bc_pcc_spec(), grid, fast_options(), 13);
  REQUIRE(report.rows.size() == 2);
  REQUIRE(std::isinf(report.rows[0].mean_ae));
  REQUIRE(!report.rows[0].error.empty());
  REQUIRE(report.chosen_index == 1);
  (void)model;

  GridSpec all_bad;
  all_bad.dims.push_back({"regressor", {"forest"}});
  REQUIRE_THROWS_AS(grid_search(ds, bc_pcc_spec(), all_bad, fast_options(), 13), ConfigError);
}

TEST_CASE("selection is deterministic in the seed") {
  MultiLabelDataset ds = latent_dataset(80, 17);
  GridSpec grid;
  grid.dims.push_back({"c", {"0.1", "10"}});
  auto [m1, r1] = grid_search(ds, bc_pcc_spec(), grid, fast_options(), 21);
  auto [m2, r2] = grid_search(ds, bc_pcc_spec(), grid, fast_options(), 21);
  REQUIRE(r1.chosen_index == r2.chosen_index);
  REQUIRE(r1.n_validation_samples == r2.n_validation_samples);
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    REQUIRE(r1.rows[i].mean_ae == r2.rows[i].mean_ae);
    REQUIRE(r1.rows[i].n_samples == r1.n_validation_samples);
  }
  PrevalenceVector p1 = m1.quantify_dataset(ds);
  PrevalenceVector p2 = m2.quantify_dataset(ds);
  REQUIRE((p1.values - p2.values).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("selection prefers the model that can express the signal") {
  // c = 1e-4 regularizes the weights to nearly zero, pinning estimates at the
  // training prevalence; c = 1 tracks the latent factor. Validation samples
  // sweep the prevalence range, so the flexible model wins.
  MultiLabelDataset ds = latent_dataset(160, 23);
  GridSpec grid;
  grid.dims.push_back({"c", {"0.0001", "1"}});
  auto [model, report] = grid_search(ds, bc_pcc_spec(), grid, fast_options(), 29);
  REQUIRE(report.chosen_index == 1);
  REQUIRE(report.rows[1].mean_ae < report.rows[0].mean_ae);
  REQUIRE(model.spec.binary_gp.c == 1.0);
}

TEST_CASE("per-class selection can mix configurations") {
  MultiLabelDataset ds = latent_dataset(90, 31);
  GridSpec grid;
  grid.dims.push_back({"c", {"0.5", "2"}});
  GridSearchOptions opt = fast_options();
  opt.per_class = true;
  auto [model, report] = grid_search(ds, bc_pcc_spec(), grid, opt, 37);
  REQUIRE(report.per_class_choice.size() == 2);
  for (int choice : report.per_class_choice) {
    REQUIRE(choice >= 0);
    REQUIRE(choice < 2);
  }
  REQUIRE(model.spec.per_class_gp.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    double c = model.spec.per_class_gp[j].c;
    REQUIRE((c == 0.5 || c == 2.0));
  }
  std::ostringstream csv;
  report.write_csv(csv);
  REQUIRE(csv.str().find("# per_class_choice") != std::string::npos);

  PipelineSpec stacked = bc_pcc_spec();
  stacked.family = Family::MlcBa;
  stacked.classifier = ClassifierKind::Stacked;
  REQUIRE_THROWS_AS(grid_search(ds, stacked, grid, opt, 37), ConfigError);
}

TEST_CASE("grid_search validates its arguments") {
  MultiLabelDataset ds = latent_dataset(60, 41);
  GridSpec empty;
  REQUIRE_THROWS_AS(grid_search(ds, bc_pcc_spec(), empty, fast_options(), 1), ConfigError);
  GridSpec grid;
  grid.dims.push_back({"c", {"1"}});
  GridSearchOptions opt = fast_options();
  opt.val_fraction = 1.0;
  REQUIRE_THROWS_AS(grid_search(ds, bc_pcc_spec(), grid, opt, 1), ConfigError);
}
