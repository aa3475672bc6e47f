#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlquant/mlquant.hpp"

namespace {

using namespace mlquant;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw DataError("cannot open '" + path + "' for writing");
  return file;
}

void csv_preamble(std::ostream& os, std::uint64_t hash, std::uint64_t seed) {
  os << "# mlquant " << kVersion << "\n# config " << to_hex(hash) << "\n# seed " << seed << "\n";
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  for (const std::string& part : split_string(text, ',')) out.push_back(std::stod(part));
  return out;
}

int threads_from(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("MLQUANT_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 0;
}

struct StatsArgs {
  std::vector<std::string> files;
  std::string out;
  bool markdown = false;
};

int cmd_stats(const StatsArgs& a) {
  if (a.files.empty() || a.files.size() > 2)
    throw ConfigError("stats takes one or two files (train [test])");
  MultiLabelDataset train = load_dataset(a.files[0]);
  long train_n = train.n(), test_n = 0;
  MultiLabelDataset all = train;
  if (a.files.size() == 2) {
    MultiLabelDataset test = load_dataset(a.files[1]);
    test_n = test.n();
    all = concat_rows(all, test);
  }
  DatasetStats st = dataset_stats(all);
  std::string name = a.files[0];
  std::size_t slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);

  nlohmann::json inv = {{"cmd", "stats"}, {"files", a.files}};
  std::ofstream file;
  std::ostream& os = open_out(file, a.out);
  if (a.markdown) {
    os << "| dataset | classes | train | test | features | card | dens | div | ndiv | uniq |"
          " pmax |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    os << "| " << name << " | " << all.n_classes() << " | " << train_n << " | " << test_n
       << " | " << all.d() << " | " << format_double(st.card) << " | " << format_double(st.dens)
       << " | " << st.div << " | " << format_double(st.norm_div) << " | "
       << format_double(st.p_uniq) << " | " << format_double(st.p_max) << " |\n";
  } else {
    csv_preamble(os, fnv1a64(inv.dump()), 0);
    os << "dataset,classes,train,test,features,card,dens,div,norm_div,p_uniq,p_max\n";
    os << name << ',' << all.n_classes() << ',' << train_n << ',' << test_n << ',' << all.d()
       << ',' << format_double(st.card) << ',' << format_double(st.dens) << ',' << st.div << ','
       << format_double(st.norm_div) << ',' << format_double(st.p_uniq) << ','
       << format_double(st.p_max) << "\n";
  }
  return 0;
}

struct SplitArgs {
  std::string file;
  std::string fractions = "0.6,0.4";
  std::string out_prefix = "part";
  std::uint64_t seed = 42;
};

int cmd_split(const SplitArgs& a) {
  MultiLabelDataset ds = load_dataset(a.file);
  std::vector<double> fr = parse_fractions(a.fractions);
  std::vector<Sample> parts = iterative_stratified_split(ds, fr, a.seed);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    MultiLabelDataset sub = subset_rows(ds, parts[p].indices);
    std::string path = a.out_prefix + std::to_string(p) + ".svm";
    save_dataset(sub, path);
    std::cout << path << " " << sub.n() << " rows\n";
  }
  return 0;
}

struct SampleArgs {
  std::string file;
  int k = 100;
  int m = 1;
  double grid_start = 0.0, grid_step = 0.05, grid_stop = 1.0;
  std::uint64_t seed = 42;
  std::string out;
};

int cmd_sample(const SampleArgs& a) {
  MultiLabelDataset ds = load_dataset(a.file);
  MLAPPParams params;
  params.k = std::min(a.k, ds.n());
  params.m = a.m;
  params.grid = make_grid(a.grid_start, a.grid_step, a.grid_stop);
  params.seed = a.seed;
  std::vector<GeneratedSample> samples = mlapp_generate(ds, params);
  PrevalenceVector train_prev = true_prevalence(ds);
  fill_shifts(samples, train_prev);
  nlohmann::json inv = {{"cmd", "sample"}, {"file", a.file}, {"k", params.k},
                        {"m", a.m},        {"grid", params.grid}};
  std::ofstream file;
  std::ostream& os = open_out(file, a.out);
  write_samples_csv(samples, os, to_hex(fnv1a64(inv.dump())), a.seed);
  std::cerr << samples.size() << " samples\n";
  return 0;
}

struct TrainArgs {
  std::string file;
  std::string config;
  std::string out = "model.json";
  std::string report;
  bool gridsearch = false;
  std::uint64_t seed = 42;
};

int cmd_train(const TrainArgs& a) {
  MultiLabelDataset ds = load_dataset(a.file);
  nlohmann::json cj = read_json_file(a.config);
  PipelineSpec spec = PipelineSpec::from_json(cj.contains("spec") ? cj.at("spec") : cj);
  MLQuantifier q;
  if (a.gridsearch || cj.value("gridsearch", false)) {
    GridSpec grid = cj.contains("grid") ? GridSpec::from_json(cj.at("grid"))
                                        : GridSpec::defaults_for(spec, ds.n_classes());
    GridSearchOptions opt;
    if (cj.contains("val_fraction")) opt.val_fraction = cj.at("val_fraction").get<double>();
    opt.per_class = cj.value("per_class", false);
    auto [fitted, report] = grid_search(ds, spec, grid, opt, a.seed);
    q = std::move(fitted);
    if (!a.report.empty()) {
      std::ofstream rep(a.report, std::ios::binary);
      if (!rep) throw DataError("cannot open '" + a.report + "' for writing");
      report.write_csv(rep);
    }
  } else {
    q.spec = spec;
    q.fit(ds, a.seed);
  }
  std::ofstream os(a.out, std::ios::binary);
  if (!os) throw DataError("cannot open '" + a.out + "' for writing");
  os << q.to_json().dump(2) << "\n";
  std::cerr << "model written to " << a.out << "\n";
  return 0;
}

struct QuantifyArgs {
  std::string file;
  std::string model;
  std::string samples;
  std::string out;
};

int cmd_quantify(const QuantifyArgs& a) {
  MultiLabelDataset ds = load_dataset(a.file);
  MLQuantifier q = MLQuantifier::from_json(read_json_file(a.model));
  std::vector<GeneratedSample> samples;
  if (a.samples.empty()) {
    GeneratedSample gs;
    gs.sample = full_sample(ds);
    samples.push_back(std::move(gs));
  } else {
    std::ifstream in(a.samples);
    if (!in) throw DataError("cannot open '" + a.samples + "'");
    samples = read_samples_csv(in);
  }
  PoolContext ctx = q.prepare(ds.features);
  nlohmann::json inv = {{"cmd", "quantify"}, {"file", a.file}, {"model", a.model}};
  std::ofstream file;
  std::ostream& os = open_out(file, a.out);
  csv_preamble(os, fnv1a64(inv.dump()), 0);
  os << "sample_id,estimate\n";
  for (std::size_t s = 0; s < samples.size(); ++s) {
    PrevalenceVector est = q.quantify(ctx, samples[s].sample.indices);
    os << s << ',';
    for (int j = 0; j < est.values.size(); ++j) {
      if (j) os << ' ';
      os << format_double(est.values[j]);
    }
    os << '\n';
  }
  return 0;
}

struct EvaluateArgs {
  std::string file;
  std::string samples;
  std::string estimates;
  std::string train;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  MultiLabelDataset ds = load_dataset(a.file);
  std::ifstream sin(a.samples);
  if (!sin) throw DataError("cannot open '" + a.samples + "'");
  std::vector<GeneratedSample> samples = read_samples_csv(sin);
  fill_true_prevalence(samples, ds);

  std::ifstream ein(a.estimates);
  if (!ein) throw DataError("cannot open '" + a.estimates + "'");
  std::vector<Eigen::VectorXd> est(samples.size());
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(ein, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> cols = split_string(line, ',');
    if (cols.size() != 2)
      throw DataError("estimates line " + std::to_string(line_no) + ": expected 2 columns");
    std::size_t id = static_cast<std::size_t>(std::stol(cols[0]));
    if (id >= samples.size())
      throw DataError("estimates line " + std::to_string(line_no) + ": sample id out of range");
    std::vector<std::string> vals = split_string(cols[1], ' ');
    Eigen::VectorXd v(static_cast<long>(vals.size()));
    for (std::size_t j = 0; j < vals.size(); ++j) v[static_cast<long>(j)] = std::stod(vals[j]);
    est[id] = v;
  }

  std::vector<int> bins(samples.size(), 0);
  bool binned = !a.train.empty();
  if (binned) {
    MultiLabelDataset tr = load_dataset(a.train);
    fill_shifts(samples, true_prevalence(tr));
    ShiftBinning binning = bin_shifts(samples);
    bins = binning.bin_of;
  }
  std::vector<double> aes, raes;
  std::vector<int> used_bins;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (est[s].size() == 0) throw DataError("missing estimate for sample " + std::to_string(s));
    PrevalenceVector ev;
    ev.values = est[s];
    aes.push_back(ae_multilabel(samples[s].true_prev, ev));
    raes.push_back(rae_multilabel(samples[s].true_prev, ev,
                                  static_cast<int>(samples[s].sample.indices.size())));
    used_bins.push_back(bins[s]);
  }
  auto ae_bins = aggregate_by_bin(used_bins, aes, 3);
  auto rae_bins = aggregate_by_bin(used_bins, raes, 3);
  nlohmann::json inv = {{"cmd", "evaluate"}, {"file", a.file}, {"estimates", a.estimates}};
  std::ofstream file;
  std::ostream& os = open_out(file, a.out);
  csv_preamble(os, fnv1a64(inv.dump()), 0);
  os << "bin,mean_ae,mean_rae,n_samples\n";
  for (int b = 0; b < 3; ++b) {
    if (!ae_bins[static_cast<std::size_t>(b)]) continue;
    os << (binned ? ShiftBinning::bin_name(b) : "all") << ','
       << format_double(ae_bins[static_cast<std::size_t>(b)]->mean) << ','
       << format_double(rae_bins[static_cast<std::size_t>(b)]->mean) << ','
       << ae_bins[static_cast<std::size_t>(b)]->count << '\n';
    if (!binned) break;
  }
  return 0;
}

struct GridArgs {
  std::string file;
  std::string config;
  std::string out;
  std::string save_model;
  std::uint64_t seed = 42;
};

int cmd_gridsearch(const GridArgs& a) {
  MultiLabelDataset ds = load_dataset(a.file);
  nlohmann::json cj = read_json_file(a.config);
  PipelineSpec spec = PipelineSpec::from_json(cj.contains("spec") ? cj.at("spec") : cj);
  GridSpec grid = cj.contains("grid") ? GridSpec::from_json(cj.at("grid"))
                                      : GridSpec::defaults_for(spec, ds.n_classes());
  GridSearchOptions opt;
  if (cj.contains("val_fraction")) opt.val_fraction = cj.at("val_fraction").get<double>();
  opt.per_class = cj.value("per_class", false);
  if (cj.contains("val_mlapp")) {
    opt.mlapp.k = cj.at("val_mlapp").value("k", 100);
    opt.mlapp.m = cj.at("val_mlapp").value("m", 1);
  }
  auto [fitted, report] = grid_search(ds, spec, grid, opt, a.seed);
  std::ofstream file;
  std::ostream& os = open_out(file, a.out);
  report.write_csv(os);
  if (!a.save_model.empty()) {
    std::ofstream ms(a.save_model, std::ios::binary);
    if (!ms) throw DataError("cannot open '" + a.save_model + "' for writing");
    ms << fitted.to_json().dump(2) << "\n";
  }
  return 0;
}

struct ExperimentArgs {
  std::string config;
  std::string out_dir = ".";
  std::int64_t seed = -1;
  bool markdown = false;
};

int cmd_experiment(const ExperimentArgs& a) {
  ExperimentConfig cfg = ExperimentConfig::from_json(read_json_file(a.config));
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  ExperimentOutput out = run_experiment(cfg);
  std::filesystem::create_directories(a.out_dir);
  write_experiment_outputs(out, a.out_dir);
  if (a.markdown) {
    std::string md = render_markdown(out.records);
    write_text_file(a.out_dir + "/summary.md", md);
    std::cout << md;
  } else {
    for (const ResultRecord& r : out.records) {
      std::cout << r.method << " " << r.bin << " ";
      if (r.bin == "error")
        std::cout << r.error << "\n";
      else
        std::cout << "ae=" << format_double(r.mean_ae) << " rae=" << format_double(r.mean_rae)
                  << " n=" << r.n_samples << "\n";
    }
  }
  std::cerr << "outputs in " << a.out_dir << "\n";
  return 0;
}

struct SynthArgs {
  std::string config;
  std::string mode = "intervals";
  int rows = 5000;
  int classes = 6;
  std::uint64_t seed = 42;
  std::string out = "synth.svm";
};

int cmd_synth(const SynthArgs& a) {
  SynthConfig cfg;
  if (!a.config.empty()) {
    cfg = SynthConfig::from_json(read_json_file(a.config));
  } else {
    cfg.mode = a.mode;
    cfg.n_classes = a.classes;
    cfg.validate();
  }
  MultiLabelDataset ds = synth_generate(cfg, a.rows, a.seed);
  save_dataset(ds, a.out);
  std::cout << a.out << " " << ds.n() << " rows, " << ds.d() << " features, " << ds.n_classes()
            << " classes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mlquant: multi-label quantification toolkit"};
  app.require_subcommand(1);
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "worker threads (or MLQUANT_THREADS)");

  StatsArgs stats;
  CLI::App* c_stats = app.add_subcommand("stats", "dataset summary statistics");
  c_stats->add_option("files", stats.files, "svmlight files")->required()->expected(-1);
  c_stats->add_option("--out", stats.out, "output file (default stdout)");
  c_stats->add_flag("--markdown", stats.markdown, "markdown table");

  SplitArgs split;
  CLI::App* c_split = app.add_subcommand("split", "iterative stratified split");
  c_split->add_option("file", split.file)->required();
  c_split->add_option("--fractions", split.fractions, "comma-separated, sum to 1");
  c_split->add_option("--out-prefix", split.out_prefix);
  c_split->add_option("--seed", split.seed);

  SampleArgs sample;
  CLI::App* c_sample = app.add_subcommand("sample", "generate protocol samples");
  c_sample->add_option("file", sample.file)->required();
  c_sample->add_option("--k", sample.k, "sample size");
  c_sample->add_option("--m", sample.m, "repetitions per grid point");
  c_sample->add_option("--grid-start", sample.grid_start);
  c_sample->add_option("--grid-step", sample.grid_step);
  c_sample->add_option("--grid-stop", sample.grid_stop);
  c_sample->add_option("--seed", sample.seed);
  c_sample->add_option("--out", sample.out, "output CSV (default stdout)");

  TrainArgs train;
  CLI::App* c_train = app.add_subcommand("train", "fit a quantifier and save it");
  c_train->add_option("file", train.file)->required();
  c_train->add_option("--config", train.config, "pipeline spec JSON")->required();
  c_train->add_option("--out", train.out, "model output path");
  c_train->add_option("--report", train.report, "selection report CSV");
  c_train->add_flag("--gridsearch", train.gridsearch, "run grid search first");
  c_train->add_option("--seed", train.seed);

  QuantifyArgs quantify;
  CLI::App* c_quant = app.add_subcommand("quantify", "estimate prevalence with a saved model");
  c_quant->add_option("file", quantify.file)->required();
  c_quant->add_option("--model", quantify.model)->required();
  c_quant->add_option("--samples", quantify.samples, "samples CSV (default: whole file)");
  c_quant->add_option("--out", quantify.out, "output CSV (default stdout)");

  EvaluateArgs evaluate;
  CLI::App* c_eval = app.add_subcommand("evaluate", "score saved estimates");
  c_eval->add_option("file", evaluate.file)->required();
  c_eval->add_option("--samples", evaluate.samples)->required();
  c_eval->add_option("--estimates", evaluate.estimates)->required();
  c_eval->add_option("--train", evaluate.train, "training set (enables shift bins)");
  c_eval->add_option("--out", evaluate.out, "output CSV (default stdout)");

  GridArgs grid;
  CLI::App* c_grid = app.add_subcommand("gridsearch", "quantification-oriented model selection");
  c_grid->add_option("file", grid.file)->required();
  c_grid->add_option("--config", grid.config, "pipeline spec JSON (+ optional grid)")->required();
  c_grid->add_option("--out", grid.out, "report CSV (default stdout)");
  c_grid->add_option("--save-model", grid.save_model);
  c_grid->add_option("--seed", grid.seed);

  ExperimentArgs experiment;
  CLI::App* c_exp = app.add_subcommand("experiment", "run a full experiment");
  c_exp->add_option("--config", experiment.config)->required();
  c_exp->add_option("--out", experiment.out_dir, "output directory");
  c_exp->add_option("--seed", experiment.seed, "override config seed");
  c_exp->add_flag("--markdown", experiment.markdown);

  SynthArgs synth;
  CLI::App* c_synth = app.add_subcommand("synth", "emit a synthetic dataset");
  c_synth->add_option("--config", synth.config, "generator config JSON");
  c_synth->add_option("--mode", synth.mode, "intervals | independent | copy");
  c_synth->add_option("--rows", synth.rows);
  c_synth->add_option("--classes", synth.classes);
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--out", synth.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  int threads = threads_from(threads_flag);
  if (threads > 0) Eigen::setNbThreads(threads);

  try {
    if (*c_stats) return cmd_stats(stats);
    if (*c_split) return cmd_split(split);
    if (*c_sample) return cmd_sample(sample);
    if (*c_train) return cmd_train(train);
    if (*c_quant) return cmd_quantify(quantify);
    if (*c_eval) return cmd_evaluate(evaluate);
    if (*c_grid) return cmd_gridsearch(grid);
    if (*c_exp) return cmd_experiment(experiment);
    if (*c_synth) return cmd_synth(synth);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
