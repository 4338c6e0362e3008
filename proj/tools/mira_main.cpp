// mira: synthetic biased-sampling domain adaptation experiments.
//
// Subcommands:
//   gen              write synthetic source/target datasets to CSV
//   train            one training run -> metrics.csv, summary.json, params.txt
//   sweep            grid over k, gamma or the ablation rows -> sweep.csv
//   eval             accuracy / error breakdown of a checkpoint on a dataset
//   dump-embeddings  per-sample f and g vectors with domain tags
//
// Exit codes: 0 success, 2 invalid config or input files, 3 numerical
// failure (non-finite loss during training).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mira/harness.hpp"
#include "mira/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigCli {
  std::string config_path;
  // Raw flag values; applied on top of the config file so flags win.
  std::map<std::string, std::string> overrides;
};

// Every RunConfig key gets a CLI flag (underscores become dashes).
const std::vector<std::string> kConfigKeys = {
    "k", "gamma", "distance", "sigma", "weighting", "epochs", "batch_size",
    "eta0", "alpha", "beta", "mirror_layers", "mirror_pool", "d_f", "d_g",
    "d_hidden", "backbone_layers", "kmeans_max_iters", "kmeans_tol",
    "symmetric_kl", "anchor_mode", "momentum", "weight_decay",
    "head_lr_multiplier"};

void add_config_options(CLI::App* cmd, ConfigCli& cc) {
  cmd->add_option("--config", cc.config_path, "flat key=value config file");
  for (const auto& key : kConfigKeys) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    cmd->add_option_function<std::string>(
        flag, [&cc, key](const std::string& v) { cc.overrides[key] = v; },
        "override config key " + key);
  }
}

mira::RunConfig resolve_config(const ConfigCli& cc, std::uint64_t seed) {
  mira::RunConfig cfg;
  if (!cc.config_path.empty()) mira::apply_config_file(cfg, cc.config_path);
  for (const auto& [key, value] : cc.overrides)
    mira::apply_config_entry(cfg, key, value);
  cfg.seed = seed;
  mira::validate_config(cfg);
  return cfg;
}

json config_to_json(const mira::RunConfig& c) {
  return json{{"k", c.k},
              {"gamma", c.gamma},
              {"distance", c.distance.kind == mira::DistanceKind::Kind::euclidean
                               ? "euclidean"
                               : "gaussian"},
              {"sigma", c.distance.sigma},
              {"weighting", mira::to_string(c.weighting)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"eta0", c.lr.eta0},
              {"alpha", c.lr.alpha},
              {"beta", c.lr.beta},
              {"seed", c.seed},
              {"mirror_layers", mira::to_string(c.mirror_layers)},
              {"mirror_pool", mira::to_string(c.mirror_pool)},
              {"d_f", c.d_f},
              {"d_g", c.d_g},
              {"d_hidden", c.d_hidden},
              {"backbone_layers", c.backbone_layers},
              {"kmeans_max_iters", c.kmeans_max_iters},
              {"kmeans_tol", c.kmeans_tol},
              {"symmetric_kl", c.symmetric_kl},
              {"anchor_mode", mira::to_string(c.anchor_mode)},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"head_lr_multiplier", c.head_lr_multiplier}};
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw mira::ConfigError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) throw mira::ConfigError("no seeds given");
  return seeds;
}

int run_gen(const std::string& kind, const std::string& variant,
            std::size_t n_source, std::size_t n_target, std::uint64_t seed,
            const std::string& out_dir, bool hide_labels) {
  fs::create_directories(out_dir);
  mira::DomainDataset source, target;
  if (kind == "dilemma") {
    const auto spec = variant == "biased" ? mira::DilemmaSpec::biased()
                                          : mira::DilemmaSpec::unbiased();
    std::tie(source, target) = mira::gen_dilemma_1d(spec, n_source, n_target, seed);
  } else if (kind == "patterns") {
    auto spec = mira::PatternSpec::default_biased();
    if (variant == "unbiased") {
      for (auto& cls : spec.classes) cls.target_ratios = cls.source_ratios;
      spec.target_shift.clear();
    }
    std::tie(source, target) =
        mira::gen_biased_patterns(spec, std::max(n_source, n_target), seed);
  } else {
    throw mira::ConfigError("gen: kind must be dilemma or patterns");
  }
  const fs::path dir(out_dir);
  mira::io::write_dataset_csv(source, (dir / "source.csv").string(), false);
  mira::io::write_dataset_csv(target, (dir / "target.csv").string(), hide_labels);
  if (!source.subpatterns.empty()) {
    mira::io::write_patterns_csv(source, (dir / "source_patterns.csv").string());
    mira::io::write_patterns_csv(target, (dir / "target_patterns.csv").string());
  }
  std::cout << "wrote " << (dir / "source.csv").string() << " ("
            << source.size() << " rows), " << (dir / "target.csv").string()
            << " (" << target.size() << " rows)\n";
  return 0;
}

int run_train(const ConfigCli& cc, std::uint64_t seed, const std::string& source_csv,
              const std::string& target_csv, const std::string& out_dir) {
  const mira::RunConfig cfg = resolve_config(cc, seed);
  const mira::DomainDataset source = mira::io::read_dataset_csv(source_csv);
  const mira::DomainDataset target = mira::io::read_dataset_csv(target_csv);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const mira::TrainResult result = mira::train(cfg, source, target);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  mira::io::write_metrics_csv(result.metrics, (dir / "metrics.csv").string());
  mira::save_params(result.params, (dir / "params.txt").string());

  json summary;
  summary["config"] = config_to_json(cfg);
  summary["source"] = {{"path", source_csv}, {"n", source.size()}, {"dim", source.dim()}};
  summary["target"] = {{"path", target_csv}, {"n", target.size()}, {"dim", target.dim()}};
  summary["epochs_run"] = result.metrics.size();
  summary["final_accuracy"] =
      result.metrics.empty() ? json(nullptr) : json(result.metrics.back().target_accuracy);
  summary["final_total_loss"] =
      result.metrics.empty() ? json(nullptr) : json(result.metrics.back().losses.total);
  summary["warnings"] = result.warnings;
  summary["wall_time_seconds"] = wall;
  write_json(summary, dir / "summary.json");

  std::cout << "trained " << result.metrics.size() << " epochs";
  if (!result.metrics.empty())
    std::cout << ", final target accuracy "
              << result.metrics.back().target_accuracy;
  std::cout << "\noutputs in " << out_dir << "\n";
  return 0;
}

int run_sweep(const ConfigCli& cc, const std::string& seeds_str,
              const std::string& axis_str, const std::string& values_str,
              const std::string& source_csv, const std::string& target_csv,
              const std::string& out_dir) {
  mira::SweepAxisKind axis;
  if (axis_str == "k") axis = mira::SweepAxisKind::k;
  else if (axis_str == "gamma") axis = mira::SweepAxisKind::gamma;
  else if (axis_str == "ablation") axis = mira::SweepAxisKind::ablation;
  else throw mira::ConfigError("sweep: axis must be k, gamma or ablation");

  std::vector<std::string> values;
  if (!values_str.empty()) {
    std::istringstream is(values_str);
    std::string tok;
    while (std::getline(is, tok, ',')) values.push_back(tok);
  } else {
    values = mira::default_axis_values(axis);
  }
  const auto seeds = parse_seed_list(seeds_str);
  const mira::RunConfig base = resolve_config(cc, seeds.front());
  const mira::DomainDataset source = mira::io::read_dataset_csv(source_csv);
  const mira::DomainDataset target = mira::io::read_dataset_csv(target_csv);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const mira::SweepResult result = mira::sweep(base, axis, values, seeds, source, target);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  mira::io::write_sweep_csv(result, (dir / "sweep.csv").string());
  mira::io::write_sweep_summary_csv(result, (dir / "sweep_summary.csv").string());

  json summary;
  summary["config"] = config_to_json(base);
  summary["axis"] = axis_str;
  summary["values"] = values;
  summary["seeds"] = seeds;
  summary["wall_time_seconds"] = wall;
  json rows = json::array();
  for (const auto& r : result.summary) {
    rows.push_back({{"value", r.value},
                    {"mean_accuracy", r.mean_accuracy},
                    {"std_accuracy", r.std_accuracy},
                    {"completed", r.completed}});
    std::cout << axis_str << "=" << r.value << ": " << r.mean_accuracy << " +- "
              << r.std_accuracy << " (" << r.completed << " runs)\n";
  }
  summary["cells"] = rows;
  write_json(summary, dir / "summary.json");
  std::cout << "outputs in " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& params_path, const std::string& data_csv,
             const std::string& patterns_csv, const std::string& json_out) {
  const mira::ModelParams params = mira::load_params(params_path);
  mira::DomainDataset data = mira::io::read_dataset_csv(data_csv);
  if (!patterns_csv.empty())
    data.subpatterns = mira::io::read_patterns_csv(patterns_csv, data.size());
  const mira::Evaluation ev = mira::evaluate(params, data);

  json j;
  j["accuracy"] = ev.accuracy;
  json per_class = json::array();
  for (std::size_t c = 0; c < ev.per_class_error.size(); ++c)
    per_class.push_back({{"class", c},
                         {"count", ev.per_class_count[c]},
                         {"error", ev.per_class_error[c]}});
  j["per_class"] = per_class;
  if (!ev.per_pattern.empty()) {
    json pats = json::array();
    for (const auto& p : ev.per_pattern)
      pats.push_back({{"class", p.label},
                      {"subpattern", p.subpattern},
                      {"count", p.count},
                      {"error", p.error}});
    j["per_pattern"] = pats;
  }
  std::cout << j.dump(2) << '\n';
  if (!json_out.empty()) write_json(j, json_out);
  return 0;
}

int run_dump(const std::string& params_path, const std::string& source_csv,
             const std::string& target_csv, const std::string& out_csv) {
  const mira::ModelParams params = mira::load_params(params_path);
  std::vector<mira::DomainDataset> sets;
  if (!source_csv.empty()) sets.push_back(mira::io::read_dataset_csv(source_csv));
  if (!target_csv.empty()) sets.push_back(mira::io::read_dataset_csv(target_csv));
  if (sets.empty()) throw mira::ConfigError("dump-embeddings: no datasets given");
  std::vector<const mira::DomainDataset*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  mira::io::write_embeddings_csv(params, ptrs, out_csv);
  std::cout << "wrote " << out_csv << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mirror-based unsupervised domain adaptation on synthetic data"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic datasets");
  std::string gen_kind = "dilemma", gen_variant = "biased", gen_out = "data";
  std::size_t gen_ns = 2000, gen_nt = 2000;
  std::uint64_t gen_seed = 0;
  bool gen_hide = false;
  gen->add_option("--kind", gen_kind, "dilemma or patterns");
  gen->add_option("--variant", gen_variant, "biased or unbiased");
  gen->add_option("--n-source", gen_ns, "source sample count");
  gen->add_option("--n-target", gen_nt, "target sample count");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_flag("--hide-labels", gen_hide, "write -1 for target labels");

  // train
  auto* train = app.add_subcommand("train", "run one training");
  ConfigCli train_cc;
  std::string train_source, train_target, train_out = "run";
  std::uint64_t train_seed = 0;
  add_config_options(train, train_cc);
  train->add_option("--source", train_source, "source csv")->required();
  train->add_option("--target", train_target, "target csv")->required();
  train->add_option("--seed", train_seed, "run seed")->required();
  train->add_option("--out", train_out, "output directory");

  // sweep
  auto* sw = app.add_subcommand("sweep", "grid over k, gamma or ablation rows");
  ConfigCli sweep_cc;
  std::string sweep_source, sweep_target, sweep_out = "sweep";
  std::string sweep_axis = "gamma", sweep_values, sweep_seeds;
  add_config_options(sw, sweep_cc);
  sw->add_option("--source", sweep_source, "source csv")->required();
  sw->add_option("--target", sweep_target, "target csv")->required();
  sw->add_option("--axis", sweep_axis, "k, gamma or ablation");
  sw->add_option("--values", sweep_values, "comma-separated axis values");
  sw->add_option("--seeds", sweep_seeds, "comma-separated seeds")->required();
  sw->add_option("--out", sweep_out, "output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_params, eval_data, eval_patterns, eval_json;
  ev->add_option("--params", eval_params, "checkpoint file")->required();
  ev->add_option("--data", eval_data, "dataset csv")->required();
  ev->add_option("--patterns", eval_patterns, "subpattern sidecar csv");
  ev->add_option("--json", eval_json, "also write the report here");

  // dump-embeddings
  auto* dump = app.add_subcommand("dump-embeddings", "write f/g embeddings");
  std::string dump_params, dump_source, dump_target, dump_out = "embeddings.csv";
  dump->add_option("--params", dump_params, "checkpoint file")->required();
  dump->add_option("--source", dump_source, "source csv");
  dump->add_option("--target", dump_target, "target csv");
  dump->add_option("--out", dump_out, "output csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return run_gen(gen_kind, gen_variant, gen_ns, gen_nt, gen_seed, gen_out, gen_hide);
    if (train->parsed())
      return run_train(train_cc, train_seed, train_source, train_target, train_out);
    if (sw->parsed())
      return run_sweep(sweep_cc, sweep_seeds, sweep_axis, sweep_values, sweep_source,
                       sweep_target, sweep_out);
    if (ev->parsed()) return run_eval(eval_params, eval_data, eval_patterns, eval_json);
    if (dump->parsed()) return run_dump(dump_params, dump_source, dump_target, dump_out);
  } catch (const mira::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n  source_ce="
              << e.losses.source_ce << " target_aux=" << e.losses.target_aux
              << " mirror_f=" << e.losses.mirror_f << " mirror_g="
              << e.losses.mirror_g << '\n';
    return 3;
  } catch (const mira::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
