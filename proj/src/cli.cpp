#include "teleplan/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "teleplan/error.hpp"
#include "teleplan/evaluation.hpp"
#include "teleplan/policy.hpp"
#include "teleplan/scenario.hpp"

namespace fs = std::filesystem;

namespace teleplan {

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"train", c.train},
                     {"radio", c.radio},
                     {"scorer",
                      {{"kind", c.scorer.kind},
                       {"url", c.scorer.remote.url},
                       {"timeout_s", c.scorer.remote.timeout_s}}},
                     {"cell_size_m", c.cell_size_m}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
  c.radio = j.contains("radio") ? j.at("radio").get<RadioConfig>() : d.radio;
  c.scorer = d.scorer;
  if (j.contains("scorer")) {
    const auto& s = j.at("scorer");
    c.scorer.kind = s.value("kind", d.scorer.kind);
    c.scorer.remote.url = s.value("url", d.scorer.remote.url);
    c.scorer.remote.timeout_s = s.value("timeout_s", d.scorer.remote.timeout_s);
  }
  c.cell_size_m = j.value("cell_size_m", d.cell_size_m);
  if (c.scorer.kind != "mock" && c.scorer.kind != "remote")
    throw PreconditionError("scorer.kind must be mock or remote");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config: " + path);
  try {
    return nlohmann::json::parse(in).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid config ") + path + ": " + e.what());
  }
}

std::shared_ptr<const SemanticScorer> make_scorer(const ScorerConfig& config) {
  if (config.kind == "mock") return std::make_shared<MockScorer>();
  RemoteScorerConfig remote = config.remote;
  if (const char* url = std::getenv("TELEPLAN_SCORER_URL"); url && *url) remote.url = url;
  if (remote.url.empty()) throw PreconditionError("remote scorer selected but no URL configured");
  return std::make_shared<RemoteScorer>(remote);
}

namespace {

// Usage problems detected after parsing (bad combinations, missing files).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path output_path(const std::string& out_dir, const std::string& name) {
  const fs::path rel(name);
  if (rel.is_absolute() || rel.empty())
    throw UsageError("output name must be relative to --out: " + name);
  for (const auto& part : rel)
    if (part == "..") throw UsageError("output name may not leave --out: " + name);
  fs::create_directories(out_dir);
  return fs::path(out_dir) / rel;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + path.string());
  out << text;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::is_regular_file(path))
    throw UsageError(std::string(what) + " not found: " + path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("invalid JSON in " + path + ": " + e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Options shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  std::string out = ".";
  std::size_t threads = 1;
  std::string config;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  c.out = default_out;
  c.seed_opt = cmd->add_option("--seed", c.seed, "Base random seed")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory; nothing is written outside it")
      ->capture_default_str();
  c.threads_opt =
      cmd->add_option("--threads", c.threads, "Worker thread cap")->capture_default_str();
  cmd->add_option("--config", c.config, "RunConfig JSON file (flags override it)")
      ->check(CLI::ExistingFile);
}

RunConfig resolve_config(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed_opt->count() > 0 || c.config.empty()) rc.train.seed = c.seed;
  if (c.threads_opt->count() > 0 || c.config.empty()) rc.train.threads = std::max<std::size_t>(1, c.threads);
  return rc;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  Common common;
  std::size_t n = 100;
  std::size_t k = 20;
  std::string profile = "urban-cluster";
  std::string output = "scenario.csv";
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  if (a.k < 1 || a.k > a.n)
    throw UsageError("--k must satisfy 1 <= k <= n (got k=" + std::to_string(a.k) +
                     ", n=" + std::to_string(a.n) + ")");
  const auto profile = parse_profile(a.profile);
  const auto path = output_path(a.common.out, a.output);
  const auto sc = generate_scenario(a.common.seed, a.n, a.k, profile);
  save_scenario(sc, path.string());
  out << "wrote " << sc.size() << " sites (k=" << sc.select_count << ", profile " << a.profile
      << ") to " << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string algo = "grpo";
  std::string scenario;
  std::size_t k = 0;
  bool no_sft = false;
  std::vector<std::string> sft_data;
  std::string scorer;
  // Flag overrides of TrainConfig; applied only when given.
  TrainConfig defaults;
  std::string optimizer = "sgd";
  std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> overrides;
};

int cmd_train(TrainArgs& a, std::ostream& out) {
  RunConfig rc = resolve_config(a.common);
  for (auto& [opt, apply] : a.overrides)
    if (opt->count() > 0) apply(rc.train);
  if (!a.scorer.empty()) rc.scorer.kind = a.scorer;
  if (rc.scorer.kind != "mock" && rc.scorer.kind != "remote")
    throw UsageError("--scorer must be mock or remote");
  const auto scenario = load_scenario(a.scenario, {}, a.k);
  const auto scorer = make_scorer(rc.scorer);
  const std::string& dir = a.common.out;
  fs::create_directories(dir);

  TrainOptions options;
  options.scorer = scorer;
  std::string sft_note = "skipped (--no-sft)";
  if (!a.no_sft) {
    std::vector<Scenario> demos;
    if (a.sft_data.empty()) {
      if (scenario.reference_selection()) demos.push_back(scenario);
    } else {
      for (const auto& p : a.sft_data) demos.push_back(load_scenario(p));
    }
    if (demos.empty()) {
      sft_note = "skipped (no ground-truth selection)";
    } else {
      auto sft = sft_pretrain(demos, rc.train, std::nullopt, scorer);
      save_checkpoint(sft.params, output_path(dir, "reference.json").string());
      std::ostringstream note;
      note << "trained on " << demos.size() << " scenario(s)";
      if (!sft.epoch_loss.empty())
        note << ", loss " << sft.epoch_loss.front() << " -> " << sft.epoch_loss.back();
      sft_note = note.str();
      options.reference = std::move(sft.params);
    }
  }
  options.on_checkpoint = [&](const PolicyParams& p, std::size_t iter, Stage stage) {
    const std::string name = "checkpoint_stage" + std::to_string(static_cast<int>(stage)) +
                             "_iter" + std::to_string(iter) + ".json";
    save_checkpoint(p, output_path(dir, name).string());
  };

  TrainResult result;
  if (a.algo == "grpo") {
    result = train_grpo(scenario, rc.train, options);
  } else if (a.algo == "grpo-vanilla") {
    result = train_vanilla_grpo(scenario, rc.train, options);
  } else {
    result = train_ppo(scenario, rc.train, options);
  }
  save_checkpoint(result.params, output_path(dir, "policy.json").string());
  if (result.value_params) save_checkpoint(*result.value_params, output_path(dir, "value.json").string());
  write_history(result.history, rc.train, output_path(dir, "history.csv").string(),
                output_path(dir, "history.json").string());
  write_text(output_path(dir, "config.json"), nlohmann::json(rc).dump(2) + "\n");

  out << "algorithm " << result.history.algorithm << ", seed " << rc.train.seed << ", "
      << result.history.records.size() << " iterations\n";
  out << "sft: " << sft_note << '\n';
  for (const auto& t : result.history.transitions)
    out << "stage " << static_cast<int>(t.from) << " -> " << static_cast<int>(t.to) << " at iteration "
        << t.iter << (t.forced ? " (cap)" : "") << '\n';
  out << "final window mean reward " << result.history.final_window_mean(rc.train.window) << '\n';
  if (result.history.scorer_fallbacks)
    out << "scorer fallbacks " << result.history.scorer_fallbacks << '\n';
  out << "outputs in " << dir << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plan

struct PlanArgs {
  Common common;
  std::string checkpoint;
  std::string scenario;
  std::size_t k = 0;
  bool sample = false;
};

int cmd_plan(const PlanArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.scenario, "scenario");
  const RunConfig rc = resolve_config(a.common);
  const auto scenario = load_scenario(a.scenario, {}, a.k);
  const auto params = load_checkpoint(a.checkpoint);
  const auto scorer = make_scorer(rc.scorer);
  const auto normalized = normalize_features(scenario);
  RewardModel model(normalized, rc.train.weights, scorer);
  SelectionEnv env(model);

  Trajectory traj;
  if (a.sample) {
    auto rng = rollout_rng(rc.train.seed, 0);
    traj = rollout(params, env, rng);
  } else {
    traj = greedy_decode(params, env);
  }
  const auto plan = scenario.ids_of(traj.actions);
  const double reward = model.evaluate(traj.actions, Stage::kThree).combined;
  const auto random_plan = plan_random(scenario, scenario.select_count, rc.train.seed);
  const double random_reward = selection_reward(random_plan, normalized, rc.train.weights, *scorer);

  nlohmann::json j{{"label", "policy"},
                   {"scenario", a.scenario},
                   {"checkpoint", a.checkpoint},
                   {"decoding", a.sample ? "sample" : "greedy"},
                   {"seed", rc.train.seed},
                   {"plan", plan},
                   {"reward", reward},
                   {"random_baseline", {{"plan", random_plan}, {"reward", random_reward}}}};
  if (const auto& ref = scenario.reference_selection()) j["overlap"] = overlap(plan, *ref);
  const std::string& dir = a.common.out;
  write_text(output_path(dir, "plan.json"), j.dump(2) + "\n");
  std::string table = "rank,id\n";
  for (std::size_t i = 0; i < plan.size(); ++i)
    table += csv::format_row({std::to_string(i + 1), plan[i]});
  write_text(output_path(dir, "plan.csv"), table);
  export_geojson(plan, scenario, output_path(dir, "plan.geojson").string());

  out << "planned " << plan.size() << " sites (" << (a.sample ? "sampled" : "greedy") << ")\n";
  out << "stage-3 reward " << reward << ", random baseline " << random_reward << '\n';
  if (j.contains("overlap")) out << "overlap " << j["overlap"].get<double>() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::string scenario;
  std::size_t k = 0;
  std::vector<std::string> runs;
  std::vector<std::string> plans;
  std::string checkpoint;
  CLI::Option* checkpoint_opt = nullptr;
  std::size_t window = 50;
  CLI::Option* window_opt = nullptr;
  double cell_size = 50.0;
  CLI::Option* cell_opt = nullptr;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.checkpoint_opt->count() > 0) require_file(a.checkpoint, "checkpoint");
  require_file(a.scenario, "scenario");
  for (const auto& p : a.plans) require_file(p, "plan");
  for (const auto& r : a.runs)
    if (!fs::is_regular_file(fs::path(r) / "history.csv"))
      throw UsageError("run directory has no history.csv: " + r);
  RunConfig rc = resolve_config(a.common);
  if (a.cell_opt->count() > 0) rc.cell_size_m = a.cell_size;
  if (!(rc.cell_size_m > 0.0)) throw UsageError("--cell-size must be > 0");
  const std::size_t window = a.window_opt->count() > 0 ? a.window : rc.train.window;
  const auto scenario = load_scenario(a.scenario, {}, a.k);
  const auto scorer = make_scorer(rc.scorer);
  const auto normalized = normalize_features(scenario);

  std::vector<RunInput> inputs;
  for (const auto& r : a.runs) {
    RunInput in;
    const fs::path dir(r);
    in.source = (dir / "history.csv").string();
    in.history = history_from_csv(read_text(in.source));
    in.label = "run";
    if (fs::is_regular_file(dir / "history.json")) {
      const auto meta = read_json((dir / "history.json").string());
      in.label = meta.value("algorithm", in.label);
      in.seed = meta.value("seed", std::uint64_t{0});
      in.history->algorithm = in.label;
      in.history->seed = in.seed;
    }
    if (fs::is_regular_file(dir / "plan.json"))
      in.plan = read_json((dir / "plan.json").string()).at("plan").get<std::vector<std::string>>();
    inputs.push_back(std::move(in));
  }
  for (const auto& p : a.plans) {
    const auto j = read_json(p);
    RunInput in;
    in.label = j.value("label", "plan");
    in.source = p;
    in.seed = j.value("seed", std::uint64_t{0});
    in.plan = j.at("plan").get<std::vector<std::string>>();
    inputs.push_back(std::move(in));
  }
  if (a.checkpoint_opt->count() > 0) {
    const auto params = load_checkpoint(a.checkpoint);
    RewardModel model(normalized, rc.train.weights, scorer);
    SelectionEnv env(model);
    RunInput in;
    in.label = "checkpoint";
    in.source = a.checkpoint;
    in.seed = rc.train.seed;
    in.plan = scenario.ids_of(greedy_decode(params, env).actions);
    inputs.push_back(std::move(in));
  }
  const std::size_t k = scenario.select_count;
  inputs.push_back({"kmeans", "plan_kmeans", rc.train.seed, std::nullopt,
                    plan_kmeans(normalized, k, rc.train.seed)});
  inputs.push_back({"greedy", "plan_greedy", rc.train.seed, std::nullopt,
                    plan_greedy(normalized, rc.train.weights, *scorer)});
  inputs.push_back({"random", "plan_random", rc.train.seed, std::nullopt,
                    plan_random(scenario, k, rc.train.seed)});

  CompareOptions opts;
  opts.window = window;
  opts.weights = rc.train.weights;
  opts.radio = rc.radio;
  opts.scorer = scorer;
  opts.cell_size_m = rc.cell_size_m;
  opts.threads = rc.train.threads;
  const auto report = compare_runs(inputs, scenario, opts);

  const std::string& dir = a.common.out;
  write_text(output_path(dir, "report.json"), report_to_json(report).dump(2) + "\n");
  write_text(output_path(dir, "report.csv"), report_to_csv(report));
  write_text(output_path(dir, "config.json"), nlohmann::json(rc).dump(2) + "\n");

  // Coverage raster of the first plan that is not a built-in baseline.
  const RunInput* focus = &inputs.front();
  for (const auto& in : inputs)
    if (!in.plan.empty()) {
      focus = &in;
      break;
    }
  std::vector<Point> pts;
  for (auto i : scenario.indices_of(focus->plan)) pts.push_back(scenario.sites[i].position);
  const auto grid = rsrp_grid(pts, GridSpec::covering(scenario.bbox, rc.cell_size_m), rc.radio,
                              rc.train.threads);
  write_text(output_path(dir, "grid.csv"), grid_to_csv(grid));
  write_grid_raster(grid, output_path(dir, "grid.bin").string());

  for (const auto& row : report.rows) {
    out << row.label << " [" << row.source << "]";
    if (row.final_reward) out << " final_reward " << *row.final_reward;
    if (row.plan_reward) out << " plan_reward " << *row.plan_reward;
    if (row.overlap) out << " overlap " << *row.overlap;
    if (row.coverage)
      out << " frac>-80 " << row.coverage->frac_above_80 << " frac>-60 " << row.coverage->frac_above_60;
    out << '\n';
  }
  out << "grid of '" << focus->label << "' written to " << dir << "/grid.csv\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Base-station site selection with staged-reward group policy optimization",
               "teleplan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "teleplan 0.1.0");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic scenario CSV");
  add_common(gen_cmd, gen.common, ".");
  gen_cmd->add_option("--n", gen.n, "Number of candidate sites")->capture_default_str();
  gen_cmd->add_option("--k", gen.k, "Number of sites to select")->capture_default_str();
  gen_cmd->add_option("--profile", gen.profile, "uniform | urban-cluster")
      ->check(CLI::IsMember({"uniform", "urban-cluster"}))
      ->capture_default_str();
  gen_cmd->add_option("-o,--output", gen.output, "File name inside --out (.csv or .json)")
      ->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "SFT (when ground truth exists) then RL training");
  add_common(train_cmd, train.common, "run");
  train_cmd->add_option("--algo", train.algo, "grpo | grpo-vanilla | ppo")
      ->check(CLI::IsMember({"grpo", "grpo-vanilla", "ppo"}))
      ->capture_default_str();
  train_cmd->add_option("--scenario", train.scenario, "Scenario CSV/JSON")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--k", train.k, "select_count when the file marks no selected rows")
      ->capture_default_str();
  train_cmd->add_flag("--no-sft", train.no_sft, "Start from a fresh policy instead of SFT");
  train_cmd->add_option("--sft-data", train.sft_data,
                        "Scenario files with ground truth for SFT (default: the training scenario)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--scorer", train.scorer, "mock | remote (default from config: mock)");
  {
    auto& d = train.defaults;
    auto add = [&](const std::string& name, auto& field, const std::string& help, auto setter) {
      auto* o = train_cmd->add_option(name, field, help)->capture_default_str();
      train.overrides.emplace_back(o, setter);
    };
    add("--group-size", d.group_size, "G, trajectories per group",
        [&d](TrainConfig& c) { c.group_size = d.group_size; });
    add("--clip-epsilon", d.clip_epsilon, "Clip epsilon",
        [&d](TrainConfig& c) { c.clip_epsilon = d.clip_epsilon; });
    add("--kl-beta", d.kl_beta, "KL penalty weight", [&d](TrainConfig& c) { c.kl_beta = d.kl_beta; });
    add("--lr", d.learning_rate, "Policy learning rate",
        [&d](TrainConfig& c) { c.learning_rate = d.learning_rate; });
    add("--stage-cap", d.stage_cap, "Iterations per stage before a forced advance",
        [&d](TrainConfig& c) { c.stage_cap = d.stage_cap; });
    add("--window", d.window, "Stage-advance window W", [&d](TrainConfig& c) { c.window = d.window; });
    add("--tau", d.tau, "Stage-advance relative threshold", [&d](TrainConfig& c) { c.tau = d.tau; });
    add("--iterations", d.total_iterations, "Total iterations (0 = 3 x stage cap)",
        [&d](TrainConfig& c) { c.total_iterations = d.total_iterations; });
    add("--sft-epochs", d.sft_epochs, "SFT epochs", [&d](TrainConfig& c) { c.sft_epochs = d.sft_epochs; });
    auto* o = train_cmd->add_option("--optimizer", train.optimizer, "sgd | adam")
                  ->check(CLI::IsMember({"sgd", "adam"}))
                  ->capture_default_str();
    train.overrides.emplace_back(
        o, [&train](TrainConfig& c) { c.optimizer = parse_optimizer(train.optimizer); });
  }

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Decode a site plan from a checkpoint");
  add_common(plan_cmd, plan.common, "plan");
  plan_cmd->add_option("--checkpoint", plan.checkpoint, "Policy checkpoint JSON")->required();
  plan_cmd->add_option("--scenario", plan.scenario, "Scenario CSV/JSON")->required();
  plan_cmd->add_option("--k", plan.k, "select_count when the file marks no selected rows")
      ->capture_default_str();
  plan_cmd->add_flag("--sample", plan.sample, "Sample actions instead of argmax decoding");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Compare runs and plans; overlap and coverage report");
  add_common(eval_cmd, ev.common, "eval");
  eval_cmd->add_option("--scenario", ev.scenario, "Scenario CSV/JSON")->required();
  eval_cmd->add_option("--k", ev.k, "select_count when the file marks no selected rows")
      ->capture_default_str();
  eval_cmd->add_option("--run", ev.runs, "Training output directory (repeatable)");
  eval_cmd->add_option("--plan", ev.plans, "plan.json file (repeatable)");
  ev.checkpoint_opt = eval_cmd->add_option("--checkpoint", ev.checkpoint,
                                           "Policy checkpoint to decode and evaluate");
  ev.window_opt = eval_cmd->add_option("--window", ev.window, "Final-reward window")->capture_default_str();
  ev.cell_opt =
      eval_cmd->add_option("--cell-size", ev.cell_size, "Coverage grid cell size (m)")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, out);
    if (plan_cmd->parsed()) return cmd_plan(plan, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace teleplan
