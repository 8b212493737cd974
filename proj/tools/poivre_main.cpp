// poivre: command-line front end for the point-visualize-refine toolkit.
//
// Subcommands: train, eval, sweep, infer, reward, replay. Every run that
// produces artifacts writes a RunManifest (manifest.json) into --out before
// doing any work; `poivre replay <manifest>` reruns the captured config and
// reproduces the outputs byte-for-byte (timing.json, which holds wall-clock
// time, is the only non-deterministic sidecar).
//
// Exit codes: 0 success, 2 configuration/usage, 3 data, 4 endpoint,
// 5 numeric failure.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "poivre/evalbench.hpp"
#include "poivre/toylab.hpp"
#include "poivre/vlm_client.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace poivre;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitEndpoint = 4;
constexpr int kExitNumeric = 5;

/// Flat bag of every run-affecting option; the resolved values are what the
/// manifest captures.
struct Opts {
  int turns = 2;
  double gamma = 0.9;
  double sigma = 10.0;
  int group_size = 8;
  double kl_beta = 0.01;
  double clip_eps = 0.2;
  double learning_rate = 0.005;
  double momentum = 0.9;
  int iterations = 200;
  int batch_tasks = 64;
  uint64_t seed = 0;
  std::string mode = "process_reward";
  std::string history = "full";
  std::string dataset;
  std::string endpoint;
  std::string model;
  std::string checkpoint;
  std::string out;
  int toy_count = 128;
  uint64_t toy_seed = 1000000;
  std::string t_values = "1,2,3,4";
  std::string image;
  std::string query;
  std::string target;  // "x,y" ground truth for --image inference
  std::string distances;  // csv list for the reward subcommand
};

json opts_to_json(const Opts& o) {
  return json{{"turns", o.turns},
              {"gamma", o.gamma},
              {"sigma", o.sigma},
              {"group_size", o.group_size},
              {"kl_beta", o.kl_beta},
              {"clip_eps", o.clip_eps},
              {"learning_rate", o.learning_rate},
              {"momentum", o.momentum},
              {"iterations", o.iterations},
              {"batch_tasks", o.batch_tasks},
              {"seed", o.seed},
              {"mode", o.mode},
              {"history", o.history},
              {"dataset", o.dataset},
              {"endpoint", o.endpoint},
              {"model", o.model},
              {"checkpoint", o.checkpoint},
              {"toy_count", o.toy_count},
              {"toy_seed", o.toy_seed},
              {"t_values", o.t_values},
              {"image", o.image},
              {"query", o.query},
              {"target", o.target},
              {"distances", o.distances}};
}

void opts_from_json(const json& j, Opts& o) {
  auto get = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("turns", o.turns);
  get("gamma", o.gamma);
  get("sigma", o.sigma);
  get("group_size", o.group_size);
  get("kl_beta", o.kl_beta);
  get("clip_eps", o.clip_eps);
  get("learning_rate", o.learning_rate);
  get("momentum", o.momentum);
  get("iterations", o.iterations);
  get("batch_tasks", o.batch_tasks);
  get("seed", o.seed);
  get("mode", o.mode);
  get("history", o.history);
  get("dataset", o.dataset);
  get("endpoint", o.endpoint);
  get("model", o.model);
  get("checkpoint", o.checkpoint);
  get("toy_count", o.toy_count);
  get("toy_seed", o.toy_seed);
  get("t_values", o.t_values);
  get("image", o.image);
  get("query", o.query);
  get("target", o.target);
  get("distances", o.distances);
}

std::vector<double> parse_csv_doubles(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    const double v = std::stod(item, &used);
    for (size_t i = used; i < item.size(); ++i) {
      if (!std::isspace(static_cast<unsigned char>(item[i]))) {
        throw InvalidInput("bad numeric list entry: " + item);
      }
    }
    values.push_back(v);
  }
  if (values.empty()) throw InvalidInput("empty numeric list: " + text);
  return values;
}

void require_out(const Opts& o) {
  if (o.out.empty()) throw InvalidInput("--out directory is required");
}

void write_manifest(const std::string& subcommand, const Opts& o) {
  fs::create_directories(o.out);
  json manifest;
  manifest["subcommand"] = subcommand;
  manifest["version"] = kVersion;
  manifest["seed"] = o.seed;
  manifest["out_dir"] = o.out;
  manifest["config"] = opts_to_json(o);
  std::ofstream f(fs::path(o.out) / "manifest.json");
  if (!f) throw IoError(IoError::Kind::write_failure, "cannot write manifest in " + o.out);
  f << manifest.dump(2) << '\n';
}

void write_timing(const Opts& o, double seconds) {
  std::ofstream f(fs::path(o.out) / "timing.json");
  f << json{{"wall_clock_seconds", seconds}}.dump() << '\n';
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

HistoryMode history_mode(const Opts& o) {
  if (o.history == "full") return HistoryMode::full_history;
  if (o.history == "latest") return HistoryMode::latest_only;
  throw InvalidInput("--history must be 'full' or 'latest'");
}

/// Tasks for eval/sweep: a dataset file when given, generated scenes
/// otherwise.
std::vector<PointingTask> resolve_tasks(const Opts& o, const SceneConfig& scene) {
  if (!o.dataset.empty()) {
    std::vector<PointingTask> tasks;
    for (const DatasetRecord& rec : load_dataset(o.dataset)) tasks.push_back(rec.to_task());
    if (tasks.empty()) throw DatasetError(0, "", "dataset is empty: " + o.dataset);
    return tasks;
  }
  return generate_tasks(scene, o.toy_seed, o.toy_count);
}

struct ResolvedPolicy {
  std::unique_ptr<PolicyInterface> policy;
  SceneConfig scene;  // scene the policy's features were trained for
  std::string id;
};

ResolvedPolicy resolve_policy(const Opts& o) {
  if (!o.endpoint.empty() && !o.checkpoint.empty()) {
    throw InvalidInput("--endpoint and --checkpoint are mutually exclusive");
  }
  ResolvedPolicy out;
  if (!o.endpoint.empty()) {
    EndpointConfig cfg;
    cfg.base_url = o.endpoint;
    cfg.model = o.model;
    out.policy = std::make_unique<RemoteVlmPolicy>(cfg);
    out.id = "remote:" + o.model;
    return out;
  }
  if (!o.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    out.scene = ckpt.config.scene;
    auto policy = std::make_unique<GaussianPolicy>(out.scene, o.seed);
    policy->set_params(ckpt.theta);
    policy->set_deterministic(true);
    out.policy = std::move(policy);
    out.id = "toy:" + o.checkpoint;
    return out;
  }
  auto policy = std::make_unique<GaussianPolicy>(out.scene, o.seed);
  policy->set_deterministic(true);
  out.policy = std::move(policy);
  out.id = "toy:untrained";
  return out;
}

int cmd_train(const Opts& o) {
  if (!o.endpoint.empty()) {
    throw InvalidInput("train drives the toy policy only; --endpoint is not valid here");
  }
  require_out(o);
  write_manifest("train", o);
  Stopwatch watch;

  TrainConfig cfg;
  cfg.mode = train_mode_from_string(o.mode);
  cfg.reward.sigma = o.sigma;
  cfg.reward.gamma = o.gamma;
  cfg.reward.turns = o.turns;
  cfg.grpo.group_size = o.group_size;
  cfg.grpo.kl_beta = o.kl_beta;
  cfg.grpo.clip_epsilon = o.clip_eps;
  cfg.grpo.learning_rate = o.learning_rate;
  cfg.grpo.momentum = o.momentum;
  cfg.grpo.iterations = o.iterations;
  cfg.grpo.batch_tasks = o.batch_tasks;
  cfg.grpo.seed = o.seed;

  std::ofstream metrics(fs::path(o.out) / "metrics.jsonl");
  if (!metrics) throw IoError(IoError::Kind::write_failure, "cannot write metrics in " + o.out);
  const TrainResult result = train(cfg, &metrics);

  Checkpoint ckpt;
  ckpt.theta = result.theta;
  ckpt.theta_ref = result.theta_ref;
  ckpt.config = cfg;
  save_checkpoint(ckpt, (fs::path(o.out) / "checkpoint.json").string());

  write_timing(o, watch.seconds());
  const StepStats& last = result.stats.back();
  std::cout << "trained " << result.stats.size() << " iterations; final mean reward "
            << last.mean_reward << ", mean d_T " << last.mean_dT << '\n';
  return kExitOk;
}

int cmd_eval(const Opts& o) {
  require_out(o);
  write_manifest("eval", o);
  Stopwatch watch;

  ResolvedPolicy rp = resolve_policy(o);
  const std::vector<PointingTask> tasks = resolve_tasks(o, rp.scene);
  const std::string dataset_id = o.dataset.empty() ? "toy" : o.dataset;

  const EvalReport report = evaluate(*rp.policy, tasks, o.turns, o.seed, MarkerStyle{},
                                     history_mode(o), dataset_id, rp.id);
  if (!o.endpoint.empty() &&
      std::all_of(report.outcomes.begin(), report.outcomes.end(),
                  [](const TaskOutcome& t) { return t.failed; })) {
    throw EndpointError("every rollout against " + o.endpoint + " failed");
  }
  emit_report(report, (fs::path(o.out) / "report.json").string(), ReportFormat::json);
  emit_report(report, (fs::path(o.out) / "report.csv").string(), ReportFormat::csv);

  write_timing(o, watch.seconds());
  std::cout << "tasks " << report.outcomes.size() << "  success(any) "
            << report.success_rate_any << "%  success(first) " << report.success_rate_first
            << "%  mean w2p " << report.mean_w2p << '\n';
  return kExitOk;
}

int cmd_sweep(const Opts& o) {
  require_out(o);
  write_manifest("sweep", o);
  Stopwatch watch;

  std::vector<int> t_values;
  for (double v : parse_csv_doubles(o.t_values)) {
    if (v < 1 || v != std::floor(v)) throw InvalidInput("--t-values must be positive integers");
    t_values.push_back(static_cast<int>(v));
  }

  ResolvedPolicy rp = resolve_policy(o);
  const std::vector<PointingTask> tasks = resolve_tasks(o, rp.scene);
  const std::string dataset_id = o.dataset.empty() ? "toy" : o.dataset;

  const std::vector<EvalReport> reports = sweep_T(*rp.policy, tasks, t_values, o.seed,
                                                  MarkerStyle{}, history_mode(o), dataset_id,
                                                  rp.id);
  for (const EvalReport& report : reports) {
    emit_report(report,
                (fs::path(o.out) / ("report_t" + std::to_string(report.turns) + ".json")).string(),
                ReportFormat::json);
    std::cout << "T=" << report.turns << "  success(any) " << report.success_rate_any
              << "%  mean d_T " << report.mean_distance_per_turn.back() << '\n';
  }
  write_timing(o, watch.seconds());
  return kExitOk;
}

int cmd_infer(const Opts& o) {
  require_out(o);
  write_manifest("infer", o);
  Stopwatch watch;

  PointingTask task;
  if (!o.image.empty()) {
    if (o.query.empty()) throw InvalidInput("--image inference needs --query");
    if (o.target.empty()) {
      throw InvalidInput("--image inference needs --target x,y for distance reporting");
    }
    const auto xy = parse_csv_doubles(o.target);
    if (xy.size() != 2) throw InvalidInput("--target must be 'x,y'");
    task.id = "cli-image";
    task.image.path = o.image;
    task.query = o.query;
    task.targets.push_back(TargetRegion::disc(Point(xy[0], xy[1]), 5.0));
  } else {
    ResolvedPolicy probe = resolve_policy(o);  // scene comes from the checkpoint
    task = generate_task(probe.scene, o.toy_seed);
  }
  task.validate();

  ResolvedPolicy rp = resolve_policy(o);
  rp.policy->reseed(o.seed);

  // The rollout loop, unrolled so every intermediate image lands on disk.
  std::vector<Raster> history;
  history.push_back(task.image.in_memory() ? *task.image.raster : load_raster(task.image.path));
  save_raster(history.front(), (fs::path(o.out) / "I_0.png").string());

  Trajectory traj;
  traj.task_id = task.id;
  const HistoryMode mode = history_mode(o);
  for (int turn = 1; turn <= o.turns; ++turn) {
    std::vector<Raster> view =
        mode == HistoryMode::full_history ? history : std::vector<Raster>{history.back()};
    const PolicyAction action = rp.policy->act(view, task.query, turn);
    if (action.points.empty()) throw InvalidInput("policy returned no points");
    traj.points.push_back(action.points);
    traj.distances.push_back(distance_to_target(action.points, task));
    if (action.logprob) traj.per_turn_logprob.push_back(*action.logprob);

    MarkerStyle style;
    style.label = turn;
    history.push_back(render_markers(history.back(), action.points, style));
    save_raster(history.back(), (fs::path(o.out) / ("I_" + std::to_string(turn) + ".png")).string());
    std::cout << "turn " << turn << ": (" << action.points[0].x << ", " << action.points[0].y
              << ")  distance " << traj.distances.back() << '\n';
  }
  save_trajectories({traj}, (fs::path(o.out) / "trajectory.jsonl").string());
  write_timing(o, watch.seconds());
  return kExitOk;
}

int cmd_reward(const Opts& o) {
  RewardConfig cfg;
  cfg.sigma = o.sigma;
  cfg.gamma = o.gamma;
  cfg.turns = o.turns;
  const std::vector<double> d = parse_csv_doubles(o.distances);
  if (static_cast<int>(d.size()) != o.turns) {
    throw InvalidInput("--distances must list exactly --turns values");
  }
  if (!o.out.empty()) write_manifest("reward", o);

  const double telescoped = process_reward_telescoped(d, cfg);
  const double weighted = process_reward_weighted(d, cfg);
  std::cout.precision(9);
  std::cout << std::fixed;
  std::cout << "telescoped form = " << telescoped << '\n';
  std::cout << "weighted form   = " << weighted << '\n';
  std::cout.precision(3);
  std::cout << std::scientific;
  std::cout << "difference      = " << std::abs(telescoped - weighted) << '\n';
  if (cfg.gamma < 1.0) {
    std::cout << "final-turn weight dominates: "
              << (weight_bound_holds(o.turns, o.gamma) ? "yes" : "no") << '\n';
  }
  return kExitOk;
}

int dispatch(const std::string& subcommand, const Opts& o);

int cmd_replay(const std::string& manifest_path, const std::string& out_override) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError(IoError::Kind::missing_file, "no such manifest: " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw poivre::ParseError(std::string("bad manifest: ") + e.what());
  }
  Opts o;
  opts_from_json(manifest.at("config"), o);
  if (!out_override.empty()) o.out = out_override;
  return dispatch(manifest.at("subcommand").get<std::string>(), o);
}

int dispatch(const std::string& subcommand, const Opts& o) {
  if (subcommand == "train") return cmd_train(o);
  if (subcommand == "eval") return cmd_eval(o);
  if (subcommand == "sweep") return cmd_sweep(o);
  if (subcommand == "infer") return cmd_infer(o);
  if (subcommand == "reward") return cmd_reward(o);
  throw InvalidInput("unknown subcommand in manifest: " + subcommand);
}

void add_common_flags(CLI::App* cmd, Opts& o) {
  cmd->add_option("--turns", o.turns, "Refinement turns T");
  cmd->add_option("--gamma", o.gamma, "Process-reward discount");
  cmd->add_option("--sigma", o.sigma, "Outcome-reward width");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--out", o.out, "Output directory");
}

void apply_config_file(const std::string& path, Opts& o) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "no such config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw poivre::ParseError(std::string("bad config file: ") + e.what());
  }
  opts_from_json(j, o);
}

}  // namespace

int main(int argc, char** argv) {
  Opts o;
  std::string config_file;
  std::string manifest_path;
  std::string replay_out;

  CLI::App app{"poivre: point-visualize-refine toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // The config file is applied between defaults and flags: defaults <
  // config file < explicit flags.
  app.add_option("--config", config_file, "JSON config file merged under explicit flags")
      ->expected(1);

  CLI::App* train_cmd = app.add_subcommand("train", "GRPO-train the toy pointing policy");
  add_common_flags(train_cmd, o);
  train_cmd->add_option("--mode", o.mode,
                        "process_reward | outcome_reward | vanilla_single_turn");
  train_cmd->add_option("--group-size", o.group_size, "Rollouts per task group G");
  train_cmd->add_option("--kl-beta", o.kl_beta, "KL penalty coefficient");
  train_cmd->add_option("--clip-eps", o.clip_eps, "PPO-style clip epsilon");
  train_cmd->add_option("--lr", o.learning_rate, "Learning rate");
  train_cmd->add_option("--momentum", o.momentum, "Heavy-ball momentum (0 = plain ascent)");
  train_cmd->add_option("--iterations", o.iterations, "Training iterations");
  train_cmd->add_option("--batch-tasks", o.batch_tasks, "Tasks per iteration");
  train_cmd->add_option("--endpoint", o.endpoint)->group("");  // rejected with a clear message

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a policy over a task set");
  add_common_flags(eval_cmd, o);
  eval_cmd->add_option("--dataset", o.dataset, "JSONL dataset path (default: toy scenes)");
  eval_cmd->add_option("--endpoint", o.endpoint, "OpenAI-compatible endpoint base URL");
  eval_cmd->add_option("--model", o.model, "Remote model name");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Toy policy checkpoint");
  eval_cmd->add_option("--toy-count", o.toy_count, "Generated task count without --dataset");
  eval_cmd->add_option("--toy-seed", o.toy_seed, "Generated task seed base");
  eval_cmd->add_option("--history", o.history, "full | latest");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Evaluate across multiple turn counts");
  add_common_flags(sweep_cmd, o);
  sweep_cmd->add_option("--t-values", o.t_values, "Comma-separated T values");
  sweep_cmd->add_option("--dataset", o.dataset, "JSONL dataset path (default: toy scenes)");
  sweep_cmd->add_option("--endpoint", o.endpoint, "OpenAI-compatible endpoint base URL");
  sweep_cmd->add_option("--model", o.model, "Remote model name");
  sweep_cmd->add_option("--checkpoint", o.checkpoint, "Toy policy checkpoint");
  sweep_cmd->add_option("--toy-count", o.toy_count, "Generated task count without --dataset");
  sweep_cmd->add_option("--toy-seed", o.toy_seed, "Generated task seed base");
  sweep_cmd->add_option("--history", o.history, "full | latest");

  CLI::App* infer_cmd =
      app.add_subcommand("infer", "One Poivre trajectory, saving each marked image");
  add_common_flags(infer_cmd, o);
  infer_cmd->add_option("--image", o.image, "Input PNG (otherwise a toy scene is generated)");
  infer_cmd->add_option("--query", o.query, "Pointing query for --image");
  infer_cmd->add_option("--target", o.target, "Ground-truth 'x,y' for --image");
  infer_cmd->add_option("--toy-seed", o.toy_seed, "Toy scene seed without --image");
  infer_cmd->add_option("--endpoint", o.endpoint, "OpenAI-compatible endpoint base URL");
  infer_cmd->add_option("--model", o.model, "Remote model name");
  infer_cmd->add_option("--checkpoint", o.checkpoint, "Toy policy checkpoint");
  infer_cmd->add_option("--history", o.history, "full | latest");

  CLI::App* reward_cmd =
      app.add_subcommand("reward", "Print both process-reward forms for a distance list");
  add_common_flags(reward_cmd, o);
  reward_cmd->add_option("--distances", o.distances, "Comma-separated per-turn distances")
      ->required();

  CLI::App* replay_cmd = app.add_subcommand("replay", "Re-run a captured manifest");
  replay_cmd->add_option("manifest", manifest_path, "Path to manifest.json")->required();
  replay_cmd->add_option("--out", replay_out, "Override the output directory");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return kExitConfig;
    }

    if (replay_cmd->parsed()) return cmd_replay(manifest_path, replay_out);

    // Re-apply precedence: defaults already sit in `o`, the config file
    // overrides them, and explicit flags win. CLI11 wrote flag values into
    // `o` during parse, so re-parse after loading the file.
    if (!config_file.empty()) {
      Opts merged;
      apply_config_file(config_file, merged);
      CLI::App* sub = app.get_subcommands().front();
      // transfer config-file values for options the user did not pass
      json flags_seen = json::object();
      for (const CLI::Option* opt : sub->get_options()) {
        if (opt->count() > 0) flags_seen[opt->get_name()] = true;
      }
      json o_json = opts_to_json(o);
      json merged_json = opts_to_json(merged);
      auto flag_for = [](const std::string& key) {
        if (key == "learning_rate") return std::string("--lr");
        std::string name = "--" + key;
        for (char& c : name) {
          if (c == '_') c = '-';
        }
        return name;
      };
      for (auto& [key, value] : merged_json.items()) {
        if (!flags_seen.contains(flag_for(key))) o_json[key] = value;
      }
      opts_from_json(o_json, o);
    }

    if (train_cmd->parsed()) return cmd_train(o);
    if (eval_cmd->parsed()) return cmd_eval(o);
    if (sweep_cmd->parsed()) return cmd_sweep(o);
    if (infer_cmd->parsed()) return cmd_infer(o);
    if (reward_cmd->parsed()) return cmd_reward(o);
    std::cerr << "no subcommand given\n";
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const poivre::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const EndpointError& e) {
    std::cerr << "endpoint error: " << e.what() << '\n';
    return kExitEndpoint;
  } catch (const std::exception& e) {
    std::cerr << "numeric/runtime error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
