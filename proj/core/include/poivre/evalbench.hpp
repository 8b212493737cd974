#pragma once

#include <string>
#include <vector>

#include "poivre/rollout.hpp"

namespace poivre {

/// One dataset row: image, query and target spec, coordinates in [0, 100].
struct DatasetRecord {
  std::string id;
  std::string image_path;
  std::string query;
  std::vector<TargetRegion> targets;

  PointingTask to_task() const;
};

/// Strict JSONL ingestion; schema violations name the line and field.
std::vector<DatasetRecord> load_dataset(const std::string& path);

enum class SuccessRule { any_point_in_mask, first_point_in_mask };

/// A task succeeds iff the FINAL turn's points satisfy the rule against any
/// target region. Returns 100 * successes / total.
double success_rate(const std::vector<Trajectory>& trajectories,
                    const std::vector<PointingTask>& tasks, SuccessRule rule);

/// Fraction of the K predicted points inside any of the regions, as a
/// percentage; callers average across tasks.
double w2p_score(const std::vector<Point>& points, const std::vector<TargetRegion>& regions);

struct TaskOutcome {
  std::string task_id;
  std::vector<double> distances;  // one per turn
  bool success_any = false;
  bool success_first = false;
  double w2p = 0.0;
  bool failed = false;  // rollout aborted (policy/endpoint failure)
};

struct EvalReport {
  std::string dataset_id;
  std::string policy_id;
  int turns = 0;
  uint64_t seed = 0;
  std::string config_fingerprint;
  std::vector<TaskOutcome> outcomes;
  double success_rate_any = 0.0;    // percent
  double success_rate_first = 0.0;  // percent
  std::vector<double> mean_distance_per_turn;
  double mean_w2p = 0.0;
  double wall_clock_seconds = 0.0;  // emitted separately; not part of the
                                    // deterministic report serialization

  std::string to_json() const;
  std::string to_csv() const;
};

/// Runs the procedure at the given T over all tasks. The policy is reseeded
/// per task from (seed, task index), so runs with equal seeds share their
/// per-turn sampling streams across different T values.
EvalReport evaluate(PolicyInterface& policy, const std::vector<PointingTask>& tasks, int turns,
                    uint64_t seed, const MarkerStyle& style,
                    HistoryMode history = HistoryMode::full_history,
                    const std::string& dataset_id = "", const std::string& policy_id = "");

/// One report per T value, sharing seeds so point-1 predictions coincide
/// across T for deterministic (and per-task-seeded stochastic) policies.
std::vector<EvalReport> sweep_T(PolicyInterface& policy, const std::vector<PointingTask>& tasks,
                                const std::vector<int>& t_values, uint64_t seed,
                                const MarkerStyle& style,
                                HistoryMode history = HistoryMode::full_history,
                                const std::string& dataset_id = "",
                                const std::string& policy_id = "");

enum class ReportFormat { json, csv };

void emit_report(const EvalReport& report, const std::string& path, ReportFormat format);
EvalReport report_from_json(const std::string& text);

}  // namespace poivre
