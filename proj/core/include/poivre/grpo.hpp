#pragma once

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

#include "poivre/reward.hpp"
#include "poivre/rollout.hpp"

namespace poivre {

struct GrpoConfig {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 0.05;
  /// 0 = plain gradient ascent; > 0 = heavy-ball momentum on the velocity
  /// buffer passed to grpo_step.
  double momentum = 0.0;
  int iterations = 200;
  int batch_tasks = 16;
  uint64_t seed = 0;

  void validate() const {
    if (group_size < 2) throw InvalidInput("group_size must be >= 2");
    if (clip_epsilon <= 0.0 || clip_epsilon >= 1.0) {
      throw InvalidInput("clip_epsilon must be in (0, 1)");
    }
    if (kl_beta < 0.0) throw InvalidInput("kl_beta must be >= 0");
    if (learning_rate <= 0.0) throw InvalidInput("learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw InvalidInput("momentum must be in [0, 1)");
  }
};

/// One recorded policy step inside a sampled trajectory: everything needed
/// to re-evaluate the action's log-probability under fresh parameters.
struct TurnRecord {
  Eigen::VectorXd features;
  Eigen::Vector2d action;
  double logprob_old = 0.0;
};

/// Contract a policy must satisfy to be trainable by grpo_step: a flat
/// parameter vector plus per-turn log-probabilities and analytic gradients
/// re-evaluable on frozen turn records.
class TrainablePolicy : public PolicyInterface {
 public:
  virtual Eigen::VectorXd params() const = 0;
  virtual void set_params(const Eigen::VectorXd& theta) = 0;
  virtual double turn_logprob(const Eigen::VectorXd& theta, const TurnRecord& rec) const = 0;
  virtual Eigen::VectorXd turn_logprob_grad(const Eigen::VectorXd& theta,
                                            const TurnRecord& rec) const = 0;
  /// Drains the records accumulated since the last call (one per act()).
  virtual std::vector<TurnRecord> take_recorded_turns() = 0;
};

/// G trajectories for one task, their rewards and normalized advantages.
struct RolloutGroup {
  std::string task_id;
  std::vector<Trajectory> trajectories;
  std::vector<std::vector<TurnRecord>> records;  // parallel to trajectories
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct StepStats {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_d1 = 0.0;
  double mean_dT = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  int degenerate_groups = 0;

  std::string to_json() const;
};

/// (r_i - mean) / population std; all-zero when std < 1e-6.
std::vector<double> normalize_advantages(const std::vector<double>& rewards);

/// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv).
double clipped_term(double ratio, double advantage, double eps);

/// Unbiased KL estimator: with u = exp(logp_ref - logp_theta),
/// u - log u - 1 >= 0, zero iff the log-probs agree.
double kl_estimate(double logp_theta, double logp_ref);

/// Surrogate objective over frozen sampled groups, as a function of theta.
/// Mean over rollouts and turns of the clipped term minus kl_beta times the
/// per-turn KL estimate against theta_ref.
double grpo_objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_ref,
                      const std::vector<RolloutGroup>& groups, const TrainablePolicy& policy,
                      const GrpoConfig& cfg);

/// Analytic gradient of grpo_objective with respect to theta.
Eigen::VectorXd grpo_objective_grad(const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& theta_ref,
                                    const std::vector<RolloutGroup>& groups,
                                    const TrainablePolicy& policy, const GrpoConfig& cfg);

/// Samples G rollouts per task under the current parameters (theta_old :=
/// theta), scores them with the process reward, normalizes advantages per
/// group and takes one ascent step. Throws on a non-finite gradient. When
/// cfg.momentum > 0 the caller supplies a velocity buffer that persists
/// across steps (heavy-ball); with momentum = 0 the update is plain ascent.
StepStats grpo_step(const std::vector<PointingTask>& tasks, TrainablePolicy& policy,
                    const Eigen::VectorXd& theta_ref, const RewardConfig& reward_cfg,
                    const GrpoConfig& cfg, const RolloutConfig& rollout_cfg,
                    Eigen::VectorXd* velocity = nullptr);

/// Sampling plus scoring only (no update); exposed for the trainer and tests.
std::vector<RolloutGroup> sample_groups(const std::vector<PointingTask>& tasks,
                                        TrainablePolicy& policy,
                                        const RewardConfig& reward_cfg, const GrpoConfig& cfg,
                                        const RolloutConfig& rollout_cfg);

}  // namespace poivre
