#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "poivre/grpo.hpp"
#include "poivre/toylab.hpp"

using namespace poivre;

namespace {

/// Minimal trainable policy with a hand-differentiable log-probability:
/// lp(theta, rec) = -1/2 * sum_k (a_k - theta_k * f)^2 with f = features(0).
/// Smooth and quadratic, so central finite differences are near-exact.
class TinyPolicy : public TrainablePolicy {
 public:
  PolicyAction act(const std::vector<Raster>&, const std::string&, int) override {
    throw std::logic_error("TinyPolicy is evaluate-only");
  }
  Eigen::VectorXd params() const override { return theta_; }
  void set_params(const Eigen::VectorXd& theta) override { theta_ = theta; }
  std::vector<TurnRecord> take_recorded_turns() override { return {}; }

  double turn_logprob(const Eigen::VectorXd& theta, const TurnRecord& rec) const override {
    const double f = rec.features(0);
    double lp = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double d = rec.action(k) - theta(k) * f;
      lp -= 0.5 * d * d;
    }
    return lp;
  }

  Eigen::VectorXd turn_logprob_grad(const Eigen::VectorXd& theta,
                                    const TurnRecord& rec) const override {
    const double f = rec.features(0);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
    for (int k = 0; k < 2; ++k) g(k) = (rec.action(k) - theta(k) * f) * f;
    return g;
  }

 private:
  Eigen::VectorXd theta_ = Eigen::VectorXd::Zero(2);
};

TurnRecord make_record(double f, double ax, double ay, double lp_old) {
  TurnRecord rec;
  rec.features = Eigen::VectorXd::Constant(1, f);
  rec.action = Eigen::Vector2d(ax, ay);
  rec.logprob_old = lp_old;
  return rec;
}

/// One group with given advantages; each rollout has the given turn records.
RolloutGroup make_group(std::vector<std::vector<TurnRecord>> records,
                        std::vector<double> advantages) {
  RolloutGroup g;
  g.task_id = "g";
  g.records = std::move(records);
  g.advantages = std::move(advantages);
  g.rewards.assign(g.advantages.size(), 0.0);
  g.trajectories.resize(g.advantages.size());
  return g;
}

GrpoConfig grpo_cfg(double eps, double beta) {
  GrpoConfig cfg;
  cfg.clip_epsilon = eps;
  cfg.kl_beta = beta;
  return cfg;
}

}  // namespace

TEST_CASE("advantage normalization hand values") {
  const auto a = normalize_advantages({1.0, 2.0, 3.0});
  REQUIRE(a.size() == 3);
  CHECK(a[0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(a[1] == doctest::Approx(0.0).scale(1.0));
  CHECK(a[2] == doctest::Approx(1.224745).epsilon(1e-6));

  const auto b = normalize_advantages({0.0, 1.0});
  CHECK(b[0] == doctest::Approx(-1.0));
  CHECK(b[1] == doctest::Approx(1.0));
}

TEST_CASE("degenerate groups get all-zero advantages") {
  for (double v : {0.0, 0.3, 1.0}) {
    const auto a = normalize_advantages({v, v, v, v});
    for (double x : a) CHECK(x == 0.0);
  }
  // below the 1e-6 std guard
  const auto tiny = normalize_advantages({0.5, 0.5 + 1e-9});
  for (double x : tiny) CHECK(x == 0.0);
  CHECK_THROWS_AS(normalize_advantages({1.0}), InvalidInput);
}

TEST_CASE("advantages are standardized and affine-invariant") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> r(4 + rng() % 8);
    for (double& x : r) x = dist(rng);
    const auto a = normalize_advantages(r);
    double mean = 0.0, var = 0.0;
    for (double x : a) mean += x;
    mean /= a.size();
    for (double x : a) var += (x - mean) * (x - mean);
    var /= a.size();
    if (var == 0.0) continue;  // degenerate draw
    CHECK(mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));

    // positive affine rescaling leaves advantages unchanged
    std::vector<double> scaled;
    for (double x : r) scaled.push_back(2.5 * x + 7.0);
    const auto a2 = normalize_advantages(scaled);
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(a2[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("clipped term hand values") {
  CHECK(clipped_term(1.0, 0.7, 0.2) == doctest::Approx(0.7));
  CHECK(clipped_term(1.5, 1.0, 0.2) == doctest::Approx(1.2));  // clipped above
  CHECK(clipped_term(0.5, 1.0, 0.2) == doctest::Approx(0.5));  // min picks raw
  // negative advantage: min picks the clipped (more negative) branch
  CHECK(clipped_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_term(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK_THROWS_AS(clipped_term(0.0, 1.0, 0.2), InvalidInput);
  CHECK_THROWS_AS(clipped_term(-0.5, 1.0, 0.2), InvalidInput);
}

TEST_CASE("kl estimator hand values and non-negativity") {
  CHECK(kl_estimate(-1.3, -1.3) == doctest::Approx(0.0).scale(1.0));
  // logp_ref - logp_theta = ln 2 -> u = 2 -> 2 - ln 2 - 1
  CHECK(kl_estimate(-std::log(2.0), 0.0) == doctest::Approx(1.0 - std::log(2.0)).epsilon(1e-12));
  // u = 1/2 -> 1/2 + ln 2 - 1
  CHECK(kl_estimate(0.0, -std::log(2.0)) == doctest::Approx(std::log(2.0) - 0.5).epsilon(1e-12));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dist(-4.0, 0.0);
  for (int it = 0; it < 500; ++it) {
    CHECK(kl_estimate(dist(rng), dist(rng)) >= 0.0);
  }
  CHECK_THROWS_AS(kl_estimate(std::nan(""), 0.0), InvalidInput);
}

TEST_CASE("objective is zero at theta = theta_old = theta_ref") {
  TinyPolicy policy;
  const Eigen::VectorXd theta = Eigen::VectorXd::Zero(2);
  // logprob_old must equal turn_logprob(theta, rec) so ratios are exactly 1;
  // advantages within a group sum to zero by construction.
  std::vector<std::vector<TurnRecord>> records;
  for (double a : {10.0, 30.0, 50.0}) {
    TurnRecord rec = make_record(1.0, a, a, 0.0);
    rec.logprob_old = policy.turn_logprob(theta, rec);
    records.push_back({rec});
  }
  const auto groups = std::vector<RolloutGroup>{
      make_group(records, {-1.224745, 0.0, 1.224745})};
  CHECK(grpo_objective(theta, theta, groups, policy, grpo_cfg(0.2, 0.01)) ==
        doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("analytic gradient matches central finite differences") {
  TinyPolicy policy;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> fdist(0.3, 1.5);
  std::uniform_real_distribution<double> adist(-1.0, 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    // Groups of 3 rollouts, 2 turns each, random records sampled near the
    // old parameters so the clip boundary is not straddled.
    const Eigen::VectorXd theta_old = Eigen::Vector2d(adist(rng), adist(rng));
    std::vector<std::vector<TurnRecord>> records;
    for (int i = 0; i < 3; ++i) {
      std::vector<TurnRecord> turns;
      for (int t = 0; t < 2; ++t) {
        const double f = fdist(rng);
        TurnRecord rec = make_record(f, theta_old(0) * f + 0.3 * adist(rng),
                                     theta_old(1) * f + 0.3 * adist(rng), 0.0);
        rec.logprob_old = policy.turn_logprob(theta_old, rec);
        turns.push_back(rec);
      }
      records.push_back(std::move(turns));
    }
    const auto groups =
        std::vector<RolloutGroup>{make_group(records, {-1.2, 0.2, 1.0})};

    const Eigen::VectorXd theta_ref = Eigen::Vector2d(adist(rng), adist(rng));
    const Eigen::VectorXd theta =
        theta_old + 0.02 * Eigen::Vector2d(adist(rng), adist(rng));
    const GrpoConfig cfg = grpo_cfg(0.5, 0.05);

    const Eigen::VectorXd g = grpo_objective_grad(theta, theta_ref, groups, policy, cfg);
    const double h = 1e-6;
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp(k) += h;
      tm(k) -= h;
      const double fd = (grpo_objective(tp, theta_ref, groups, policy, cfg) -
                         grpo_objective(tm, theta_ref, groups, policy, cfg)) /
                        (2.0 * h);
      CHECK(g(k) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("at theta_old with beta=0 the gradient is the REINFORCE estimator") {
  TinyPolicy policy;
  const Eigen::VectorXd theta = Eigen::Vector2d(0.4, -0.2);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> adist(-1.0, 1.0);

  std::vector<std::vector<TurnRecord>> records;
  const std::vector<double> advantages = {-1.0, 0.3, 0.7};
  for (int i = 0; i < 3; ++i) {
    TurnRecord rec = make_record(1.0 + 0.1 * i, adist(rng), adist(rng), 0.0);
    rec.logprob_old = policy.turn_logprob(theta, rec);
    records.push_back({rec});
  }
  const auto groups = std::vector<RolloutGroup>{make_group(records, advantages)};

  // hand-computed: mean over rollouts of advantage * score (ratio = 1, T = 1)
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < 3; ++i) {
    expected += advantages[i] * policy.turn_logprob_grad(theta, records[i][0]);
  }
  expected /= 3.0;

  const Eigen::VectorXd g =
      grpo_objective_grad(theta, theta, groups, policy, grpo_cfg(0.2, 0.0));
  CHECK(g(0) == doctest::Approx(expected(0)).epsilon(1e-12));
  CHECK(g(1) == doctest::Approx(expected(1)).epsilon(1e-12));
}

TEST_CASE("config validation") {
  GrpoConfig cfg;
  cfg.group_size = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = GrpoConfig{};
  cfg.clip_epsilon = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = GrpoConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  CHECK_NOTHROW(GrpoConfig{}.validate());
}

TEST_CASE("sample_groups shapes and reward agreement") {
  SceneConfig scene;
  GaussianPolicy policy(scene, 42);
  const auto tasks = generate_tasks(scene, 100, 2);
  GrpoConfig cfg;
  cfg.group_size = 4;
  RewardConfig reward;
  RolloutConfig rollout;
  const auto groups = sample_groups(tasks, policy, reward, cfg, rollout);

  REQUIRE(groups.size() == 2);
  for (const auto& g : groups) {
    REQUIRE(g.trajectories.size() == 4);
    REQUIRE(g.records.size() == 4);
    REQUIRE(g.rewards.size() == 4);
    REQUIRE(g.advantages.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
      CHECK(g.trajectories[i].turns() == rollout.turns);
      CHECK(static_cast<int>(g.records[i].size()) == rollout.turns);
      CHECK(g.rewards[i] ==
            doctest::Approx(process_reward_telescoped(g.trajectories[i].distances, reward)));
      // the stored logprob_old matches re-evaluation under current params
      for (const TurnRecord& rec : g.records[i]) {
        CHECK(rec.logprob_old ==
              doctest::Approx(policy.turn_logprob(policy.params(), rec)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("grpo_step is deterministic given the seed") {
  SceneConfig scene;
  const auto tasks = generate_tasks(scene, 7, 2);
  GrpoConfig cfg;
  cfg.group_size = 4;
  RewardConfig reward;
  RolloutConfig rollout;

  auto run_once = [&](uint64_t seed) {
    GaussianPolicy policy(scene, seed);
    const Eigen::VectorXd ref = policy.params();
    grpo_step(tasks, policy, ref, reward, cfg, rollout);
    return policy.params();
  };

  const Eigen::VectorXd a = run_once(0);
  const Eigen::VectorXd b = run_once(0);
  const Eigen::VectorXd c = run_once(1);
  CHECK(a == b);
  CHECK(a != c);
  // the step actually moved the parameters
  GaussianPolicy fresh(scene, 0);
  CHECK(a != fresh.params());
}
