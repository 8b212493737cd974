#include <benchmark/benchmark.h>

#include <random>

#include "poivre/evalbench.hpp"
#include "poivre/toylab.hpp"

using namespace poivre;

namespace {

std::vector<double> random_distances(int turns, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 141.0);
  std::vector<double> d(turns);
  for (double& v : d) v = dist(rng);
  return d;
}

void BM_process_reward_telescoped(benchmark::State& state) {
  RewardConfig cfg;
  cfg.turns = static_cast<int>(state.range(0));
  const auto d = random_distances(cfg.turns, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(process_reward_telescoped(d, cfg));
  }
}
BENCHMARK(BM_process_reward_telescoped)->Arg(2)->Arg(8)->Arg(22);

void BM_process_reward_weighted(benchmark::State& state) {
  RewardConfig cfg;
  cfg.turns = static_cast<int>(state.range(0));
  const auto d = random_distances(cfg.turns, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(process_reward_weighted(d, cfg));
  }
}
BENCHMARK(BM_process_reward_weighted)->Arg(2)->Arg(8)->Arg(22);

void BM_render_markers(benchmark::State& state) {
  const int px = static_cast<int>(state.range(0));
  Raster img(px, px, {40, 40, 40});
  const std::vector<Point> points = {Point(30, 40), Point(70, 20), Point(55, 80)};
  MarkerStyle style;
  style.label = 2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_markers(img, points, style));
  }
}
BENCHMARK(BM_render_markers)->Arg(128)->Arg(512);

void BM_png_round_trip(benchmark::State& state) {
  const int px = static_cast<int>(state.range(0));
  Raster img(px, px, {40, 40, 40});
  img.set(px / 2, px / 2, {200, 10, 10});
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_png(encode_png(img)));
  }
}
BENCHMARK(BM_png_round_trip)->Arg(128)->Arg(512);

void BM_normalize_advantages(benchmark::State& state) {
  const auto rewards = random_distances(static_cast<int>(state.range(0)), 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(normalize_advantages(rewards));
  }
}
BENCHMARK(BM_normalize_advantages)->Arg(8)->Arg(64);

void BM_extract_features(benchmark::State& state) {
  SceneConfig scene;
  const PointingTask task = generate_task(scene, 5);
  const Raster img = *task.image.raster;
  MarkerStyle style;
  const Raster marked = render_markers(img, {Point(48, 52)}, style);
  const std::vector<Raster> history = {img, marked};
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_features(history, task.query, 2, scene, style.fill));
  }
}
BENCHMARK(BM_extract_features);

void BM_grpo_objective_grad(benchmark::State& state) {
  SceneConfig scene;
  GaussianPolicy policy(scene, 3);
  GrpoConfig cfg;
  RewardConfig reward;
  RolloutConfig rollout;
  const auto tasks = generate_tasks(scene, 900, 4);
  const auto groups = sample_groups(tasks, policy, reward, cfg, rollout);
  const Eigen::VectorXd theta = policy.params();
  for (auto _ : state) {
    benchmark::DoNotOptimize(grpo_objective_grad(theta, theta, groups, policy, cfg));
  }
}
BENCHMARK(BM_grpo_objective_grad);

void BM_grpo_step(benchmark::State& state) {
  SceneConfig scene;
  GaussianPolicy policy(scene, 3);
  GrpoConfig cfg;
  RewardConfig reward;
  RolloutConfig rollout;
  const auto tasks = generate_tasks(scene, 900, 4);
  const Eigen::VectorXd theta_ref = policy.params();
  for (auto _ : state) {
    benchmark::DoNotOptimize(grpo_step(tasks, policy, theta_ref, reward, cfg, rollout));
  }
}
BENCHMARK(BM_grpo_step);

}  // namespace

BENCHMARK_MAIN();
