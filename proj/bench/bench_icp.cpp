// Correspondence search: OpenMP kernel against its serial reference, and the
// kd-tree against brute force.

#include <random>

#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "vservo/harness.hpp"
#include "vservo/icp.hpp"
#include "vservo/kdtree.hpp"

namespace {

using namespace vservo;

struct Scene {
  SurfaceModel model;
  std::vector<Vec3> cloud;
  UnitQuaternion eta;
  Vec3 rho;
};

Scene make_scene(std::size_t cloud_points) {
  ScenarioConfig cfg;
  TargetState truth = cfg.initial;
  truth.sigma = sigma_from_inertia(cfg.inertia.x(), cfg.inertia.y(), cfg.inertia.z());
  Scene s{SurfaceModel(make_model_points(cfg, truth)), {}, UnitQuaternion(), Vec3::Zero()};
  std::mt19937_64 rng(9);
  std::mt19937_64 unused(10);
  cfg.cloud.points = static_cast<int>(cloud_points);
  s.cloud = synthesize_cloud(truth, s.model, cfg, 0.0, rng, unused).points;
  // Cloud-to-model transform at the true pose.
  s.eta = quat_inverse(truth.grasp_attitude());
  s.rho = -(rotation_matrix(s.eta) * truth.grasp_position());
  return s;
}

void BM_correspondences_serial(benchmark::State& state) {
  const Scene s = make_scene(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(correspondence_indices_serial(s.cloud, s.model, s.eta, s.rho));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_correspondences_openmp(benchmark::State& state) {
  const Scene s = make_scene(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(correspondence_indices(s.cloud, s.model, s.eta, s.rho));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_nearest_kdtree(benchmark::State& state) {
  std::mt19937_64 rng(11);
  std::vector<Vec3> pts(static_cast<std::size_t>(state.range(0)));
  for (Vec3& p : pts) p = testing::random_vec(rng, 1.0);
  const KdTree tree(pts);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tree.nearest(pts[i++ % pts.size()] * 0.9));
}

void BM_nearest_linear(benchmark::State& state) {
  std::mt19937_64 rng(11);
  std::vector<Vec3> pts(static_cast<std::size_t>(state.range(0)));
  for (Vec3& p : pts) p = testing::random_vec(rng, 1.0);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(nearest_linear(pts, pts[i++ % pts.size()] * 0.9));
}

}  // namespace

BENCHMARK(BM_correspondences_serial)->Arg(400)->Arg(4000)->Arg(40000);
BENCHMARK(BM_correspondences_openmp)->Arg(400)->Arg(4000)->Arg(40000);
BENCHMARK(BM_nearest_kdtree)->Arg(1000)->Arg(10000);
BENCHMARK(BM_nearest_linear)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
