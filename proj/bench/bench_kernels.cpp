// Parallel kernels against their serial twins. The serial versions are the
// reference implementations the tests trust; these timings show what the
// OpenMP fan-out buys on each kernel.
#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "agile/dynamics.hpp"
#include "agile/geometry.hpp"
#include "agile/metrics.hpp"
#include "agile/perception.hpp"
#include "agile/rng.hpp"
#include "agile/runtime.hpp"

using namespace agile;

namespace {

const geometry::PlanarShape& star_shape() {
  static geometry::PlanarShape shape = [] {
    Rng rng(77);
    std::vector<double> angles(48);
    for (auto& a : angles) a = rng.uniform(0.0, 2.0 * kPi);
    std::sort(angles.begin(), angles.end());
    std::vector<Vec2> poly;
    for (double a : angles) {
      double r = rng.uniform(20.0, 60.0);
      poly.emplace_back(80.0 + r * std::cos(a), 80.0 + r * std::sin(a));
    }
    return geometry::PlanarShape::from_polygon(poly, 0.25);
  }();
  return shape;
}

struct TorqueFixture {
  dynamics::RigidObject obj;
  dynamics::PivotConfig cfg;
};

const TorqueFixture& torque_fixture() {
  static TorqueFixture f = [] {
    TorqueFixture t;
    t.obj.side_view = geometry::PlanarShape::from_polygon(
        {Vec2(0, 0), Vec2(70, 0), Vec2(70, 20), Vec2(0, 20)}, 1.0);
    t.obj.mass_kg = 1.2;
    t.obj.com_mm = Vec3(480, 100, 10);
    t.obj.thickness_mm = 20.0;
    t.cfg.pivot_point_mm = Vec3(520, 100, 0);
    t.cfg.pivot_dir = Vec3::UnitY();
    t.cfg.grasp_point_mm = Vec3(445, 100, 20);
    return t;
  }();
  return f;
}

const std::vector<perception::Observation>& observation_batch() {
  static std::vector<perception::Observation> batch = [] {
    auto plate = geometry::PlanarShape::from_polygon(
        {Vec2(0, 0), Vec2(40, 0), Vec2(40, 12), Vec2(16, 12), Vec2(16, 24), Vec2(0, 24)}, 1.0);
    perception::Camera cam;
    cam.width_px = 224;
    cam.height_px = 224;
    cam.px_per_mm = 0.5;
    Rng rng(31);
    std::vector<perception::Observation> out;
    for (int i = 0; i < 32; ++i) {
      perception::WorldView view;
      view.shape = &plate;
      view.pose = geometry::Se2{rng.uniform(-60.0, 10.0), rng.uniform(-35.0, 35.0),
                                rng.uniform(0.0, 2.0 * kPi)};
      view.mirrored = (i % 2) == 1;
      out.push_back(perception::render_observation(view, cam));
    }
    return out;
  }();
  return batch;
}

const runtime::EpisodeTrace& long_trace() {
  static runtime::EpisodeTrace trace = [] {
    runtime::EpisodeTrace tr;
    tr.setup.arm = kinematics::ArmModel::default_arm();
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
      runtime::Tick tk;
      tk.t_us = i * 20000;
      tk.q_act << 0.0, -1.2, 1.9, -2.27, -kPi / 2.0, 0.0;
      for (int j = 0; j < 6; ++j) tk.q_act[j] += rng.uniform(-0.3, 0.3);
      tr.ticks.push_back(tk);
    }
    return tr;
  }();
  return trace;
}

void bm_anchor_parallel(benchmark::State& state) {
  const auto& s = star_shape();
  for (auto _ : state) benchmark::DoNotOptimize(geometry::pivot_anchor(s));
}
void bm_anchor_serial(benchmark::State& state) {
  const auto& s = star_shape();
  for (auto _ : state) benchmark::DoNotOptimize(geometry::serial::pivot_anchor(s));
}

void bm_grasp_anchor_parallel(benchmark::State& state) {
  const auto& s = star_shape();
  for (auto _ : state) benchmark::DoNotOptimize(geometry::stability_anchor(s));
}
void bm_grasp_anchor_serial(benchmark::State& state) {
  const auto& s = star_shape();
  for (auto _ : state) benchmark::DoNotOptimize(geometry::serial::stability_anchor(s));
}

void bm_torque_sweep_parallel(benchmark::State& state) {
  const auto& f = torque_fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        dynamics::quasi_static_flip_rollout(f.obj, f.cfg, static_cast<int>(state.range(0))));
}
void bm_torque_sweep_serial(benchmark::State& state) {
  const auto& f = torque_fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(dynamics::serial::quasi_static_flip_rollout(
        f.obj, f.cfg, static_cast<int>(state.range(0))));
}

void bm_feature_batch_parallel(benchmark::State& state) {
  const auto& batch = observation_batch();
  for (auto _ : state) benchmark::DoNotOptimize(perception::extract_features_batch(batch));
}
void bm_feature_batch_serial(benchmark::State& state) {
  const auto& batch = observation_batch();
  for (auto _ : state) benchmark::DoNotOptimize(perception::serial::extract_features_batch(batch));
}

void bm_singularity_scan_parallel(benchmark::State& state) {
  const auto& tr = long_trace();
  for (auto _ : state) benchmark::DoNotOptimize(metrics::singularity_rate_pct(tr));
}
void bm_singularity_scan_serial(benchmark::State& state) {
  const auto& tr = long_trace();
  for (auto _ : state) benchmark::DoNotOptimize(metrics::serial::singularity_rate_pct(tr));
}

BENCHMARK(bm_anchor_parallel);
BENCHMARK(bm_anchor_serial);
BENCHMARK(bm_grasp_anchor_parallel);
BENCHMARK(bm_grasp_anchor_serial);
BENCHMARK(bm_torque_sweep_parallel)->Arg(180)->Arg(1440);
BENCHMARK(bm_torque_sweep_serial)->Arg(180)->Arg(1440);
BENCHMARK(bm_feature_batch_parallel);
BENCHMARK(bm_feature_batch_serial);
BENCHMARK(bm_singularity_scan_parallel);
BENCHMARK(bm_singularity_scan_serial);

}  // namespace

BENCHMARK_MAIN();
