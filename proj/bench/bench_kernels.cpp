// Parallel kernels against their serial references on the default kitchen.
// Arg 0 runs the serial path, 1 the OpenMP path.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "r2vr/cleanup.hpp"
#include "r2vr/registration.hpp"
#include "r2vr/retopo.hpp"
#include "r2vr/simscan.hpp"

using namespace r2vr;

namespace {

ScannerModel coarse_scanner() {
  ScannerModel s;
  s.angular_step = 0.008;
  return s;
}

struct Data {
  KitchenScene kitchen = synth_kitchen({}, 42);
  PointCloud merged;
  std::vector<Vec3> positions;
  std::vector<Vec3> sampled;  // voxel-downsampled, for RANSAC
  TriangleMesh room;

  Data() {
    std::vector<PointCloud> clouds;
    for (int i = 0; i < 2; ++i)
      clouds.push_back(simulate_scan(kitchen.scene, kitchen.stations[i], coarse_scanner(), i).cloud);
    const std::vector<RigidTransform> poses{kitchen.stations[0], kitchen.stations[1]};
    merged = merge_clouds(clouds, poses);
    for (const auto& r : merged.records) positions.push_back(r.position);
    for (const auto& r : voxel_downsample(merged, 0.02).records) sampled.push_back(r.position);
    room = make_box_mesh(kitchen.room_box.min, kitchen.room_box.max);
  }
};

const Data& data() {
  static const Data d;
  return d;
}

void set_counters(benchmark::State& state, std::size_t items) {
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * items));
  state.counters["threads"] = state.range(0) ? omp_get_max_threads() : 1;
}

void BM_Simulate(benchmark::State& state) {
  const auto& d = data();
  std::size_t n = 0;
  for (auto _ : state) {
    const auto r = state.range(0) ? simulate_scan(d.kitchen.scene, d.kitchen.stations[0], coarse_scanner())
                                  : simulate_scan_serial(d.kitchen.scene, d.kitchen.stations[0], coarse_scanner());
    n = r.cloud.size();
    benchmark::DoNotOptimize(n);
  }
  set_counters(state, n);
}

void BM_KnnMeanDistances(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    auto m = state.range(0) ? knn_mean_distances(d.positions, 8) : knn_mean_distances_serial(d.positions, 8);
    benchmark::DoNotOptimize(m.data());
  }
  set_counters(state, d.positions.size());
}

void BM_GhostFilter(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    auto r = state.range(0) ? specular_ghost_filter(d.merged, d.kitchen.specular_regions)
                            : specular_ghost_filter_serial(d.merged, d.kitchen.specular_regions);
    benchmark::DoNotOptimize(r.flagged.data());
  }
  set_counters(state, d.merged.size());
}

void BM_Ransac(benchmark::State& state) {
  const auto& d = data();
  RansacParams p;
  p.min_inliers = 100;
  p.cluster_radius = 0.06;
  for (auto _ : state) {
    auto s = state.range(0) ? ransac_planes(d.sampled, p) : ransac_planes_serial(d.sampled, p);
    benchmark::DoNotOptimize(s.data());
  }
  set_counters(state, d.sampled.size());
}

void BM_Deviation(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    auto r = state.range(0) ? deviation(d.room, d.positions) : deviation_serial(d.room, d.positions);
    benchmark::DoNotOptimize(r.mean_mm);
  }
  set_counters(state, std::min<std::size_t>(d.positions.size(), 200000));
}

}  // namespace

BENCHMARK(BM_Simulate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnMeanDistances)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GhostFilter)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ransac)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Deviation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
