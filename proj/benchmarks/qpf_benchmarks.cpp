#include <vector>

#include <benchmark/benchmark.h>

#include "qpf/averaging.hpp"
#include "qpf/eigen_sym4.hpp"
#include "qpf/particle_filter.hpp"
#include "qpf/quaternion.hpp"

namespace {

using namespace qpf;

UnitQuaternion RandomQuaternion(Rng& rng) {
  Vec4 v;
  for (int i = 0; i < 4; ++i) {
    v[i] = StandardNormal(rng);
  }
  return UnitQuaternion(v / v.norm());
}

std::vector<UnitQuaternion> Cloud(std::size_t n, Rng& rng) {
  UnitQuaternion const center = RandomQuaternion(rng);
  std::vector<UnitQuaternion> q;
  for (std::size_t i = 0; i < n; ++i) {
    q.push_back(Multiply(UnitQuaternion::FromRotationVector(
                             0.05 * StandardNormal3(rng)),
                         center));
  }
  return q;
}

void BM_Multiply(benchmark::State& state) {
  Rng rng = MakeRng(1);
  UnitQuaternion a = RandomQuaternion(rng);
  UnitQuaternion const b = RandomQuaternion(rng);
  for (auto _ : state) {
    a = Multiply(a, b);
    benchmark::DoNotOptimize(a);
  }
}
BENCHMARK(BM_Multiply);

void BM_Propagate(benchmark::State& state) {
  Rng rng = MakeRng(2);
  UnitQuaternion q = RandomQuaternion(rng);
  Vec3 const w(0.01, -0.02, 0.03);
  for (auto _ : state) {
    q = Propagate(q, w, 1.0);
    benchmark::DoNotOptimize(q);
  }
}
BENCHMARK(BM_Propagate);

void BM_EigenSym4(benchmark::State& state) {
  Rng rng = MakeRng(3);
  Mat4 const m =
      BuildMomentMatrix(WeightedQuaternions::Uniform(Cloud(100, rng))).m;
  for (auto _ : state) {
    benchmark::DoNotOptimize(EigenSym4(m));
  }
}
BENCHMARK(BM_EigenSym4);

void BM_MmseAverage(benchmark::State& state) {
  Rng rng = MakeRng(4);
  WeightedQuaternions const wq = WeightedQuaternions::Uniform(
      Cloud(static_cast<std::size_t>(state.range(0)), rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(MmseAverage(wq));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MmseAverage)->RangeMultiplier(10)->Range(10, 10000);

void BM_FilterStep(benchmark::State& state) {
  FilterConfig config;
  config.n_particles = static_cast<int>(state.range(0));
  config.fiducial = static_cast<FiducialStrategy>(state.range(1));
  config.gyro = GyroParams{1e-5, 3e-10, 1.0};
  Vec6 d;
  d << 1e-6, 1e-6, 1e-6, 1e-12, 1e-12, 1e-12;
  QuaternionParticleFilter filter(config, UnitQuaternion(), Vec3::Zero(),
                                  d.asDiagonal());
  Rng rng = MakeRng(5);
  std::vector<Vec3> const refs{Vec3::UnitX(), Vec3::UnitZ()};
  UnitQuaternion truth;
  GyroMeasurement gyro;
  gyro.omega_meas = Vec3(1e-3, 2e-3, -1e-3);
  for (auto _ : state) {
    truth = Propagate(truth, gyro.omega_meas, 1.0);
    auto const obs = SampleObservations(truth, refs, 1e-3, rng);
    benchmark::DoNotOptimize(filter.Step(gyro, obs));
  }
  state.SetLabel(ToString(config.fiducial));
}
BENCHMARK(BM_FilterStep)
    ->ArgsProduct({{100, 1000}, {0, 1}})
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
