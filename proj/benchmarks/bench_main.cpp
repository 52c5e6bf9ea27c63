#include "phaseless/forward.hpp"
#include "phaseless/geodesics.hpp"
#include "phaseless/recovery.hpp"
#include "phaseless/tomography.hpp"

#include <benchmark/benchmark.h>

using namespace phaseless;

namespace {

medium::RefractiveField gaussian() {
  medium::PhantomSpec s;
  s.kind = medium::PhantomKind::Gaussian;
  s.epsilon = 0.1;
  s.sigma = 0.5;
  s.support_radius = 1.0;
  return medium::RefractiveField::phantom(s);
}

geodesics::ConnectOptions forced() {
  geodesics::ConnectOptions o;
  o.force = true;
  return o;
}

void BM_Connect(benchmark::State& st) {
  const auto f = gaussian();
  const Vec3 y(-2.0, 0.3, 0.1), x(1.9, -0.4, 0.5);
  for (auto _ : st) benchmark::DoNotOptimize(geodesics::connect(f, x, y, forced()).tau);
}
BENCHMARK(BM_Connect)->Unit(benchmark::kMicrosecond);

void BM_SynthesizeSpectrum(benchmark::State& st) {
  const auto kg = forward::KGrid::for_alpha_bound(50.0, 50.0 + static_cast<double>(st.range(0)), 2.0);
  forward::RemainderModel r;
  r.kind = forward::RemainderModel::Kind::RandomSmooth;
  r.c = 0.1;
  for (auto _ : st) {
    benchmark::DoNotOptimize(forward::synthesize_spectrum({0.05}, {0.04}, 2.7, 2.0, r, kg).f.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(kg.count));
}
BENCHMARK(BM_SynthesizeSpectrum)->Arg(450)->Arg(4500);

void BM_RecoverTau(benchmark::State& st) {
  const double A0 = 1.0 / (8.0 * kPi);
  const auto kg = forward::KGrid::for_alpha_bound(50.0, 500.0, 2.0);
  forward::RemainderModel r;
  r.kind = forward::RemainderModel::Kind::RationalDecay;
  r.c = 0.2;
  const auto s = forward::synthesize_spectrum({2.0 * A0}, {A0}, 2.9, 2.0, r, kg);
  for (auto _ : st) benchmark::DoNotOptimize(recovery::recover_tau(s, A0, 2.0).tau_hat);
}
BENCHMARK(BM_RecoverTau)->Unit(benchmark::kMicrosecond);

void BM_KernelAssembly(benchmark::State& st) {
  const Ball omega{Vec3::Zero(), 1.0};
  const auto model = tomography::TomographyModel::default_grid(omega, static_cast<int>(st.range(0)));
  const auto table = geodesics::build_table(medium::RefractiveField::vacuum(),
                                            medium::SurfaceConfig::sphere(Vec3::Zero(), 2.0, 8, 8), forced());
  tomography::KernelOptions ko;
  ko.connect = forced();
  for (auto _ : st) benchmark::DoNotOptimize(tomography::assemble_kernel(model, table, ko).K.nonZeros());
}
BENCHMARK(BM_KernelAssembly)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
