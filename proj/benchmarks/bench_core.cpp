#include <benchmark/benchmark.h>

#include "teleop/master.hpp"
#include "teleop/sim.hpp"
#include "teleop/spatial.hpp"
#include "teleop/stability.hpp"

using namespace teleop;

namespace {

void BM_Regressor(benchmark::State& state) {
  const auto V = SpatialVector::velocity(Vec3(0.1, 0.2, 0.0),
                                         Vec3(0.0, 0.0, 0.7), "A");
  const auto Vr = SpatialVector::velocity(Vec3(0.2, -0.1, 0.0),
                                          Vec3(0.0, 0.0, 0.5), "A");
  const auto dVr = SpatialVector::velocity(Vec3(1.0, 0.4, 0.0),
                                           Vec3(0.0, 0.0, 2.0), "A");
  const GravityField g = GravityField::standard();
  const Mat3 R = Mat3::Identity();
  for (auto _ : state) {
    benchmark::DoNotOptimize(regressor(V, Vr, dVr, g, R));
  }
}
BENCHMARK(BM_Regressor);

void BM_MasterThetaJacobian(benchmark::State& state) {
  const MasterKinematics kin({});
  const Vec2 q(0.2, -0.3);
  const Vec2 dq(0.5, -0.4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kin.theta(q));
    benchmark::DoNotOptimize(kin.theta_dot(q, dq));
    benchmark::DoNotOptimize(kin.jacobian(q));
    benchmark::DoNotOptimize(kin.jacobian_dot(q, dq));
  }
}
BENCHMARK(BM_MasterThetaJacobian);

void BM_ControllerPeriod(benchmark::State& state) {
  const ScenarioConfig cfg = experiment_preset("exp1");
  const MasterKinematics kin = cfg.master_kinematics();
  const MasterBodies bodies = cfg.master_bodies();
  const OperatorModel op = cfg.operator_model();
  const GravityField g = cfg.gravity_field();
  MasterController::Gains gains;
  gains.K_m = cfg.master.k_m.asDiagonal();
  gains.A = cfg.channel.A();
  gains.C = cfg.channel.C();
  MasterController mc(kin, bodies, op, g, gains, cfg.dt, cfg.op.p_hat0);
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mc.step(t, Vec2(0.05, -0.02), Vec2(0.01, 0.02),
                                     Vec2(0.001, 0.0),
                                     MasterController::ChannelFeed{}));
    t += cfg.dt;
  }
}
BENCHMARK(BM_ControllerPeriod);

void BM_ScenarioSecond(benchmark::State& state) {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.duration = 1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_scenario(cfg));
  }
}
BENCHMARK(BM_ScenarioSecond)->Unit(benchmark::kMillisecond);

void BM_SweepCheck(benchmark::State& state) {
  LoopParams lp;
  lp.A = 60e-6;
  lp.C = 35.0;
  lp.Lambda = 2.0;
  lp.kappa_p = 1.0;
  lp.kappa_f = 300.0;
  const SecondOrderImpedance z{10.0, 1e3, 1e5};
  const auto grid = default_omega_grid(100000);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sweep_check(lp, z, Side::slave, grid));
  }
}
BENCHMARK(BM_SweepCheck)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
