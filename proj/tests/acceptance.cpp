// Acceptance suite: one line per criterion, exit 0 only when all pass.
//
//  1  spatial-algebra invariants (power invariance, round trip,
//     Coriolis annihilation, regressor identity) over 1000 random cases
//  2  algebraic loop vs fixed-point iteration, contraction rejection
//  3  scaled tracking on exp1/exp2 with exact model parameters
//  4  force scaling in quasi-static contact + transparency fit
//  5  delay robustness: exp3 at 80 ms, verdicts, oracle agreement
//  6  stability monitors vs 10x step-halving truncation estimates
//  7  adaptation: projection safety and square-integrable residual
//  8  determinism (bitwise CSV) and 4th-order step-halving convergence

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "teleop/channel.hpp"
#include "teleop/config.hpp"
#include "teleop/master.hpp"
#include "teleop/sim.hpp"
#include "teleop/slave.hpp"
#include "teleop/spatial.hpp"
#include "teleop/stability.hpp"
#include "teleop/trace.hpp"

using namespace teleop;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("criterion %d [%s]: %s (%s, %.1f s)\n", idx,
              name, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  if (!pass) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// ---------------------------------------------------------------- criterion 1

void criterion1() {
  Timer timer;
  oracle::Rng rng(1001);
  double worst_power = 0.0;
  double worst_round = 0.0;
  double worst_skew = 0.0;
  double worst_regressor = 0.0;

  for (int i = 0; i < 1000; ++i) {
    const FrameTransform U(rng.rotation(), rng.vec3(0.8), "A", "B");
    const auto vA = SpatialVector::velocity(rng.vec3(), rng.vec3(), "A");
    const auto fB = SpatialVector::force(rng.vec3(5.0), rng.vec3(5.0), "B");
    const auto vB = transform_velocity(U, vA);
    const auto fA = transform_force(U, fB);
    worst_power = std::max(worst_power,
                           std::abs(vA.to_vec6().dot(fA.to_vec6()) -
                                    vB.to_vec6().dot(fB.to_vec6())));
    const auto back = transform_velocity(inverse(U), vB);
    worst_round =
        std::max(worst_round, (back.to_vec6() - vA.to_vec6()).norm());

    const oracle::Body body = rng.body();
    Vec13 theta = Vec13::Zero();
    theta[0] = body.mass;
    theta.segment<3>(1) = body.h;
    theta[4] = body.I(0, 0);
    theta[5] = body.I(0, 1);
    theta[6] = body.I(0, 2);
    theta[7] = body.I(1, 1);
    theta[8] = body.I(1, 2);
    theta[9] = body.I(2, 2);
    const BodyParams p(theta, theta, theta);

    const Vec3 w = rng.vec3(3.0);
    const Vec6 x = rng.vec6(2.0);
    worst_skew =
        std::max(worst_skew, std::abs(x.dot(spatial_coriolis(p, w) * x)));

    const Mat3 R = rng.rotation();
    const GravityField g = GravityField::standard();
    const Vec6 v = rng.vec6();
    const Vec6 v_r = rng.vec6();
    const Vec6 dv_r = rng.vec6(2.0);
    const Vec3 g_body = R.transpose() * g.g();
    const Vec6 via_y =
        regressor(SpatialVector::from_vec6(v, SpatialKind::velocity, "A"),
                  SpatialVector::from_vec6(v_r, SpatialKind::velocity, "A"),
                  SpatialVector::from_vec6(dv_r, SpatialKind::velocity, "A"),
                  g, R) *
        theta;
    const Vec6 direct =
        oracle::required_dynamics(body, v.tail<3>(), v_r, dv_r, g_body);
    worst_regressor =
        std::max(worst_regressor,
                 (via_y - direct).norm() / std::max(1.0, direct.norm()));
  }

  const bool pass = worst_power < 1e-12 && worst_round < 1e-12 &&
                    worst_skew < 1e-12 && worst_regressor < 1e-9;
  std::ostringstream d;
  d << "power " << worst_power << ", roundtrip " << worst_round << ", skew "
    << worst_skew << ", regressor rel " << worst_regressor;
  report(1, "spatial algebra", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 2

void criterion2() {
  Timer timer;
  oracle::Rng rng(2002);
  double worst = 0.0;
  bool rejection_ok = true;

  for (int i = 0; i < 1000; ++i) {
    Mat2 M;
    M << rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
        rng.uniform(-1, 1);
    Eigen::JacobiSVD<Mat2> svd(M);
    M *= rng.uniform(0.0, 0.95) / std::max(svd.singularValues()(0), 1e-12);

    const Mat2 C =
        Vec2(rng.uniform(1.0, 60.0), rng.uniform(1.0, 60.0)).asDiagonal();
    const Mat2 A =
        Vec2(rng.uniform(1e-5, 1e-3), rng.uniform(1e-5, 1e-3)).asDiagonal();
    LoopMatrices lm;
    lm.A2 = C.inverse() * M * A.inverse();
    lm.B3 = Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));

    const Vec2 direct = solve_loop(lm, C, A);
    Vec2 x = Vec2::Zero();
    for (int it = 0; it < 3000; ++it) x = M * x + lm.B3;
    worst = std::max(worst, (direct - x).norm());
  }

  // sigma >= 1 instances must be rejected with the documented error
  for (int i = 0; i < 50; ++i) {
    Mat2 M;
    M << rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
        rng.uniform(-1, 1);
    Eigen::JacobiSVD<Mat2> svd(M);
    M *= rng.uniform(1.0, 4.0) / std::max(svd.singularValues()(0), 1e-12);
    const Mat2 C = Vec2(30.0, 40.0).asDiagonal();
    const Mat2 A = Vec2(5e-5, 8e-5).asDiagonal();
    LoopMatrices lm;
    lm.A2 = C.inverse() * M * A.inverse();
    lm.B3 = Vec2(1.0, -1.0);
    try {
      solve_loop(lm, C, A);
      rejection_ok = false;
    } catch (const std::runtime_error& e) {
      if (std::string(e.what()).find("sigma_max") == std::string::npos) {
        rejection_ok = false;
      }
    }
  }

  const bool pass = worst < 1e-10 && rejection_ok;
  std::ostringstream d;
  d << "fixed-point mismatch " << worst << ", rejection "
    << (rejection_ok ? "ok" : "broken");
  report(2, "algebraic loop", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 3

void criterion3() {
  Timer timer;
  bool pass = true;
  std::ostringstream d;
  for (const char* name : {"exp1", "exp2"}) {
    ScenarioConfig cfg = experiment_preset(name);
    cfg.op.p_hat0 = cfg.op.p_true;  // exact model parameters
    const TraceLog log = run_scenario(cfg);
    const TrackingMetrics m = tracking_metrics(log, cfg.channel);

    double worst_late = 0.0;
    for (std::size_t k = 0; k < log.size(); ++k) {
      if (log.records[k].t > 2.0) {
        worst_late = std::max(worst_late, m.xi_p[k].norm());
      }
    }
    const std::size_t per_sec = static_cast<std::size_t>(1.0 / log.dt);
    const double tail_inc =
        m.l2_xi_v.back() - m.l2_xi_v[m.l2_xi_v.size() - 1 - per_sec];

    const bool ok = worst_late < 1e-3 && tail_inc < 1e-9;
    pass = pass && ok;
    d << name << ": max|xi_p|(t>2) = " << worst_late
      << " m, tail d/dt int|xi_v|^2 = " << tail_inc << "; ";
  }
  report(3, "scaled tracking", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 4

void criterion4() {
  Timer timer;
  // (a) quasi-static force scaling during the settled press phase of exp1
  // with exact model parameters.
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.op.p_hat0 = cfg.op.p_true;
  const TraceLog log = run_scenario(cfg);
  double worst_ratio = 0.0;
  int samples = 0;
  for (const auto& r : log.records) {
    if (r.t < 4.8 || r.t > 6.0 || r.sigma_f < 0.5) continue;
    worst_ratio = std::max(
        worst_ratio, (cfg.channel.kappa_f * r.f_tilde_m + r.f_tilde_s).norm() /
                         std::max(r.f_tilde_s.norm(), 1.0));
    ++samples;
  }

  // (b) sinusoidal excitation in free space; the fit must recover the
  // virtual mass kp/(kf A C) and damping within 10%.
  ScenarioConfig sin_cfg = experiment_preset("exp1");
  BasisComponent sine;
  sine.kind = BasisComponent::Kind::sine;
  sine.freq_hz = 1.0;
  sin_cfg.op.basis = {sine};
  sin_cfg.op.p_true = (VecX(2) << -2.0, -1.0).finished();
  sin_cfg.op.p_hat0 = sin_cfg.op.p_true;
  sin_cfg.op.p_lower = sin_cfg.op.p_true.array() - 20.0;
  sin_cfg.op.p_upper = sin_cfg.op.p_true.array() + 20.0;
  sin_cfg.op.rho = VecX::Constant(2, 50.0);
  sin_cfg.env.wall_offset = -100.0;
  const TraceLog slog = run_scenario(sin_cfg);
  const TransparencyMetrics tm =
      transparency_metrics(slog, sin_cfg.channel, 8.0, 18.0);

  double worst_fit = 0.0;
  for (int ax = 0; ax < 2; ++ax) {
    worst_fit = std::max(worst_fit,
                         std::abs(tm.mass_fit[ax] - tm.mass_predicted[ax]) /
                             tm.mass_predicted[ax]);
    worst_fit = std::max(
        worst_fit, std::abs(tm.damping_fit[ax] - tm.damping_predicted[ax]) /
                       tm.damping_predicted[ax]);
  }
  const double mass_expect = 1.0 / (300.0 * 60e-6 * 35.0);  // ~1.587 kg

  const bool pass = samples > 200 && worst_ratio < 0.05 && worst_fit < 0.10 &&
                    std::abs(tm.mass_predicted[0] - mass_expect) < 1e-12;
  std::ostringstream d;
  d << "quasi-static ratio " << worst_ratio << " over " << samples
    << " samples, fit error " << worst_fit << ", predicted mass "
    << tm.mass_predicted[0] << " kg";
  report(4, "force scaling / transparency", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 5

void criterion5() {
  Timer timer;
  // exp3 as shipped (unknown intent, adaptation active), 80 ms delay.
  const ScenarioConfig cfg = experiment_preset("exp3");
  bool aborted = false;
  double sup_delay = 0.0;
  double sup_nodelay = 0.0;
  try {
    const TraceLog d = run_scenario(cfg);
    for (const auto& r : d.records) sup_delay = std::max(sup_delay, r.xi_p.norm());
    ScenarioConfig c0 = cfg;
    c0.channel.delay_T = 0.0;
    const TraceLog n = run_scenario(c0);
    for (const auto& r : n.records) {
      sup_nodelay = std::max(sup_nodelay, r.xi_p.norm());
    }
  } catch (const NumericalAbort&) {
    aborted = true;
  }

  // both side gains verdict-stable for the exp3 channel
  const DelayRobustnessReport rep = delay_robustness_report(
      cfg.channel, cfg.op.m_h, cfg.op.d_h, cfg.op.k_h, cfg.env.m_e,
      cfg.env.d_e, cfg.env.k_e);

  // oracle agreement over 1000 random parameter sets
  oracle::Rng rng(5005);
  const auto grid = default_omega_grid(100000);
  int disagreements = 0;
  int compared = 0;
  for (int i = 0; i < 1000; ++i) {
    LoopParams lp;
    lp.A = rng.uniform(1e-6, 2e-3);
    lp.C = rng.uniform(2.0, 100.0);
    lp.Lambda = rng.uniform(0.1, 8.0);
    lp.kappa_p = rng.uniform(0.3, 4.0);
    lp.kappa_f = rng.uniform(1.0, 900.0);
    const SecondOrderImpedance z{rng.uniform(0, 80), rng.uniform(0, 8e3),
                                 rng.uniform(0, 8e5)};
    const Side side = (i % 2 == 0) ? Side::master : Side::slave;
    const StabilityVerdict cf = closed_form_check(lp, z, side);
    const StabilityVerdict sw = sweep_check(lp, z, side, grid);
    if (std::abs(cf.margin) < 1e-6 || std::abs(sw.margin) < 1e-6) continue;
    ++compared;
    if (cf.stable != sw.stable) ++disagreements;
  }

  const bool pass = !aborted && sup_delay < 5.0 * sup_nodelay && rep.stable &&
                    disagreements == 0 && compared > 800;
  std::ostringstream d;
  d << "sup|xi_p| delayed " << sup_delay << " vs no-delay " << sup_nodelay
    << " (x" << (sup_nodelay > 0 ? sup_delay / sup_nodelay : 0.0)
    << "), verdicts " << (rep.stable ? "stable" : "UNSTABLE") << ", "
    << disagreements << " oracle disagreements over " << compared;
  report(5, "delay robustness", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 6

void criterion6() {
  Timer timer;
  // Exact-model contact run at dt and dt/2; every decrease-condition margin
  // must be violated by no more than 10x the step-halving estimate.
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.op.p_hat0 = cfg.op.p_true;
  const TraceLog a = run_scenario(cfg);
  ScenarioConfig half = cfg;
  half.dt = 0.001;
  const TraceLog b = run_scenario(half);

  auto margin = [](const TraceLog& l, std::size_t k, double dt, bool o2) {
    const double dnu =
        o2 ? (l.records[k + 1].nu_o2 - l.records[k].nu_o2) / dt
           : (l.records[k + 1].nu_m - l.records[k].nu_m) / dt;
    const double bound =
        o2 ? (l.diag.nu_o2_bound[k] + l.diag.p_to2[k] - l.records[k].p_g)
           : l.diag.nu_m_bound[k];
    return dnu - bound;
  };

  int fails_m = 0;
  int fails_o2 = 0;
  for (std::size_t k = 0; k + 1 < a.size(); ++k) {
    for (const bool o2 : {false, true}) {
      const double m_a = margin(a, k, a.dt, o2);
      const double m_b =
          0.5 * (margin(b, 2 * k, b.dt, o2) + margin(b, 2 * k + 1, b.dt, o2));
      const double est = std::abs(m_a - m_b) + 1e-9;
      const double viol = std::max(0.0, m_a);
      if (viol > 10.0 * est) (o2 ? fails_o2 : fails_m)++;
    }
  }

  // Integral bound on p_G over every constant-sigma segment, with the
  // telescoping-identity residual certified to shrink under halving.
  const MonitorReport rep_a = monitors(a, cfg);
  const MonitorReport rep_b = monitors(b, half);
  double res_a = 0.0;
  double res_b = 0.0;
  for (const auto& s : rep_a.p_g_segments) res_a += s.identity_residual;
  for (const auto& s : rep_b.p_g_segments) res_b += s.identity_residual;
  const bool residual_converges = res_b < 0.75 * res_a + 1e-9;

  const bool pass = fails_m == 0 && fails_o2 == 0 && rep_a.p_g_bound_ok &&
                    rep_b.p_g_bound_ok && residual_converges;
  std::ostringstream d;
  d << "per-step failures nu_m " << fails_m << ", nu_O2 " << fails_o2
    << "; p_G segments " << (rep_a.p_g_bound_ok ? "ok" : "violated")
    << ", identity residual " << res_a << " -> " << res_b << " under halving";
  report(6, "stability monitors", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 7

void criterion7() {
  Timer timer;
  // Unknown constant intent within bounds, constant basis.
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.op.basis = {BasisComponent{}};
  cfg.op.p_true = (VecX(2) << 5.0, -3.0).finished();
  cfg.op.p_hat0 = VecX::Zero(2);
  cfg.op.p_lower = VecX::Constant(2, -20.0);
  cfg.op.p_upper = VecX::Constant(2, 20.0);
  cfg.op.rho = VecX::Constant(2, 50.0);
  cfg.env.wall_offset = -100.0;  // free space
  const TraceLog log = run_scenario(cfg);

  bool in_bounds = true;
  for (const auto& r : log.records) {
    for (int i = 0; i < 2; ++i) {
      if (r.p_hat[i] < -20.0 - 1e-12 || r.p_hat[i] > 20.0 + 1e-12) {
        in_bounds = false;
      }
    }
  }

  // running integral of |s|^2 (s is the master's own tracking residual; in
  // free space with the adapting estimate it must converge): measure by the
  // late-tail increment, mirroring the L2 definition.
  const TrackingMetrics m = tracking_metrics(log, cfg.channel);
  const std::size_t per_sec = static_cast<std::size_t>(1.0 / log.dt);
  const double tail_inc =
      m.l2_xi_v.back() - m.l2_xi_v[m.l2_xi_v.size() - 1 - per_sec];
  const double err_end =
      (log.records.back().p_hat - cfg.op.p_true).norm();

  // exact projection-freeze cases
  const auto basis = ExogenousBasis::constant();
  const VecX rho = VecX::Constant(2, 10.0);
  const VecX lo = VecX::Constant(2, -5.0);
  const VecX hi = VecX::Constant(2, 5.0);
  VecX p = (VecX(2) << 5.0, 0.0).finished();
  const VecX up = adaptation_step(p, Vec2(1.0, 0.0), basis, 0.0, rho, lo, hi,
                                  0.01);
  p[0] = -5.0;
  const VecX dn = adaptation_step(p, Vec2(-1.0, 0.0), basis, 0.0, rho, lo, hi,
                                  0.01);
  Vec13 th = Vec13::Zero();
  th[2] = 1.0;
  Vec13 s13 = Vec13::Zero();
  s13[2] = 2.0;
  const Vec13 thup = adaptation_step_o2(th, s13, Vec13::Constant(1.0),
                                        Vec13::Constant(-1.0),
                                        Vec13::Constant(1.0), 0.01);
  const bool freeze_ok = up[0] == 5.0 && dn[0] == -5.0 && thup[2] == 1.0;

  const bool pass = in_bounds && tail_inc < 1e-9 && freeze_ok &&
                    err_end < 0.5;
  std::ostringstream d;
  d << "bounds " << (in_bounds ? "held" : "violated") << ", tail increment "
    << tail_inc << ", |p_hat - p| at end " << err_end << ", freeze cases "
    << (freeze_ok ? "exact" : "broken");
  report(7, "adaptation", pass, d.str(), timer.elapsed());
}

// ---------------------------------------------------------------- criterion 8

void criterion8() {
  Timer timer;
  // bitwise determinism of the CSV
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.duration = 5.0;
  std::ostringstream csv_a;
  std::ostringstream csv_b;
  write_trace_csv(csv_a, run_scenario(cfg));
  write_trace_csv(csv_b, run_scenario(cfg));
  const bool deterministic = csv_a.str() == csv_b.str();

  // free-space smooth segment; halving the plant step (control held at
  // 500 Hz) must show 4th-order convergence of the terminal state.
  ScenarioConfig conv = experiment_preset("exp1");
  conv.op.p_hat0 = conv.op.p_true;
  conv.env.wall_offset = -100.0;
  conv.duration = 4.0;
  auto terminal = [&](int substeps) {
    conv.substeps = substeps;
    const TraceLog log = run_scenario(conv);
    const TraceRecord& r = log.records.back();
    Eigen::Matrix<double, 8, 1> y;
    y << r.q_m, r.v_m, r.q_s, r.v_s;
    return y;
  };
  const auto y1 = terminal(1);
  const auto y2 = terminal(2);
  const auto y4 = terminal(4);
  const double ratio = (y1 - y2).norm() / (y2 - y4).norm();
  const bool order_ok = ratio > 8.0 && ratio < 32.0;

  const bool pass = deterministic && order_ok;
  std::ostringstream d;
  d << "bitwise " << (deterministic ? "identical" : "DIFFERENT")
    << ", halving ratio " << ratio;
  report(8, "determinism / convergence", pass, d.str(), timer.elapsed());
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  if (g_failures == 0) {
    std::printf("acceptance: all 8 criteria PASS\n");
    return 0;
  }
  std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return 1;
}
