#include <doctest.h>

#include <sstream>

#include "teleop/config.hpp"
#include "teleop/sim.hpp"
#include "teleop/trace.hpp"

using namespace teleop;

TEST_CASE("zero-duration scenario gives an empty log with header only") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.duration = 0.0;
  const TraceLog log = run_scenario(cfg);
  CHECK(log.empty());

  std::ostringstream os;
  write_trace_csv(os, log);
  const std::string text = os.str();
  CHECK(text.rfind("# teleop-trace v1\n", 0) == 0);
  // marker line + header line, nothing else
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("presets carry the published channel parameters") {
  const ScenarioConfig e1 = experiment_preset("exp1");
  CHECK(e1.channel.kappa_p == 1.0);
  CHECK(e1.channel.kappa_f == 300.0);
  CHECK(e1.channel.lambda[0] == 2.0);
  CHECK(e1.channel.a_gain[0] == doctest::Approx(60e-6));
  CHECK(e1.channel.c_filter[0] == 35.0);
  CHECK(e1.channel.delay_T == 0.0);

  const ScenarioConfig e2 = experiment_preset("exp2");
  CHECK(e2.channel.kappa_p == 4.0);
  CHECK(e2.channel.kappa_f == 800.0);
  CHECK(e2.channel.a_gain[0] == doctest::Approx(100e-6));

  const ScenarioConfig e3 = experiment_preset("exp3");
  CHECK(e3.channel.kappa_p == 1.5);
  CHECK(e3.channel.kappa_f == 500.0);
  CHECK(e3.channel.lambda[0] == 1.5);
  CHECK(e3.channel.a_gain[0] == doctest::Approx(40e-6));
  CHECK(e3.channel.delay_T == doctest::Approx(0.080));
  CHECK(e3.channel.delay_steps(e3.dt) == 40);

  CHECK_THROWS_AS(experiment_preset("exp9"), std::invalid_argument);
}

TEST_CASE("free-space equilibrium: xi_p stays below 1e-6 m throughout") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.op.p_true.setZero();
  cfg.op.p_hat0.setZero();
  cfg.env.wall_offset = -100.0;  // out of reach
  cfg.duration = 10.0;
  const TraceLog log = run_scenario(cfg);
  double worst = 0.0;
  for (const auto& r : log.records) worst = std::max(worst, r.xi_p.norm());
  CHECK(worst < 1e-6);
}

TEST_CASE("determinism: identical configs give identical logs") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.duration = 3.0;
  const TraceLog a = run_scenario(cfg);
  const TraceLog b = run_scenario(cfg);
  std::ostringstream sa;
  std::ostringstream sb;
  write_trace_csv(sa, a);
  write_trace_csv(sb, b);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("engagement semantics: the slave holds still until the button") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.engage_time = 3.0;
  cfg.duration = 5.0;
  // move the intent early so only engagement gates the coupling
  cfg.op.basis[0].t0 = 0.5;
  cfg.op.basis[0].t1 = 1.5;
  const TraceLog log = run_scenario(cfg);
  for (const auto& r : log.records) {
    if (r.t < 3.0) {
      CHECK((r.q_s - cfg.slave.q0).norm() < 1e-9);
      CHECK(r.p_m.norm() == 0.0);  // positions zeroed until engagement
      CHECK(r.p_s.norm() == 0.0);
    }
  }
  // after engagement the slave starts following
  CHECK((log.records.back().q_s - cfg.slave.q0).norm() > 1e-4);
}

TEST_CASE("monitors: equilibrium run shows zero violations within 1e-12") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.op.p_true.setZero();
  cfg.op.p_hat0.setZero();
  cfg.env.wall_offset = -100.0;
  cfg.duration = 5.0;
  const TraceLog log = run_scenario(cfg);
  const MonitorReport rep = monitors(log, cfg);
  CHECK(rep.max_nu_m_violation < 1e-12);
  CHECK(rep.max_nu_o2_violation < 1e-12);
  CHECK(rep.p_g_bound_ok);
  for (const auto& s : rep.p_g_segments) {
    CHECK(std::abs(s.integral) < 1e-12);
  }
}

TEST_CASE("run summary reports scaling, delay steps and force ratios") {
  ScenarioConfig cfg = experiment_preset("exp3");
  cfg.duration = 1.0;
  const TraceLog log = run_scenario(cfg);
  const RunSummary s = summarize(log, cfg);
  CHECK(s.delay_steps == 40);
  CHECK(s.kappa_p == 1.5);
  CHECK(s.kappa_f == 500.0);
  CHECK(log.size() == 500);  // 500 rows per simulated second
}

TEST_CASE("scenario validation rejects inconsistent setups") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.dt = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = experiment_preset("exp1");
  cfg.channel.delay_T = 0.0031;  // not a multiple of 2 ms
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = experiment_preset("exp1");
  cfg.master.q0 = Vec2(3.0, 0.0);  // outside the workspace box
  CHECK_THROWS_AS(cfg.validate(), std::out_of_range);

  cfg = experiment_preset("exp1");
  cfg.op.p_hat0 = VecX::Constant(4, 100.0);  // outside bounds
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = experiment_preset("exp1");
  cfg.duration = 0.003;  // not a multiple of dt
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("numerical blow-up aborts with the failing step index") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.duration = 5.0;
  // A destabilizing master velocity gain flips the feedback sign.
  cfg.master.k_m = Vec2(-500.0, -500.0);
  try {
    run_scenario(cfg);
    // Some sign flips only degrade, so reaching here is acceptable only if
    // the run stayed finite; force a failure if no exception fired but the
    // log is wild.
    FAIL("expected a numerical abort");
  } catch (const NumericalAbort& e) {
    CHECK(e.step() >= 0);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("trace CSV round-trips the log exactly") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.duration = 1.0;
  const TraceLog log = run_scenario(cfg);
  std::ostringstream os;
  write_trace_csv(os, log);
  std::istringstream is(os.str());
  const TraceLog back = read_trace_csv(is);
  REQUIRE(back.size() == log.size());
  CHECK(back.p_dim == log.p_dim);
  for (std::size_t k = 0; k < log.size(); ++k) {
    const auto& a = log.records[k];
    const auto& b = back.records[k];
    CHECK(a.t == b.t);
    CHECK(a.q_m == b.q_m);
    CHECK(a.v_m == b.v_m);
    CHECK(a.p_m == b.p_m);
    CHECK(a.f_hat_m == b.f_hat_m);
    CHECK(a.f_tilde_m == b.f_tilde_m);
    CHECK(a.p_hat == b.p_hat);
    CHECK(a.q_s == b.q_s);
    CHECK(a.v_s == b.v_s);
    CHECK(a.p_s == b.p_s);
    CHECK(a.f_tilde_s == b.f_tilde_s);
    CHECK(a.sigma_f == b.sigma_f);
    CHECK(a.nu_m == b.nu_m);
    CHECK(a.nu_o2 == b.nu_o2);
    CHECK(a.p_g == b.p_g);
    CHECK(a.xi_v == b.xi_v);
    CHECK(a.xi_p == b.xi_p);
  }
}

TEST_CASE("theta_hat stays inside its adaptation bounds along a run") {
  ScenarioConfig cfg = experiment_preset("exp1");
  cfg.slave.theta_hat_exact = false;  // start mid-bounds so adaptation acts
  cfg.slave.rho_o2 = Vec13::Constant(1e-4);
  cfg.duration = 6.0;
  const TraceLog log = run_scenario(cfg);
  CHECK(log.size() == 3000);
  const SlaveBodies bodies = cfg.slave_bodies();
  // re-simulate the controller state through the adaptation clamp contract:
  // the logged run must never have produced an out-of-bounds estimate, which
  // the plant state mirrors at every step.
  // (theta_hat is not logged in the CSV; the clamp is checked through the
  // controller API instead.)
  SlaveController::Gains gains;
  gains.A = cfg.channel.A();
  gains.C = cfg.channel.C();
  gains.K_o2 = cfg.slave.k_o2;
  gains.K_link1 = cfg.slave.k_link1;
  SlaveController sc(cfg.slave_kinematics(), bodies, cfg.gravity_field(),
                     cfg.environment(), gains, cfg.dt, cfg.theta_hat0(),
                     cfg.slave.rho_o2);
  for (int k = 0; k < 500; ++k) {
    sc.filter_force(Vec2(300.0, -200.0));
    sc.control(k * cfg.dt, cfg.slave.q0, Vec2(0.3, -0.2), 1.0,
               Vec2(0.05, -0.05), Vec2::Zero());
    for (int i = 0; i < 13; ++i) {
      CHECK(sc.theta_hat()[i] >= bodies.object2.lower()[i]);
      CHECK(sc.theta_hat()[i] <= bodies.object2.upper()[i]);
    }
  }
}
