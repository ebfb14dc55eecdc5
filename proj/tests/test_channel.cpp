#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "teleop/channel.hpp"
#include "teleop/trace.hpp"

using namespace teleop;

namespace {

ChannelConfig exp_cfg(double kp, double kf, double lambda, double a, double c,
                      double delay = 0.0) {
  ChannelConfig cfg;
  cfg.kappa_p = kp;
  cfg.kappa_f = kf;
  cfg.lambda = Vec2::Constant(lambda);
  cfg.a_gain = Vec2::Constant(a);
  cfg.c_filter = Vec2::Constant(c);
  cfg.delay_T = delay;
  return cfg;
}

}  // namespace

TEST_CASE("filter: a matched input is a fixed point") {
  FilterState fs;
  fs.value = Vec2(0.4, -0.2);
  const FilterState out = filter_step(fs, fs.value, Vec2(35, 35), 0.002);
  CHECK((out.value - fs.value).norm() == 0.0);
}

TEST_CASE("filter: 63.2% rise after one time constant at C = 35") {
  const double c = 35.0;
  const double dt = 0.002;
  FilterState fs;  // starts at zero, step input of 1
  const int n = static_cast<int>(std::lround(1.0 / c / dt));  // ~ 1/C seconds
  for (int k = 0; k < n; ++k) {
    fs = filter_step(fs, Vec2::Ones(), Vec2::Constant(c), dt);
  }
  const double expect = 1.0 - std::exp(-c * n * dt);
  CHECK(fs.value.x() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(fs.value.x() == doctest::Approx(0.632).epsilon(5e-3));
}

TEST_CASE("filter: ramp input tracks with lag 1/C") {
  const double c = 20.0;
  const double dt = 0.001;
  const double slope = 0.3;
  // With the zero-order-hold input the exact steady-state lag is
  // dt / (1 - e^{-c dt}) = 1/c + dt/2 + O(dt^2).
  const double lag = dt / (1.0 - std::exp(-c * dt));
  CHECK(lag == doctest::Approx(1.0 / c).epsilon(0.02));

  FilterState fs;
  double worst = 0.0;
  for (int k = 0; k < 4000; ++k) {
    const double t = k * dt;
    fs = filter_step(fs, Vec2::Constant(slope * t), Vec2::Constant(c), dt);
    if (t > 1.0) {
      const double expect = slope * (t + dt - lag);
      worst = std::max(worst, std::abs(fs.value.x() - expect));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("delay line: depth, zero history, exact transport") {
  const int depth = 40;  // 80 ms at 2 ms
  ChannelConfig cfg = exp_cfg(1.5, 500, 1.5, 40e-6, 35, 0.080);
  CHECK(cfg.delay_steps(0.002) == depth);

  DelayLine line(depth);
  for (int k = 0; k < 200; ++k) {
    line.push(Vec2::Constant(k));
    const Vec2 got = line.tap();
    const double expect = (k < depth) ? 0.0 : k - depth;
    CHECK(got.x() == doctest::Approx(expect));
  }
}

TEST_CASE("delay rejects a non-multiple of dt") {
  ChannelConfig cfg = exp_cfg(1, 300, 2, 60e-6, 35, 0.0807);
  CHECK_THROWS_AS(cfg.delay_steps(0.002), std::invalid_argument);
}

TEST_CASE("desired velocities: all-zero signals give zero commands") {
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  const DesiredVelocities dv = desired_velocities({}, {}, {}, {}, cfg);
  CHECK(dv.v_md.norm() == 0.0);
  CHECK(dv.v_sd.norm() == 0.0);
  CHECK(dv.dv_md.norm() == 0.0);
  CHECK(dv.dv_sd.norm() == 0.0);
}

TEST_CASE("desired velocities: kappa_p = 1 pass-through") {
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  SideSignals slave;
  slave.v_filt = Vec2(0.12, -0.05);
  slave.p_filt = Vec2(0.3, 0.2);
  LocalSignals master_local;
  master_local.p = slave.p_filt;  // positions matched
  const DesiredVelocities dv =
      desired_velocities({}, master_local, slave, {}, cfg);
  CHECK((dv.v_md - slave.v_filt).norm() < 1e-15);
}

TEST_CASE("desired velocities: exp2 scalings match the term-wise oracle") {
  const auto cfg = exp_cfg(4, 800, 2, 100e-6, 35);
  oracle::Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    SideSignals m;
    SideSignals s;
    LocalSignals ml;
    LocalSignals sl;
    auto r2 = [&rng]() { return Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)); };
    m.v_filt = r2();
    m.dv_filt = r2();
    m.p_filt = r2();
    m.dp_filt = r2();
    m.f_tilde = 10 * r2();
    m.df_tilde = 10 * r2();
    s.v_filt = r2();
    s.dv_filt = r2();
    s.p_filt = r2();
    s.dp_filt = r2();
    s.f_tilde = 1000 * r2();
    s.df_tilde = 1000 * r2();
    ml.p = r2();
    ml.v = r2();
    sl.p = r2();
    sl.v = r2();

    const DesiredVelocities dv = desired_velocities(m, ml, s, sl, cfg);

    // term-wise scalar assembly
    for (int ax = 0; ax < 2; ++ax) {
      const double kp = 4.0;
      const double kf = 800.0;
      const double L = 2.0;
      const double A = 100e-6;
      const double v_md =
          (s.v_filt[ax] + L * (s.p_filt[ax] - kp * ml.p[ax]) -
           A * (s.f_tilde[ax] + (kf - kp) * m.f_tilde[ax])) /
          kp;
      const double v_sd = kp * m.v_filt[ax] -
                          L * (sl.p[ax] - kp * m.p_filt[ax]) -
                          A * kf * m.f_tilde[ax];
      CHECK(dv.v_md[ax] == doctest::Approx(v_md).epsilon(1e-13));
      CHECK(dv.v_sd[ax] == doctest::Approx(v_sd).epsilon(1e-13));
      const double dv_md =
          (s.dv_filt[ax] + L * (s.dp_filt[ax] - kp * ml.v[ax]) -
           A * (s.df_tilde[ax] + (kf - kp) * m.df_tilde[ax])) /
          kp;
      const double dv_sd = kp * m.dv_filt[ax] -
                           L * (sl.v[ax] - kp * m.dp_filt[ax]) -
                           A * kf * m.df_tilde[ax];
      CHECK(dv.dv_md[ax] == doctest::Approx(dv_md).epsilon(1e-13));
      CHECK(dv.dv_sd[ax] == doctest::Approx(dv_sd).epsilon(1e-13));
    }
  }
}

TEST_CASE("delayed law with T = 0 is bitwise equal to the undelayed law") {
  const auto cfg = exp_cfg(1.5, 500, 1.5, 40e-6, 35, 0.0);
  oracle::Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    SideSignals m;
    SideSignals s;
    LocalSignals ml;
    LocalSignals sl;
    auto r2 = [&rng]() { return Vec2(rng.uniform(-2, 2), rng.uniform(-2, 2)); };
    m.v_filt = r2();
    m.f_tilde = r2();
    s.p_filt = r2();
    s.f_tilde = r2();
    ml.p = r2();
    sl.p = r2();
    const DesiredVelocities a = desired_velocities(m, ml, s, sl, cfg);
    const DesiredVelocities b = desired_velocities_delayed(m, ml, s, sl, cfg);
    CHECK(a.v_md == b.v_md);
    CHECK(a.v_sd == b.v_sd);
    CHECK(a.dv_md == b.dv_md);
    CHECK(a.dv_sd == b.dv_sd);
  }
}

TEST_CASE("channel state: a remote velocity step arrives exactly delay_steps "
          "later") {
  const double dt = 0.002;
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35, 0.080);
  ChannelState ch(cfg, dt);
  ch.engage(Vec2::Zero(), Vec2::Zero());

  int first_nonzero = -1;
  for (int k = 0; k < 120; ++k) {
    // slave velocity steps at k = 0; master side stays quiet
    ch.publish_slave(Vec2(1.0, 0.0), Vec2::Zero(), Vec2::Zero());
    const auto feed = ch.master_feed(Vec2::Zero());
    if (first_nonzero < 0 && feed.v_md_base.norm() > 0.0) first_nonzero = k;
    ch.publish_master(Vec2::Zero(), Vec2::Zero(), Vec2::Zero());
    ch.advance_positions(Vec2::Zero(), Vec2(1.0, 0.0));
  }
  CHECK(first_nonzero == 40);
}

TEST_CASE("tracking metrics: perfectly scaled trajectories vanish") {
  const auto cfg = exp_cfg(4, 800, 2, 100e-6, 35);
  TraceLog log;
  log.dt = 0.002;
  log.p_dim = 0;
  for (int k = 0; k < 100; ++k) {
    TraceRecord r;
    r.t = k * log.dt;
    r.v_m = Vec2(0.1, -0.05);
    r.v_s = 4.0 * r.v_m;
    r.p_m = Vec2(0.1, -0.05) * r.t;
    r.p_s = 4.0 * r.p_m;
    r.p_hat.resize(0);
    log.records.push_back(r);
  }
  const TrackingMetrics m = tracking_metrics(log, cfg);
  CHECK(m.max_xi_v == 0.0);
  CHECK(m.max_xi_p == 0.0);
  CHECK(m.l2_xi_v.back() == 0.0);
  for (const auto& z : m.z) CHECK(z.norm() == 0.0);
}

TEST_CASE("tracking metrics: constant offset integrates linearly") {
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  TraceLog log;
  log.dt = 0.01;
  log.p_dim = 0;
  const Vec2 offset(0.02, 0.0);
  const int n = 501;
  for (int k = 0; k < n; ++k) {
    TraceRecord r;
    r.t = k * log.dt;
    r.p_s = offset;  // p_m stays zero
    r.p_hat.resize(0);
    log.records.push_back(r);
  }
  const TrackingMetrics m = tracking_metrics(log, cfg);
  CHECK(m.max_xi_p == doctest::Approx(offset.norm()));
  const double T = (n - 1) * log.dt;
  CHECK(m.l2_xi_p.back() ==
        doctest::Approx(offset.squaredNorm() * T).epsilon(1e-12));
  // d/dt xi_p = xi_v within one-step differencing error (both zero here)
  CHECK(m.l2_xi_v.back() == 0.0);
}

TEST_CASE("tracking metrics: decaying error integral matches closed form") {
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  TraceLog log;
  log.dt = 0.001;
  log.p_dim = 0;
  const double a = 2.0;  // |xi_v| = e^{-a t}
  const int n = 8001;
  for (int k = 0; k < n; ++k) {
    TraceRecord r;
    r.t = k * log.dt;
    r.v_m = Vec2(std::exp(-a * r.t), 0.0);
    r.p_hat.resize(0);
    log.records.push_back(r);
  }
  const TrackingMetrics m = tracking_metrics(log, cfg);
  // integral of e^{-2 a t} = (1 - e^{-2 a T}) / (2 a) -> 1/(2a)
  CHECK(m.l2_xi_v.back() == doctest::Approx(1.0 / (2.0 * a)).epsilon(0.01));
}

TEST_CASE("metrics: d/dt xi_p equals xi_v within one-step differencing") {
  const auto cfg = exp_cfg(2, 300, 2, 60e-6, 35);
  TraceLog log;
  log.dt = 0.002;
  log.p_dim = 0;
  Vec2 pm = Vec2::Zero();
  Vec2 ps = Vec2::Zero();
  for (int k = 0; k < 400; ++k) {
    const double t = k * log.dt;
    TraceRecord r;
    r.t = t;
    r.v_m = Vec2(std::sin(t), 0.1 * std::cos(2 * t));
    r.v_s = Vec2(0.3 * std::cos(t), -0.2 * std::sin(t));
    r.p_m = pm;
    r.p_s = ps;
    r.p_hat.resize(0);
    log.records.push_back(r);
    pm += log.dt * r.v_m;  // forward-Euler positions, like the channel
    ps += log.dt * r.v_s;
  }
  const TrackingMetrics m = tracking_metrics(log, cfg);
  for (std::size_t k = 0; k + 1 < m.xi_p.size(); ++k) {
    const Vec2 fd = (m.xi_p[k + 1] - m.xi_p[k]) / log.dt;
    CHECK((fd - m.xi_v[k]).norm() < 1e-12);
  }
}

TEST_CASE("transparency: signals generated from the law fit exactly") {
  // Build f~_m from the transparency relation with zero residual and check
  // the regression recovers mass and damping to 1e-9.
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  const double mass = cfg.kappa_p / (cfg.kappa_f * 60e-6 * 35.0);
  const double damping = mass * 2.0;

  TraceLog log;
  log.dt = 0.002;
  log.p_dim = 0;
  FilterState vf;  // replicate the reconstruction filter
  for (int k = 0; k < 5000; ++k) {
    const double t = k * log.dt;
    TraceRecord r;
    r.t = t;
    r.v_m = Vec2(0.05 * std::sin(2 * M_PI * 1.0 * t),
                 0.03 * std::cos(2 * M_PI * 0.7 * t));
    if (k == 0) {
      vf.value = r.v_m;
    } else {
      vf = filter_step(vf, r.v_m, cfg.c_filter, log.dt);
    }
    const Vec2 dvf = cfg.c_filter.cwiseProduct(r.v_m - vf.value);
    r.f_tilde_s = Vec2::Zero();
    r.f_tilde_m = -(mass * dvf + damping * vf.value);
    r.p_hat.resize(0);
    log.records.push_back(r);
  }
  const TransparencyMetrics tm =
      transparency_metrics(log, cfg, 0.0, 10.0 - 1e-9);
  for (int ax = 0; ax < 2; ++ax) {
    CHECK(tm.mass_fit[ax] == doctest::Approx(mass).epsilon(1e-9));
    CHECK(tm.damping_fit[ax] == doctest::Approx(damping).epsilon(1e-9));
  }
}

TEST_CASE("transparency: exp1 predicted virtual mass is about 1.587 kg") {
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  TraceLog log;
  log.dt = 0.002;
  log.p_dim = 0;
  for (int k = 0; k < 100; ++k) {
    TraceRecord r;
    r.t = k * log.dt;
    r.v_m = Vec2(std::sin(r.t), std::cos(r.t));
    r.p_hat.resize(0);
    log.records.push_back(r);
  }
  const TransparencyMetrics tm = transparency_metrics(log, cfg, 0.0, 1.0);
  CHECK(tm.mass_predicted[0] == doctest::Approx(1.587).epsilon(1e-3));
  CHECK(tm.damping_predicted[0] == doctest::Approx(2.0 * 1.587).epsilon(1e-3));
}

TEST_CASE("transparency: rank-deficient excitation is rejected") {
  const auto cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  TraceLog log;
  log.dt = 0.002;
  log.p_dim = 0;
  for (int k = 0; k < 200; ++k) {
    TraceRecord r;
    r.t = k * log.dt;
    r.v_m = Vec2::Zero();  // no excitation at all
    r.p_hat.resize(0);
    log.records.push_back(r);
  }
  CHECK_THROWS_AS(transparency_metrics(log, cfg, 0.0, 0.4),
                  std::runtime_error);
}

TEST_CASE("channel config positivity is enforced") {
  ChannelConfig cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  cfg.kappa_p = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  cfg.lambda[1] = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = exp_cfg(1, 300, 2, 60e-6, 35);
  cfg.delay_T = -0.01;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
