#include "teleop/sim.hpp"

#include <cmath>
#include <sstream>

namespace teleop {

namespace {

Vec13 body_theta(const BodySpec& b) {
  Vec13 theta = Vec13::Zero();
  theta[0] = b.mass;
  theta[1] = b.mass * b.com.x();
  theta[2] = b.mass * b.com.y();
  theta[4] = b.ixx;
  theta[7] = b.iyy;
  theta[9] = b.izz;
  return theta;
}

}  // namespace

BodyParams BodySpec::to_params() const {
  const Vec13 theta = body_theta(*this);
  return BodyParams(theta, theta, theta);
}

int ScenarioConfig::steps() const {
  const double n = duration / dt;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
    throw std::invalid_argument("scenario: duration must be a multiple of dt");
  }
  return static_cast<int>(rounded);
}

MasterKinematics ScenarioConfig::master_kinematics() const {
  return MasterKinematics(master.kin);
}

MasterBodies ScenarioConfig::master_bodies() const {
  return MasterBodies{master.b11.to_params(), master.b12.to_params(),
                      master.b21.to_params(), master.b22.to_params(),
                      master.o1.to_params()};
}

OperatorModel ScenarioConfig::operator_model() const {
  OperatorModel m;
  m.M_h = op.m_h.asDiagonal();
  m.D_h = op.d_h.asDiagonal();
  m.K_h = op.k_h.asDiagonal();
  m.basis = ExogenousBasis(op.basis);
  m.p_true = op.p_true;
  m.p_lower = op.p_lower;
  m.p_upper = op.p_upper;
  m.rho = op.rho;
  return m;
}

SlaveKinematics ScenarioConfig::slave_kinematics() const {
  return SlaveKinematics(slave.kin);
}

SlaveBodies ScenarioConfig::slave_bodies() const {
  // Object 2 = link 2 plus the point payload at the tip, both in the O2
  // frame.
  const double r_tip = slave.kin.l2 - slave.kin.d_o2;
  BodySpec obj = slave.link2;
  const double m2 = slave.link2.mass;
  const double mp = slave.payload;
  obj.mass = m2 + mp;
  obj.com = (m2 * slave.link2.com + mp * Vec2(r_tip, 0.0)) / obj.mass;
  obj.iyy = slave.link2.iyy + mp * r_tip * r_tip;
  obj.izz = slave.link2.izz + mp * r_tip * r_tip;

  const Vec13 theta = body_theta(obj);
  BodyParams object2 =
      BodyParams(theta, theta, theta)
          .with_bound_scale(slave.theta_lo_scale, slave.theta_hi_scale,
                            slave.theta_abs_slack);
  return SlaveBodies{slave.link1.to_params(), object2};
}

EnvironmentModel ScenarioConfig::environment() const {
  EnvironmentModel e;
  e.M_e = env.m_e.asDiagonal();
  e.D_e = env.d_e.asDiagonal();
  e.K_e = env.k_e.asDiagonal();
  e.wall.normal = env.wall_normal.normalized();
  e.wall.offset = env.wall_offset;
  e.wall.hysteresis = env.hysteresis;
  return e;
}

GravityField ScenarioConfig::gravity_field() const {
  return GravityField(gravity);
}

Vec13 ScenarioConfig::theta_hat0() const {
  const SlaveBodies b = slave_bodies();
  if (slave.theta_hat_exact) return b.object2.theta();
  return 0.5 * (b.object2.lower() + b.object2.upper());
}

void ScenarioConfig::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("scenario: dt must be positive");
  if (duration < 0.0) {
    throw std::invalid_argument("scenario: duration must be non-negative");
  }
  if (substeps < 1) {
    throw std::invalid_argument("scenario: substeps must be >= 1");
  }
  steps();
  channel.validate();
  channel.delay_steps(dt);

  const MasterKinematics mk = master_kinematics();
  mk.validate();
  mk.check_workspace(master.q0);
  const SlaveKinematics sk = slave_kinematics();
  sk.validate();
  sk.check_workspace(slave.q0);

  operator_model().validate();
  environment().validate();
  gravity_field();

  const OperatorModel om = operator_model();
  if (op.p_hat0.size() != om.basis.dim()) {
    throw std::invalid_argument("scenario: p_hat0 size mismatch");
  }
  for (int i = 0; i < om.basis.dim(); ++i) {
    if (!(op.p_lower[i] <= op.p_hat0[i] && op.p_hat0[i] <= op.p_upper[i])) {
      throw std::invalid_argument("scenario: p_hat0 outside bounds");
    }
  }

  const SlaveBodies sb = slave_bodies();
  const Vec13 th0 = theta_hat0();
  for (int i = 0; i < 13; ++i) {
    if (!(sb.object2.lower()[i] <= th0[i] && th0[i] <= sb.object2.upper()[i])) {
      throw std::invalid_argument("scenario: theta_hat0 outside bounds");
    }
    if (slave.rho_o2[i] <= 0.0) {
      throw std::invalid_argument("scenario: rho_o2 must be positive");
    }
  }
  if (engage_time >= 0.0 && disengage_time >= 0.0 &&
      disengage_time <= engage_time) {
    throw std::invalid_argument("scenario: disengage_time must follow "
                                "engage_time");
  }
}

// --- run_scenario ---------------------------------------------------------------

TraceLog run_scenario(const ScenarioConfig& cfg) {
  return run_scenario(cfg, RecordSink{});
}

TraceLog run_scenario(const ScenarioConfig& cfg, const RecordSink& sink) {
  cfg.validate();

  const MasterKinematics mkin = cfg.master_kinematics();
  const MasterBodies mbodies = cfg.master_bodies();
  const OperatorModel op = cfg.operator_model();
  const SlaveKinematics skin = cfg.slave_kinematics();
  const SlaveBodies sbodies = cfg.slave_bodies();
  const EnvironmentModel env = cfg.environment();
  const GravityField gravity = cfg.gravity_field();

  MasterController::Gains mgains;
  mgains.K_m = cfg.master.k_m.asDiagonal();
  mgains.A = cfg.channel.A();
  mgains.C = cfg.channel.C();
  MasterController mc(mkin, mbodies, op, gravity, mgains, cfg.dt, cfg.op.p_hat0);

  SlaveController::Gains sgains;
  sgains.A = cfg.channel.A();
  sgains.C = cfg.channel.C();
  sgains.K_o2 = cfg.slave.k_o2;
  sgains.K_link1 = cfg.slave.k_link1;
  SlaveController sc(skin, sbodies, gravity, env, sgains, cfg.dt,
                     cfg.theta_hat0(), cfg.slave.rho_o2);

  ChannelState channel(cfg.channel, cfg.dt);

  MasterState ms;
  ms.q = cfg.master.q0;
  ms.p_hat = cfg.op.p_hat0;
  SlaveState ss;
  ss.q = cfg.slave.q0;
  ss.theta_hat_o2 = cfg.theta_hat0();
  ContactSwitch cs;

  Vec2 tau_s_prev = slave_gravity_torque(skin, sbodies, gravity, ss.q);

  TraceLog log;
  log.dt = cfg.dt;
  log.p_dim = op.basis.dim();
  const int n_steps = cfg.steps();
  log.records.reserve(n_steps);

  const double sub_dt = cfg.dt / cfg.substeps;

  for (int k = 0; k < n_steps; ++k) {
    const double t = k * cfg.dt;
    try {

    // Sense.
    const Mat2 J_m = mkin.jacobian(ms.q);
    const Vec2 v_m = J_m * ms.dq;
    const Mat2 J_s = skin.jacobian(ss.q);
    const Vec2 v_s = J_s * ss.dq;
    const Vec2 tip_s = skin.tip_position(ss.q);

    // Contact switching once per period, before any control law.
    cs = contact_switch_update(cs, tip_s, env.wall);

    // Reconstructed slave contact force (previous period's torque is the
    // one still acting).
    const SlavePlantEval sensed =
        slave_plant_eval(skin, sbodies, gravity, env, ss, tau_s_prev,
                         cs.sigma_f);
    const Vec2 f_hat_s = sensed.f_s;

    // Engagement handling (pushbutton semantics).
    const bool want_engaged =
        cfg.engage_time >= 0.0 && t >= cfg.engage_time - 1e-12 &&
        (cfg.disengage_time < 0.0 || t < cfg.disengage_time - 1e-12);
    if (want_engaged && !channel.engaged()) {
      channel.engage(v_m, v_s);
    } else if (!want_engaged && channel.engaged()) {
      channel.disengage();
    }

    // Slave filters + publish toward the master.
    sc.filter_force(f_hat_s);
    channel.publish_slave(v_s, sc.f_tilde(), sc.df_tilde());

    // Master period: channel feed, loop solve, adaptation, torque.
    const ChannelState::MasterFeed mfeed = channel.master_feed(v_m);
    MasterController::ChannelFeed cf;
    cf.v_md_base = mfeed.v_md_base;
    cf.dv_md_base = mfeed.dv_md_base;
    cf.f_m_coupling = mfeed.f_m_coupling;
    const MasterController::Output mo = mc.step(t, ms.q, ms.dq, ms.x_h, cf);

    channel.publish_master(v_m, mo.f_tilde_m, mo.df_tilde_m);

    // Slave period.
    const ChannelState::SlaveFeed sfeed = channel.slave_feed(v_s);
    const SlaveController::Output so =
        sc.control(t, ss.q, ss.dq, cs.sigma_f, sfeed.v_sd, sfeed.dv_sd);

    // Diagnostics under the freshly applied torques.
    const SlavePlantEval now =
        slave_plant_eval(skin, sbodies, gravity, env, ss, so.tau, cs.sigma_f);
    const double p_to2 =
        virtual_power_flow_raw(so.V_to2_r, now.V_to2, so.F_to2_r, now.F_to2);
    const double p_g =
        virtual_power_flow_raw(so.V_g_r, now.V_g, so.F_g_r, now.F_g);

    // Record.
    TraceRecord r;
    r.t = t;
    r.q_m = ms.q;
    r.v_m = v_m;
    r.p_m = channel.p_m();
    r.f_hat_m = mo.f_hat_m;
    r.f_tilde_m = mo.f_tilde_m;
    r.p_hat = mc.p_hat();
    r.q_s = ss.q;
    r.v_s = v_s;
    r.p_s = channel.p_s();
    r.f_tilde_s = sc.f_tilde();
    r.sigma_f = cs.sigma_f;
    r.nu_m = mo.nu_m;
    r.nu_o2 = so.nu_o2;
    r.p_g = p_g;
    r.xi_v = cfg.channel.kappa_p * v_m - v_s;
    r.xi_p = cfg.channel.kappa_p * channel.p_m() - channel.p_s();

    const bool finite =
        r.q_m.allFinite() && r.v_m.allFinite() && r.f_hat_m.allFinite() &&
        r.q_s.allFinite() && r.v_s.allFinite() && r.f_tilde_s.allFinite() &&
        std::isfinite(r.nu_m) && std::isfinite(r.nu_o2);
    if (!finite) {
      TraceRecord last = log.records.empty() ? TraceRecord{} : log.records.back();
      throw NumericalAbort(k, last,
                           "numerical abort at step " + std::to_string(k) +
                               " (t = " + std::to_string(t) + " s)");
    }

    log.records.push_back(r);
    if (sink) sink(r);
    log.diag.nu_m_bound.push_back(mo.nu_bound);
    log.diag.nu_o2_bound.push_back(so.nu_bound);
    log.diag.p_to2.push_back(p_to2);
    log.diag.dv_s_err.push_back(so.v_sr - v_s);
    log.diag.sigma_loop.push_back(mo.sigma_loop);

    // Plant integration with zero-order-hold torques; sigma_f frozen.
    for (int i = 0; i < cfg.substeps; ++i) {
      ms = master_plant_step(mkin, mbodies, op, gravity, ms, mo.tau_m,
                             Vec2::Zero(), t + i * sub_dt, sub_dt);
      ss = slave_plant_step(skin, sbodies, gravity, env, ss, so.tau,
                            cs.sigma_f, sub_dt);
    }
    ms.f_tilde_m = mc.f_tilde();
    ms.p_hat = mc.p_hat();
    ss.f_tilde_s = sc.f_tilde();
    ss.theta_hat_o2 = sc.theta_hat();

    channel.advance_positions(v_m, v_s);
    tau_s_prev = so.tau;

    if (!ms.q.allFinite() || !ms.dq.allFinite() || !ss.q.allFinite() ||
        !ss.dq.allFinite()) {
      throw NumericalAbort(k, log.records.back(),
                           "numerical abort during integration at step " +
                               std::to_string(k));
    }

    } catch (const NumericalAbort&) {
      throw;
    } catch (const std::exception& e) {
      // Any stepping failure (singular Jacobian, non-finite intermediate
      // state, loop contraction loss) aborts the run with the step index.
      const TraceRecord last =
          log.records.empty() ? TraceRecord{} : log.records.back();
      throw NumericalAbort(k, last,
                           "numerical abort at step " + std::to_string(k) +
                               " (t = " + std::to_string(t) +
                               " s): " + e.what());
    }
  }
  return log;
}

// --- Presets -----------------------------------------------------------------------

ScenarioConfig experiment_preset(const std::string& name) {
  ScenarioConfig cfg;

  // Scripted approach-press-slide-retract intent: one normal-axis press
  // profile and one tangential slide profile.
  BasisComponent press;
  press.kind = BasisComponent::Kind::trapezoid;
  press.t0 = 2.0;
  press.t1 = 4.5;
  press.t2 = 13.0;
  press.t3 = 15.5;
  BasisComponent slide;
  slide.kind = BasisComponent::Kind::trapezoid;
  slide.t0 = 6.0;
  slide.t1 = 8.0;
  slide.t2 = 11.0;
  slide.t3 = 13.0;
  cfg.op.basis = {press, slide};

  double press_amp = 0.0;
  double slide_amp = 0.0;
  if (name == "exp1") {
    cfg.channel.kappa_p = 1.0;
    cfg.channel.kappa_f = 300.0;
    cfg.channel.lambda = Vec2(2.0, 2.0);
    cfg.channel.a_gain = Vec2(60e-6, 60e-6);
    cfg.channel.c_filter = Vec2(35.0, 35.0);
    cfg.channel.delay_T = 0.0;
    press_amp = 4.0;
    slide_amp = 6.0;
  } else if (name == "exp2") {
    cfg.channel.kappa_p = 4.0;
    cfg.channel.kappa_f = 800.0;
    cfg.channel.lambda = Vec2(2.0, 2.0);
    cfg.channel.a_gain = Vec2(100e-6, 100e-6);
    cfg.channel.c_filter = Vec2(35.0, 35.0);
    cfg.channel.delay_T = 0.0;
    press_amp = 2.0;
    slide_amp = 3.0;
  } else if (name == "exp3") {
    cfg.channel.kappa_p = 1.5;
    cfg.channel.kappa_f = 500.0;
    cfg.channel.lambda = Vec2(1.5, 1.5);
    cfg.channel.a_gain = Vec2(40e-6, 40e-6);
    cfg.channel.c_filter = Vec2(35.0, 35.0);
    cfg.channel.delay_T = 0.080;  // 80 ms one-way
    press_amp = 3.0;
    slide_amp = 4.0;
  } else {
    throw std::invalid_argument("unknown preset '" + name +
                                "' (expected exp1, exp2 or exp3)");
  }

  // The intent force enters the operator model with a minus sign, so a +y
  // weight presses the tip down and a -x weight slides it toward +x. The estimate starts at zero: the
  // operator's intent is unknown and picked up by the adaptation.
  cfg.op.p_true = (VecX(4) << 0.0, press_amp, -slide_amp, 0.0).finished();
  cfg.op.p_hat0 = VecX::Zero(4);
  cfg.op.p_lower = cfg.op.p_true.array() - 20.0;
  cfg.op.p_upper = cfg.op.p_true.array() + 20.0;
  cfg.op.rho = VecX::Constant(4, 50.0);

  cfg.duration = 20.0;
  cfg.dt = 0.002;
  cfg.engage_time = 0.5;

  // Wall 3 cm below the slave's initial tip height.
  const SlaveKinematics skin(cfg.slave.kin);
  const Vec2 tip0 = skin.tip_position(cfg.slave.q0);
  cfg.env.wall_normal = Vec2(0.0, 1.0);
  cfg.env.wall_offset = tip0.y() - 0.03;

  return cfg;
}

// --- Monitors ----------------------------------------------------------------------

MonitorReport monitors(const TraceLog& log, const ScenarioConfig& cfg) {
  MonitorReport rep;
  const std::size_t n = log.records.size();
  if (n < 2) return rep;

  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dnu_m =
        (log.records[k + 1].nu_m - log.records[k].nu_m) / log.dt;
    rep.max_nu_m_violation =
        std::max(rep.max_nu_m_violation, dnu_m - log.diag.nu_m_bound[k]);

    const double dnu_o2 =
        (log.records[k + 1].nu_o2 - log.records[k].nu_o2) / log.dt;
    const double bound_o2 = log.diag.nu_o2_bound[k] + log.diag.p_to2[k] -
                            log.records[k].p_g;
    rep.max_nu_o2_violation =
        std::max(rep.max_nu_o2_violation, dnu_o2 - bound_o2);
  }
  rep.max_nu_m_violation = std::max(rep.max_nu_m_violation, 0.0);
  rep.max_nu_o2_violation = std::max(rep.max_nu_o2_violation, 0.0);

  // Integral lower bound on the contact virtual power flow, per
  // constant-sigma segment. The
  // continuous-time integral telescopes the projected error energy
  // E = 1/2 sigma (P dV)^T M_e (P dV); the per-step mismatch between the
  // trapezoid increment and the energy increment is the integration error
  // and becomes the tolerance of the bound check.
  const EnvironmentModel env = cfg.environment();
  const Mat2 MeP = env.M_e * env.normal_projector();
  std::size_t seg_begin = 0;
  auto energy = [&](std::size_t k, double sigma) {
    const Vec2 pe = env.normal_projector() * log.diag.dv_s_err[k];
    return 0.5 * sigma * pe.dot(env.M_e * pe);
  };
  auto close_segment = [&](std::size_t seg_end) {
    MonitorReport::Segment s;
    s.begin = seg_begin;
    s.end = seg_end;
    s.sigma = log.records[seg_begin].sigma_f;
    const Vec2 e0 = log.diag.dv_s_err[seg_begin];
    s.bound = -0.5 * s.sigma * e0.dot(MeP * e0);
    double integral = 0.0;
    double residual = 0.0;
    bool ok = true;
    for (std::size_t k = seg_begin; k + 1 < seg_end; ++k) {
      const double inc =
          0.5 * (log.records[k].p_g + log.records[k + 1].p_g) * log.dt;
      integral += inc;
      residual += std::abs(inc - (energy(k + 1, s.sigma) - energy(k, s.sigma)));
      if (integral < s.bound - residual - 1e-9) ok = false;
    }
    s.integral = integral;
    s.identity_residual = residual;
    s.ok = ok;
    rep.p_g_segments.push_back(s);
    rep.p_g_bound_ok = rep.p_g_bound_ok && ok;
  };
  for (std::size_t k = 1; k < n; ++k) {
    if (log.records[k].sigma_f != log.records[seg_begin].sigma_f) {
      close_segment(k);
      seg_begin = k;
    }
  }
  close_segment(n);
  return rep;
}

RunSummary summarize(const TraceLog& log, const ScenarioConfig& cfg) {
  RunSummary s;
  s.kappa_p = cfg.channel.kappa_p;
  s.kappa_f = cfg.channel.kappa_f;
  s.delay_steps = cfg.channel.delay_steps(cfg.dt);
  double ratio_sum = 0.0;
  for (const TraceRecord& r : log.records) {
    s.max_xi_p = std::max(s.max_xi_p, r.xi_p.norm());
    s.max_xi_v = std::max(s.max_xi_v, r.xi_v.norm());
    if (r.sigma_f > 0.5) {
      const double ratio = (cfg.channel.kappa_f * r.f_tilde_m + r.f_tilde_s).norm() /
                           std::max(r.f_tilde_s.norm(), 1.0);
      s.force_ratio_max = std::max(s.force_ratio_max, ratio);
      ratio_sum += ratio;
      ++s.contact_samples;
    }
  }
  if (s.contact_samples > 0) {
    s.force_ratio_mean = ratio_sum / s.contact_samples;
  }
  s.monitor = monitors(log, cfg);
  return s;
}

std::string format_summary(const RunSummary& s) {
  std::ostringstream os;
  os << "kappa_p=" << s.kappa_p << " kappa_f=" << s.kappa_f
     << " delay_steps=" << s.delay_steps << "\n";
  os << "max |xi_p| = " << s.max_xi_p << " m\n";
  os << "max |xi_v| = " << s.max_xi_v << " m/s\n";
  if (s.contact_samples > 0) {
    os << "force ratio |kf f~_m + f~_s| / max(|f~_s|, 1): max = "
       << s.force_ratio_max << ", mean = " << s.force_ratio_mean << " over "
       << s.contact_samples << " contact samples\n";
  } else {
    os << "no constrained-motion samples\n";
  }
  os << "monitor: max nu_m violation = " << s.monitor.max_nu_m_violation
     << ", max nu_O2 violation = " << s.monitor.max_nu_o2_violation
     << ", p_G segments ok = " << (s.monitor.p_g_bound_ok ? "yes" : "no")
     << "\n";
  return os.str();
}

}  // namespace teleop
