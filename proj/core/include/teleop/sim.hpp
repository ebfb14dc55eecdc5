#pragma once

// Scenario orchestration: deterministic fixed-step co-simulation of master,
// operator, channel, slave and environment, plus the experiment presets and
// the stability monitors.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "teleop/channel.hpp"
#include "teleop/master.hpp"
#include "teleop/slave.hpp"
#include "teleop/trace.hpp"

namespace teleop {

// Plain-scalar body description used by configs; inertia about the body
// frame origin with zero products.
struct BodySpec {
  double mass = 1.0;
  Vec2 com = Vec2::Zero();
  double ixx = 0.0;
  double iyy = 0.0;
  double izz = 1e-3;

  BodyParams to_params() const;
};

struct MasterConfig {
  MasterKinematics::Params kin;
  BodySpec b11{0.20, Vec2(0.10, 0.0), 0.0, 0.0, 8.0e-4};
  BodySpec b12{0.15, Vec2(0.12, 0.0), 0.0, 0.0, 1.2e-3};
  BodySpec b21{0.05, Vec2(0.04, 0.0), 0.0, 0.0, 4.0e-5};
  BodySpec b22{0.08, Vec2(0.10, 0.0), 0.0, 0.0, 3.2e-4};
  BodySpec o1{0.10, Vec2(0.05, 0.0), 0.0, 0.0, 1.5e-4};
  Vec2 k_m = Vec2(200.0, 200.0);  // K_m diagonal
  Vec2 q0 = Vec2::Zero();
};

struct OperatorConfig {
  Vec2 m_h = Vec2(0.8, 0.8);
  Vec2 d_h = Vec2(10.0, 10.0);
  Vec2 k_h = Vec2(100.0, 100.0);
  // default basis: identity, sin(w0 t), cos(w0 t) blocks at 1 Hz (p has 6
  // entries); presets replace this with the scripted task profiles.
  std::vector<BasisComponent> basis = ExogenousBasis::harmonic(1.0).components();
  VecX p_true = VecX::Zero(6);
  VecX p_lower = VecX::Constant(6, -20.0);
  VecX p_upper = VecX::Constant(6, 20.0);
  VecX p_hat0 = VecX::Zero(6);
  VecX rho = VecX::Constant(6, 50.0);
};

struct SlaveConfig {
  SlaveKinematics::Params kin;
  BodySpec link1{120.0, Vec2(0.8, 0.0), 0.0, 0.0, 110.0};
  BodySpec link2{80.0, Vec2(0.0, 0.0), 0.0, 0.0, 75.0};  // in the O2 frame
  double payload = 475.0;  // point mass at the tip
  Vec6 k_o2 = (Vec6() << 2e4, 2e4, 2e4, 2e4, 2e4, 2e4).finished();
  Vec6 k_link1 = (Vec6() << 2e4, 2e4, 2e4, 2e4, 2e4, 2e4).finished();
  Vec2 q0 = Vec2(0.5235987755982988, -1.308996938995747);
  double theta_lo_scale = 0.7;
  double theta_hi_scale = 1.3;
  double theta_abs_slack = 1.0;
  Vec13 rho_o2 = Vec13::Constant(1e-6);
  bool theta_hat_exact = true;
};

struct EnvironmentConfig {
  Vec2 m_e = Vec2(10.0, 10.0);
  Vec2 d_e = Vec2(1e3, 1e3);
  Vec2 k_e = Vec2(1e5, 1e5);
  Vec2 wall_normal = Vec2(0.0, 1.0);
  double wall_offset = -1.0;  // n^T p on the surface
  double hysteresis = 5e-4;
};

struct ScenarioConfig {
  MasterConfig master;
  OperatorConfig op;
  SlaveConfig slave;
  EnvironmentConfig env;
  ChannelConfig channel;
  Vec3 gravity = Vec3(0.0, -9.81, 0.0);
  double duration = 20.0;
  double dt = 0.002;  // 500 Hz control rate
  int substeps = 1;   // plant integration substeps per control period
  double engage_time = 0.5;
  double disengage_time = -1.0;  // < 0: never
  std::int64_t seed = 0;
  bool stream_log = false;  // flush records as they complete (long runs)

  void validate() const;
  int steps() const;

  MasterKinematics master_kinematics() const;
  MasterBodies master_bodies() const;
  OperatorModel operator_model() const;
  SlaveKinematics slave_kinematics() const;
  SlaveBodies slave_bodies() const;  // payload folded into Object 2
  EnvironmentModel environment() const;
  GravityField gravity_field() const;
  Vec13 theta_hat0() const;
};

// Thrown when any state goes non-finite; carries the failing step and the
// last finite record.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(int step, TraceRecord last, const std::string& what)
      : std::runtime_error(what), step_(step), last_(std::move(last)) {}
  int step() const { return step_; }
  const TraceRecord& last_record() const { return last_; }

 private:
  int step_;
  TraceRecord last_;
};

// Deterministic closed-loop run; identical configs give bitwise-identical
// logs. Step order per control period: sense -> contact switch -> filters ->
// channel -> loop solver -> adaptation -> control laws -> plant integration.
// The optional sink sees every record as it is appended (streaming flush).
using RecordSink = std::function<void(const TraceRecord&)>;
TraceLog run_scenario(const ScenarioConfig& cfg);
TraceLog run_scenario(const ScenarioConfig& cfg, const RecordSink& sink);

// Table-style experiment presets: exp1 (kp=1, kf=300), exp2 (kp=4, kf=800),
// exp3 (kp=1.5, kf=500, 80 ms one-way delay), each with the scripted
// approach-press-slide-retract task.
ScenarioConfig experiment_preset(const std::string& name);

struct MonitorReport {
  // max over steps of max(0, dnu/dt - bound)
  double max_nu_m_violation = 0.0;
  double max_nu_o2_violation = 0.0;

  // Per constant-sigma segment: the trapezoidal integral of p_G, its
  // analytic lower bound -1/2 sigma dV(0)^T M_e dV(0), and the accumulated
  // residual of the telescoping identity p_G = d/dt[1/2 (P dV)^T M_e (P dV)]
  // which quantifies the integration error and serves as the tolerance.
  struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    double sigma = 0.0;
    double integral = 0.0;
    double bound = 0.0;
    double identity_residual = 0.0;
    bool ok = true;
  };
  std::vector<Segment> p_g_segments;
  bool p_g_bound_ok = true;
};

// Decrease-condition and virtual-power-flow monitors over a finished log.
MonitorReport monitors(const TraceLog& log, const ScenarioConfig& cfg);

struct RunSummary {
  double max_xi_p = 0.0;
  double max_xi_v = 0.0;
  double force_ratio_max = 0.0;   // |kf f~_m + f~_s| / max(|f~_s|, 1 N)
  double force_ratio_mean = 0.0;  // over constrained-motion samples
  int contact_samples = 0;
  int delay_steps = 0;
  double kappa_p = 0.0;
  double kappa_f = 0.0;
  MonitorReport monitor;
};

RunSummary summarize(const TraceLog& log, const ScenarioConfig& cfg);
std::string format_summary(const RunSummary& s);

}  // namespace teleop
