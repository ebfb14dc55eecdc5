#pragma once

// The bilateral communication channel: first-order filters, scaled
// desired-velocity synthesis with analytic derivatives, pure delay lines,
// and offline tracking/transparency metrics.

#include <cstddef>
#include <vector>

#include "teleop/spatial.hpp"

namespace teleop {

struct TraceLog;  // trace.hpp

// Complete channel parameterization (Table-style: kappa_p, kappa_f, Lambda,
// A, C, delay). Diagonal matrices are stored by their diagonals.
struct ChannelConfig {
  double kappa_p = 1.0;
  double kappa_f = 1.0;
  Vec2 lambda = Vec2(2.0, 2.0);     // 1/s
  Vec2 a_gain = Vec2(60e-6, 60e-6); // m/(N s)
  Vec2 c_filter = Vec2(35.0, 35.0); // 1/s
  double delay_T = 0.0;             // one-way delay [s]

  Mat2 Lambda() const { return lambda.asDiagonal(); }
  Mat2 A() const { return a_gain.asDiagonal(); }
  Mat2 C() const { return c_filter.asDiagonal(); }

  void validate() const;
  // delay_T must be an exact multiple of dt; rejected otherwise.
  int delay_steps(double dt) const;
};

// First-order lag state; advance with the exact zero-order-hold map
// x~ <- e^{-C dt} x~ + (1 - e^{-C dt}) x.
struct FilterState {
  Vec2 value = Vec2::Zero();
};

FilterState filter_step(const FilterState& fs, const Vec2& x, const Vec2& c,
                        double dt);

// Pure delay: output(k) = input(k - depth), zero before any history exists.
class DelayLine {
 public:
  explicit DelayLine(int depth);

  void push(const Vec2& v);
  Vec2 tap() const;  // value pushed `depth` pushes ago (current one if 0)
  int depth() const { return depth_; }
  void reset();

 private:
  int depth_;
  std::vector<Vec2> buf_;
  std::size_t next_ = 0;
};

// One side's contribution to the desired-velocity law.
struct SideSignals {
  Vec2 v_filt = Vec2::Zero();   // filtered velocity
  Vec2 dv_filt = Vec2::Zero();  // its analytic derivative C (v - v~)
  Vec2 p_filt = Vec2::Zero();   // filtered position
  Vec2 dp_filt = Vec2::Zero();
  Vec2 f_tilde = Vec2::Zero();  // filtered force estimate
  Vec2 df_tilde = Vec2::Zero();
};

struct LocalSignals {
  Vec2 p = Vec2::Zero();  // raw integrated position
  Vec2 v = Vec2::Zero();  // raw velocity (the derivative of p)
};

struct DesiredVelocities {
  Vec2 v_md = Vec2::Zero();
  Vec2 v_sd = Vec2::Zero();
  Vec2 dv_md = Vec2::Zero();
  Vec2 dv_sd = Vec2::Zero();
};

// Undelayed law:
//   v_md = 1/kp [ v~_s + L (p~_s - kp p_m) - A (f~_s + (kf - kp) f~_m) ]
//   v_sd = kp v~_m - L (p_s - kp p~_m) - A kf f~_m
// with derivatives formed from the filter dynamics, never numerically.
DesiredVelocities desired_velocities(const SideSignals& master,
                                     const LocalSignals& master_local,
                                     const SideSignals& slave,
                                     const LocalSignals& slave_local,
                                     const ChannelConfig& cfg);

// Delayed law: remote-originated terms read from the delay taps, local terms
// untouched. With delay_T = 0 this reduces exactly to desired_velocities.
DesiredVelocities desired_velocities_delayed(const SideSignals& master_tapped,
                                             const LocalSignals& master_local,
                                             const SideSignals& slave_tapped,
                                             const LocalSignals& slave_local,
                                             const ChannelConfig& cfg);

// --- Per-scenario channel state -----------------------------------------------

// Owns the four motion filters, both delay-line bundles and the integrated
// positions. Dormant until engage(); positions are zeroed at engagement.
class ChannelState {
 public:
  ChannelState(const ChannelConfig& cfg, double dt);

  void engage(const Vec2& v_m, const Vec2& v_s);
  void disengage();
  bool engaged() const { return engaged_; }

  // Slave-side publish: filter v_s/p_s and push toward the master.
  void publish_slave(const Vec2& v_s, const Vec2& f_tilde_s,
                     const Vec2& df_tilde_s);
  // Master-side publish after the loop solve.
  void publish_master(const Vec2& v_m, const Vec2& f_tilde_m,
                      const Vec2& df_tilde_m);

  // Master-side outputs split for the algebraic loop: the f~_m coupling is
  // returned as a matrix so v_md = v_md_base + f_m_coupling f~_m.
  struct MasterFeed {
    Vec2 v_md_base = Vec2::Zero();
    Vec2 dv_md_base = Vec2::Zero();
    Mat2 f_m_coupling = Mat2::Zero();
  };
  MasterFeed master_feed(const Vec2& v_m_now) const;

  struct SlaveFeed {
    Vec2 v_sd = Vec2::Zero();
    Vec2 dv_sd = Vec2::Zero();
  };
  SlaveFeed slave_feed(const Vec2& v_s_now) const;

  // Forward-Euler position integration P += dt V (end of period).
  void advance_positions(const Vec2& v_m, const Vec2& v_s);

  const Vec2& p_m() const { return p_m_; }
  const Vec2& p_s() const { return p_s_; }

 private:
  ChannelConfig cfg_;
  double dt_;
  bool engaged_ = false;

  Vec2 p_m_ = Vec2::Zero();
  Vec2 p_s_ = Vec2::Zero();
  FilterState v_m_f_, p_m_f_, v_s_f_, p_s_f_;

  // slave -> master lines: v~_s, dv~_s, p~_s, dp~_s, f~_s, df~_s
  std::vector<DelayLine> s2m_;
  // master -> slave lines: v~_m, dv~_m, p~_m, dp~_m, f~_m, df~_m
  std::vector<DelayLine> m2s_;
};

// --- Metrics --------------------------------------------------------------------

struct TrackingMetrics {
  std::vector<double> t;
  std::vector<Vec2> xi_v;           // kp V_m - V_s
  std::vector<Vec2> xi_p;           // kp P_m - P_s
  std::vector<Vec2> z;              // (V_s - kp V_m) + Lambda (P_s - kp P_m)
  std::vector<double> l2_xi_v;      // running trapezoidal integral of |xi_v|^2
  std::vector<double> l2_xi_p;
  double max_xi_v = 0.0;
  double max_xi_p = 0.0;
};

TrackingMetrics tracking_metrics(const TraceLog& log, const ChannelConfig& cfg);

struct TransparencyMetrics {
  Vec2 mass_fit = Vec2::Zero();      // per-axis virtual mass estimate
  Vec2 damping_fit = Vec2::Zero();   // per-axis virtual damping estimate
  Vec2 mass_predicted = Vec2::Zero();
  Vec2 damping_predicted = Vec2::Zero();
  Vec2 residual_rms = Vec2::Zero();
};

// Ordinary least squares of (-f~_m - kf^{-1} f~_s) against (dv~_m, v~_m) over
// [t_start, t_end]; the filtered master velocity is reconstructed from the
// logged V_m with the configured C. Throws when the excitation is rank
// deficient.
TransparencyMetrics transparency_metrics(const TraceLog& log,
                                         const ChannelConfig& cfg,
                                         double t_start, double t_end);

}  // namespace teleop
