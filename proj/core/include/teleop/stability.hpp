#pragma once

// Closed-form delay-robustness analysis: per-side loop transfer functions,
// the quartic-coefficient test, and a frequency-sweep oracle. The conditions
// are delay-independent by construction; no operation takes the delay.

#include <array>
#include <complex>
#include <vector>

#include "teleop/channel.hpp"
#include "teleop/spatial.hpp"

namespace teleop {

// One-dimensional second-order impedance M s + D + K/s.
struct SecondOrderImpedance {
  double M = 0.0;
  double D = 0.0;
  double K = 0.0;

  void validate() const;
};

// Scalar channel parameters for one axis.
struct LoopParams {
  double A = 60e-6;
  double C = 35.0;
  double Lambda = 2.0;
  double kappa_p = 1.0;
  double kappa_f = 1.0;

  void validate() const;
};

enum class Side { master, slave };

// Degree-2 over degree-2 rational transfer function, ascending coefficients.
struct RationalTF {
  std::array<double, 3> num = {0.0, 0.0, 0.0};
  std::array<double, 3> den = {1.0, 0.0, 0.0};

  std::complex<double> eval(std::complex<double> s) const;
  double gain(double omega) const;  // |G(j omega)|
};

struct StabilityVerdict {
  bool stable = false;
  double margin = 0.0;  // 1 - |G| at the critical frequency
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double condition_value = 0.0;  // b + 4 C sqrt(Lambda A K (2 A C M + 1))
};

// Loop gain of one side. The master side uses the scaled operator impedance
// (kappa_f / kappa_p) (M, D, K); the slave side uses the environment as is:
//   G = [-ACM s^2 + (C - ACD) s + (C Lambda - ACK)]
//       / [(1 + ACM) s^2 + (Lambda + C + ACD) s + (Lambda C + ACK)]
RationalTF side_gain(const LoopParams& lp, const SecondOrderImpedance& z,
                     Side side);

// |G(jw)| <= 1 for all w is equivalent to a w^4 + b w^2 + c >= 0 with
//   a = 1 + 2ACM
//   b = Lambda^2 + 2AC (Lambda D + 2 C D - K - 2 Lambda C M)
//   c = 4 Lambda A C^2 K,
// which holds for all w >= 0 iff b + 2 sqrt(a c) >= 0.
StabilityVerdict closed_form_check(const LoopParams& lp,
                                   const SecondOrderImpedance& z, Side side);

// Numerical oracle: max |G(jw)| over the grid, stable iff <= 1 + 1e-12.
StabilityVerdict sweep_check(const LoopParams& lp,
                             const SecondOrderImpedance& z, Side side,
                             const std::vector<double>& omega_grid);

// Logarithmic default grid, 1e-3 .. 1e6 rad/s.
std::vector<double> default_omega_grid(std::size_t points = 100000);

struct DelayRobustnessReport {
  std::array<StabilityVerdict, 2> master;  // per axis
  std::array<StabilityVerdict, 2> slave;
  bool stable = false;  // all four
};

// Axis-by-axis analysis of a 2-D channel configuration against diagonal
// operator and environment impedances.
DelayRobustnessReport delay_robustness_report(const ChannelConfig& cfg,
                                              const Vec2& op_mass,
                                              const Vec2& op_damping,
                                              const Vec2& op_stiffness,
                                              const Vec2& env_mass,
                                              const Vec2& env_damping,
                                              const Vec2& env_stiffness);

}  // namespace teleop
