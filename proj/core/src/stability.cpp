#include "teleop/stability.hpp"

#include <cmath>

namespace teleop {

void SecondOrderImpedance::validate() const {
  if (M < 0.0 || D < 0.0 || K < 0.0) {
    throw std::invalid_argument("impedance: M, D, K must be non-negative");
  }
}

void LoopParams::validate() const {
  if (A <= 0.0 || C <= 0.0 || Lambda <= 0.0 || kappa_p <= 0.0 ||
      kappa_f <= 0.0) {
    throw std::invalid_argument("loop params: all entries must be positive");
  }
}

std::complex<double> RationalTF::eval(std::complex<double> s) const {
  const std::complex<double> n = num[0] + s * (num[1] + s * num[2]);
  const std::complex<double> d = den[0] + s * (den[1] + s * den[2]);
  return n / d;
}

double RationalTF::gain(double omega) const {
  return std::abs(eval(std::complex<double>(0.0, omega)));
}

namespace {

SecondOrderImpedance effective_impedance(const LoopParams& lp,
                                         const SecondOrderImpedance& z,
                                         Side side) {
  if (side == Side::slave) return z;
  const double scale = lp.kappa_f / lp.kappa_p;
  return SecondOrderImpedance{scale * z.M, scale * z.D, scale * z.K};
}

}  // namespace

RationalTF side_gain(const LoopParams& lp, const SecondOrderImpedance& z,
                     Side side) {
  lp.validate();
  z.validate();
  const SecondOrderImpedance e = effective_impedance(lp, z, side);
  const double AC = lp.A * lp.C;

  RationalTF g;
  g.num = {lp.C * lp.Lambda - AC * e.K, lp.C - AC * e.D, -AC * e.M};
  g.den = {lp.Lambda * lp.C + AC * e.K, lp.Lambda + lp.C + AC * e.D,
           1.0 + AC * e.M};
  return g;
}

StabilityVerdict closed_form_check(const LoopParams& lp,
                                   const SecondOrderImpedance& z, Side side) {
  lp.validate();
  z.validate();
  const SecondOrderImpedance e = effective_impedance(lp, z, side);
  const double A = lp.A;
  const double C = lp.C;
  const double L = lp.Lambda;
  const double AC = A * C;

  StabilityVerdict v;
  v.a = 1.0 + 2.0 * AC * e.M;
  v.b = L * L + 2.0 * AC * (L * e.D + 2.0 * C * e.D - e.K - 2.0 * L * C * e.M);
  v.c = 4.0 * L * A * C * C * e.K;
  // b + 2 sqrt(a c); the radicand expands to Lambda A K (2ACM + 1) 4 C^2.
  v.condition_value = v.b + 2.0 * std::sqrt(v.a * v.c);
  v.stable = v.condition_value >= 0.0;

  // Margin read off at the quartic's minimizer over w^2 >= 0.
  const double u_star = std::max(0.0, -v.b / (2.0 * v.a));
  const RationalTF g = side_gain(lp, z, side);
  v.margin = 1.0 - g.gain(std::sqrt(u_star));
  return v;
}

StabilityVerdict sweep_check(const LoopParams& lp,
                             const SecondOrderImpedance& z, Side side,
                             const std::vector<double>& omega_grid) {
  if (omega_grid.empty()) {
    throw std::invalid_argument("sweep_check: empty frequency grid");
  }
  const RationalTF g = side_gain(lp, z, side);
  double peak = 0.0;
  for (const double w : omega_grid) {
    peak = std::max(peak, g.gain(w));
  }

  // Carry the closed-form coefficients for reporting; the verdict itself
  // comes from the sweep.
  StabilityVerdict v = closed_form_check(lp, z, side);
  v.stable = peak <= 1.0 + 1e-12;
  v.margin = 1.0 - peak;
  return v;
}

std::vector<double> default_omega_grid(std::size_t points) {
  std::vector<double> grid;
  grid.reserve(points);
  const double lo = std::log10(1e-3);
  const double hi = std::log10(1e6);
  for (std::size_t i = 0; i < points; ++i) {
    const double u = static_cast<double>(i) / (points - 1);
    grid.push_back(std::pow(10.0, lo + u * (hi - lo)));
  }
  return grid;
}

DelayRobustnessReport delay_robustness_report(const ChannelConfig& cfg,
                                              const Vec2& op_mass,
                                              const Vec2& op_damping,
                                              const Vec2& op_stiffness,
                                              const Vec2& env_mass,
                                              const Vec2& env_damping,
                                              const Vec2& env_stiffness) {
  cfg.validate();
  DelayRobustnessReport rep;
  rep.stable = true;
  for (int ax = 0; ax < 2; ++ax) {
    LoopParams lp;
    lp.A = cfg.a_gain[ax];
    lp.C = cfg.c_filter[ax];
    lp.Lambda = cfg.lambda[ax];
    lp.kappa_p = cfg.kappa_p;
    lp.kappa_f = cfg.kappa_f;

    const SecondOrderImpedance zh{op_mass[ax], op_damping[ax],
                                  op_stiffness[ax]};
    const SecondOrderImpedance ze{env_mass[ax], env_damping[ax],
                                  env_stiffness[ax]};
    rep.master[ax] = closed_form_check(lp, zh, Side::master);
    rep.slave[ax] = closed_form_check(lp, ze, Side::slave);
    rep.stable = rep.stable && rep.master[ax].stable && rep.slave[ax].stable;
  }
  return rep;
}

}  // namespace teleop
