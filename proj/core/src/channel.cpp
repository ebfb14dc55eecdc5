#include "teleop/channel.hpp"

#include <cmath>

#include "teleop/trace.hpp"

namespace teleop {

void ChannelConfig::validate() const {
  if (kappa_p <= 0.0 || kappa_f <= 0.0) {
    throw std::invalid_argument("channel: kappa_p and kappa_f must be "
                                "positive");
  }
  for (int i = 0; i < 2; ++i) {
    if (lambda[i] <= 0.0 || a_gain[i] <= 0.0 || c_filter[i] <= 0.0) {
      throw std::invalid_argument("channel: Lambda, A, C diagonals must be "
                                  "positive");
    }
  }
  if (delay_T < 0.0) {
    throw std::invalid_argument("channel: delay_T must be non-negative");
  }
}

int ChannelConfig::delay_steps(double dt) const {
  if (dt <= 0.0) {
    throw std::invalid_argument("channel: dt must be positive");
  }
  const double steps = delay_T / dt;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps)) {
    throw std::invalid_argument("channel: delay_T must be an exact multiple "
                                "of dt");
  }
  return static_cast<int>(rounded);
}

FilterState filter_step(const FilterState& fs, const Vec2& x, const Vec2& c,
                        double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("filter_step: dt must be positive");
  }
  const Vec2 alpha = (-c * dt).array().exp();
  FilterState out;
  out.value =
      alpha.cwiseProduct(fs.value) + (Vec2::Ones() - alpha).cwiseProduct(x);
  return out;
}

DelayLine::DelayLine(int depth) : depth_(depth) {
  if (depth < 0) {
    throw std::invalid_argument("DelayLine: negative depth");
  }
  buf_.assign(static_cast<std::size_t>(depth) + 1, Vec2::Zero());
}

void DelayLine::push(const Vec2& v) {
  buf_[next_] = v;
  next_ = (next_ + 1) % buf_.size();
}

Vec2 DelayLine::tap() const {
  // Most recent push sits at next_-1; depth_ pushes before that wraps to
  // next_ itself (buffer holds depth_+1 slots).
  return buf_[next_ % buf_.size()];
}

void DelayLine::reset() {
  buf_.assign(buf_.size(), Vec2::Zero());
  next_ = 0;
}

// --- Desired-velocity law ------------------------------------------------------

DesiredVelocities desired_velocities(const SideSignals& master,
                                     const LocalSignals& master_local,
                                     const SideSignals& slave,
                                     const LocalSignals& slave_local,
                                     const ChannelConfig& cfg) {
  const double kp = cfg.kappa_p;
  const double kf = cfg.kappa_f;
  const Mat2 L = cfg.Lambda();
  const Mat2 A = cfg.A();

  DesiredVelocities out;
  out.v_md = (1.0 / kp) * (slave.v_filt + L * (slave.p_filt - kp * master_local.p) -
                           A * (slave.f_tilde + (kf - kp) * master.f_tilde));
  out.dv_md =
      (1.0 / kp) * (slave.dv_filt + L * (slave.dp_filt - kp * master_local.v) -
                    A * (slave.df_tilde + (kf - kp) * master.df_tilde));
  out.v_sd = kp * master.v_filt - L * (slave_local.p - kp * master.p_filt) -
             kf * (A * master.f_tilde);
  out.dv_sd = kp * master.dv_filt -
              L * (slave_local.v - kp * master.dp_filt) -
              kf * (A * master.df_tilde);
  return out;
}

DesiredVelocities desired_velocities_delayed(const SideSignals& master_tapped,
                                             const LocalSignals& master_local,
                                             const SideSignals& slave_tapped,
                                             const LocalSignals& slave_local,
                                             const ChannelConfig& cfg) {
  // The remote terms already come from the delay taps; the law itself is
  // identical, so delay_T = 0 reduces bitwise to the undelayed operation.
  return desired_velocities(master_tapped, master_local, slave_tapped,
                            slave_local, cfg);
}

// --- ChannelState ----------------------------------------------------------------

namespace {
constexpr int kV = 0;
constexpr int kDv = 1;
constexpr int kP = 2;
constexpr int kDp = 3;
constexpr int kF = 4;
constexpr int kDf = 5;
}  // namespace

ChannelState::ChannelState(const ChannelConfig& cfg, double dt)
    : cfg_(cfg), dt_(dt) {
  cfg_.validate();
  const int depth = cfg_.delay_steps(dt);
  for (int i = 0; i < 6; ++i) {
    s2m_.emplace_back(depth);
    m2s_.emplace_back(depth);
  }
}

void ChannelState::engage(const Vec2& v_m, const Vec2& v_s) {
  engaged_ = true;
  p_m_.setZero();
  p_s_.setZero();
  v_m_f_.value = v_m;
  p_m_f_.value = Vec2::Zero();
  v_s_f_.value = v_s;
  p_s_f_.value = Vec2::Zero();
  for (auto& l : s2m_) l.reset();
  for (auto& l : m2s_) l.reset();
}

void ChannelState::disengage() { engaged_ = false; }

void ChannelState::publish_slave(const Vec2& v_s, const Vec2& f_tilde_s,
                                 const Vec2& df_tilde_s) {
  if (!engaged_) return;
  v_s_f_ = filter_step(v_s_f_, v_s, cfg_.c_filter, dt_);
  p_s_f_ = filter_step(p_s_f_, p_s_, cfg_.c_filter, dt_);
  s2m_[kV].push(v_s_f_.value);
  s2m_[kDv].push(cfg_.c_filter.cwiseProduct(v_s - v_s_f_.value));
  s2m_[kP].push(p_s_f_.value);
  s2m_[kDp].push(cfg_.c_filter.cwiseProduct(p_s_ - p_s_f_.value));
  s2m_[kF].push(f_tilde_s);
  s2m_[kDf].push(df_tilde_s);
}

void ChannelState::publish_master(const Vec2& v_m, const Vec2& f_tilde_m,
                                  const Vec2& df_tilde_m) {
  if (!engaged_) return;
  v_m_f_ = filter_step(v_m_f_, v_m, cfg_.c_filter, dt_);
  p_m_f_ = filter_step(p_m_f_, p_m_, cfg_.c_filter, dt_);
  m2s_[kV].push(v_m_f_.value);
  m2s_[kDv].push(cfg_.c_filter.cwiseProduct(v_m - v_m_f_.value));
  m2s_[kP].push(p_m_f_.value);
  m2s_[kDp].push(cfg_.c_filter.cwiseProduct(p_m_ - p_m_f_.value));
  m2s_[kF].push(f_tilde_m);
  m2s_[kDf].push(df_tilde_m);
}

ChannelState::MasterFeed ChannelState::master_feed(const Vec2& v_m_now) const {
  MasterFeed feed;
  if (!engaged_) return feed;
  const double kp = cfg_.kappa_p;
  const double kf = cfg_.kappa_f;
  const Mat2 L = cfg_.Lambda();
  const Mat2 A = cfg_.A();

  feed.v_md_base =
      (1.0 / kp) * (s2m_[kV].tap() + L * (s2m_[kP].tap() - kp * p_m_) -
                    A * s2m_[kF].tap());
  feed.dv_md_base =
      (1.0 / kp) * (s2m_[kDv].tap() + L * (s2m_[kDp].tap() - kp * v_m_now) -
                    A * s2m_[kDf].tap());
  feed.f_m_coupling = -((kf - kp) / kp) * A;
  return feed;
}

ChannelState::SlaveFeed ChannelState::slave_feed(const Vec2& v_s_now) const {
  SlaveFeed feed;
  if (!engaged_) return feed;
  const double kp = cfg_.kappa_p;
  const double kf = cfg_.kappa_f;
  const Mat2 L = cfg_.Lambda();
  const Mat2 A = cfg_.A();

  feed.v_sd = kp * m2s_[kV].tap() - L * (p_s_ - kp * m2s_[kP].tap()) -
              kf * (A * m2s_[kF].tap());
  feed.dv_sd = kp * m2s_[kDv].tap() - L * (v_s_now - kp * m2s_[kDp].tap()) -
               kf * (A * m2s_[kDf].tap());
  return feed;
}

void ChannelState::advance_positions(const Vec2& v_m, const Vec2& v_s) {
  if (!engaged_) return;
  p_m_ += dt_ * v_m;
  p_s_ += dt_ * v_s;
}

// --- Metrics ----------------------------------------------------------------------

TrackingMetrics tracking_metrics(const TraceLog& log,
                                 const ChannelConfig& cfg) {
  TrackingMetrics m;
  const double kp = cfg.kappa_p;
  const Mat2 L = cfg.Lambda();
  const std::size_t n = log.records.size();
  m.t.reserve(n);
  m.xi_v.reserve(n);
  m.xi_p.reserve(n);
  m.z.reserve(n);
  m.l2_xi_v.reserve(n);
  m.l2_xi_p.reserve(n);

  double acc_v = 0.0;
  double acc_p = 0.0;
  double prev_v2 = 0.0;
  double prev_p2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const TraceRecord& r = log.records[k];
    const Vec2 xi_v = kp * r.v_m - r.v_s;
    const Vec2 xi_p = kp * r.p_m - r.p_s;
    const Vec2 z = (r.v_s - kp * r.v_m) + L * (r.p_s - kp * r.p_m);
    const double v2 = xi_v.squaredNorm();
    const double p2 = xi_p.squaredNorm();
    if (k > 0) {
      acc_v += 0.5 * (prev_v2 + v2) * log.dt;
      acc_p += 0.5 * (prev_p2 + p2) * log.dt;
    }
    prev_v2 = v2;
    prev_p2 = p2;
    m.t.push_back(r.t);
    m.xi_v.push_back(xi_v);
    m.xi_p.push_back(xi_p);
    m.z.push_back(z);
    m.l2_xi_v.push_back(acc_v);
    m.l2_xi_p.push_back(acc_p);
    m.max_xi_v = std::max(m.max_xi_v, xi_v.norm());
    m.max_xi_p = std::max(m.max_xi_p, xi_p.norm());
  }
  return m;
}

TransparencyMetrics transparency_metrics(const TraceLog& log,
                                         const ChannelConfig& cfg,
                                         double t_start, double t_end) {
  if (log.records.size() < 8) {
    throw std::invalid_argument("transparency_metrics: log too short");
  }
  std::size_t i0 = 0;
  while (i0 < log.records.size() && log.records[i0].t < t_start) ++i0;
  std::size_t i1 = i0;
  while (i1 < log.records.size() && log.records[i1].t <= t_end) ++i1;
  if (i1 - i0 < 8) {
    throw std::invalid_argument("transparency_metrics: window too short");
  }

  // Reconstruct the filtered master velocity over the window with the
  // configured C (exact ZOH), seeded at the first window sample.
  const std::size_t n = i1 - i0;
  std::vector<Vec2> v_f(n);
  std::vector<Vec2> dv_f(n);
  FilterState fs;
  fs.value = log.records[i0].v_m;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 v = log.records[i0 + k].v_m;
    if (k > 0) fs = filter_step(fs, v, cfg.c_filter, log.dt);
    v_f[k] = fs.value;
    dv_f[k] = cfg.c_filter.cwiseProduct(v - fs.value);
  }

  TransparencyMetrics out;
  for (int ax = 0; ax < 2; ++ax) {
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (std::size_t k = 0; k < n; ++k) {
      const TraceRecord& r = log.records[i0 + k];
      X(k, 0) = dv_f[k][ax];
      X(k, 1) = v_f[k][ax];
      y(k) = -r.f_tilde_m[ax] - r.f_tilde_s[ax] / cfg.kappa_f;
    }
    const Eigen::Matrix2d G = X.transpose() * X;
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(G);
    const double smin = svd.singularValues()(1);
    const double smax = svd.singularValues()(0);
    if (smin <= 0.0 || smax / smin > 1e12) {
      throw std::runtime_error("transparency_metrics: excitation "
                               "insufficient (rank-deficient regression)");
    }
    const Eigen::Vector2d beta =
        X.colPivHouseholderQr().solve(y);
    out.mass_fit[ax] = beta(0);
    out.damping_fit[ax] = beta(1);
    out.residual_rms[ax] = std::sqrt((X * beta - y).squaredNorm() / n);
    out.mass_predicted[ax] =
        cfg.kappa_p / (cfg.kappa_f * cfg.a_gain[ax] * cfg.c_filter[ax]);
    out.damping_predicted[ax] = out.mass_predicted[ax] * cfg.lambda[ax];
  }
  return out;
}

}  // namespace teleop
