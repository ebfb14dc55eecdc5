#pragma once

// Per-step trace records plus the versioned CSV serialization
// (`# teleop-trace v1`, 17 significant digits, exact round trip).

#include <iosfwd>
#include <string>
#include <vector>

#include "teleop/spatial.hpp"

namespace teleop {

struct TraceRecord {
  double t = 0.0;
  Vec2 q_m = Vec2::Zero();
  Vec2 v_m = Vec2::Zero();
  Vec2 p_m = Vec2::Zero();
  Vec2 f_hat_m = Vec2::Zero();
  Vec2 f_tilde_m = Vec2::Zero();
  Eigen::VectorXd p_hat;
  Vec2 q_s = Vec2::Zero();
  Vec2 v_s = Vec2::Zero();
  Vec2 p_s = Vec2::Zero();
  Vec2 f_tilde_s = Vec2::Zero();
  double sigma_f = 0.0;
  double nu_m = 0.0;
  double nu_o2 = 0.0;
  double p_g = 0.0;
  Vec2 xi_v = Vec2::Zero();
  Vec2 xi_p = Vec2::Zero();
};

// Extra monitor channels kept alongside the log; not part of the CSV
// contract.
struct TraceDiagnostics {
  std::vector<double> nu_m_bound;   // -(v_mr - v_m)^T K_m (v_mr - v_m)
  std::vector<double> nu_o2_bound;  // -(V_o2r - V_o2)^T K_O2 (V_o2r - V_o2)
  std::vector<double> p_to2;        // VPF at the driven cut of Object 2
  std::vector<Vec2> dv_s_err;       // V_sr - V_s
  std::vector<double> sigma_loop;   // spectral norm of the loop contraction
};

struct TraceLog {
  double dt = 0.0;
  int p_dim = 0;
  std::vector<TraceRecord> records;
  TraceDiagnostics diag;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// CSV: first line `# teleop-trace v1`, second line the header, then one row
// per step with `.` decimals and 17 significant digits.
void write_trace_csv(std::ostream& os, const TraceLog& log);
void write_trace_csv_file(const std::string& path, const TraceLog& log);

TraceLog read_trace_csv(std::istream& is);
TraceLog read_trace_csv_file(const std::string& path);

std::vector<std::string> trace_csv_header(int p_dim);

}  // namespace teleop
