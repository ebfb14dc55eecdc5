#include "teleop/trace.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace teleop {

namespace {

void append_num(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  line += buf;
}

double parse_num(const std::string& field) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::runtime_error("trace csv: bad numeric field '" + field + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<std::string> trace_csv_header(int p_dim) {
  std::vector<std::string> h = {"t",         "q_m_0",       "q_m_1",
                                "v_m_0",     "v_m_1",       "p_m_0",
                                "p_m_1",     "f_hat_m_0",   "f_hat_m_1",
                                "f_tilde_m_0", "f_tilde_m_1"};
  for (int i = 0; i < p_dim; ++i) {
    h.push_back("p_hat_" + std::to_string(i));
  }
  const char* rest[] = {"q_s_0", "q_s_1", "v_s_0",       "v_s_1",
                        "p_s_0", "p_s_1", "f_tilde_s_0", "f_tilde_s_1",
                        "sigma_f", "nu_m", "nu_o2",      "p_g",
                        "xi_v_0", "xi_v_1", "xi_p_0",    "xi_p_1"};
  h.insert(h.end(), std::begin(rest), std::end(rest));
  return h;
}

void write_trace_csv(std::ostream& os, const TraceLog& log) {
  os << "# teleop-trace v1\n";
  const auto header = trace_csv_header(log.p_dim);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) os << ',';
    os << header[i];
  }
  os << '\n';

  std::string line;
  for (const TraceRecord& r : log.records) {
    line.clear();
    auto put = [&line](double v) {
      if (!line.empty()) line += ',';
      append_num(line, v);
    };
    put(r.t);
    put(r.q_m[0]);
    put(r.q_m[1]);
    put(r.v_m[0]);
    put(r.v_m[1]);
    put(r.p_m[0]);
    put(r.p_m[1]);
    put(r.f_hat_m[0]);
    put(r.f_hat_m[1]);
    put(r.f_tilde_m[0]);
    put(r.f_tilde_m[1]);
    for (int i = 0; i < log.p_dim; ++i) put(r.p_hat[i]);
    put(r.q_s[0]);
    put(r.q_s[1]);
    put(r.v_s[0]);
    put(r.v_s[1]);
    put(r.p_s[0]);
    put(r.p_s[1]);
    put(r.f_tilde_s[0]);
    put(r.f_tilde_s[1]);
    put(r.sigma_f);
    put(r.nu_m);
    put(r.nu_o2);
    put(r.p_g);
    put(r.xi_v[0]);
    put(r.xi_v[1]);
    put(r.xi_p[0]);
    put(r.xi_p[1]);
    os << line << '\n';
  }
}

void write_trace_csv_file(const std::string& path, const TraceLog& log) {
  // Atomic write: temp file in the same directory, then rename.
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) {
      throw std::runtime_error("cannot open '" + tmp.string() +
                               "' for writing");
    }
    write_trace_csv(os, log);
  }
  fs::rename(tmp, target);
}

TraceLog read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "# teleop-trace v1") {
    throw std::runtime_error("trace csv: missing '# teleop-trace v1' marker");
  }
  if (!std::getline(is, line)) {
    throw std::runtime_error("trace csv: missing header row");
  }
  const auto header = split_csv(line);
  // Column count determines the p_hat dimension.
  const int fixed = static_cast<int>(trace_csv_header(0).size());
  const int p_dim = static_cast<int>(header.size()) - fixed;
  if (p_dim < 0 || header != trace_csv_header(p_dim)) {
    throw std::runtime_error("trace csv: unexpected header layout");
  }

  TraceLog log;
  log.p_dim = p_dim;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) {
      throw std::runtime_error("trace csv: row width mismatch");
    }
    std::size_t i = 0;
    auto next = [&]() { return parse_num(f[i++]); };
    TraceRecord r;
    r.t = next();
    r.q_m << next(), next();
    r.v_m << next(), next();
    r.p_m << next(), next();
    r.f_hat_m << next(), next();
    r.f_tilde_m << next(), next();
    r.p_hat.resize(p_dim);
    for (int k = 0; k < p_dim; ++k) r.p_hat[k] = next();
    r.q_s << next(), next();
    r.v_s << next(), next();
    r.p_s << next(), next();
    r.f_tilde_s << next(), next();
    r.sigma_f = next();
    r.nu_m = next();
    r.nu_o2 = next();
    r.p_g = next();
    r.xi_v << next(), next();
    r.xi_p << next(), next();
    log.records.push_back(std::move(r));
  }
  if (log.records.size() >= 2) {
    log.dt = log.records[1].t - log.records[0].t;
  }
  return log;
}

TraceLog read_trace_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  return read_trace_csv(is);
}

}  // namespace teleop
