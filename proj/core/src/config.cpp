#include "teleop/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace teleop {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string nums(std::initializer_list<double> vs) {
  std::string out;
  for (const double v : vs) {
    if (!out.empty()) out += ' ';
    out += num(v);
  }
  return out;
}

template <typename Derived>
std::string vec(const Eigen::MatrixBase<Derived>& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += num(v[i]);
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& value,
                                  const std::string& what) {
  std::vector<double> out;
  std::istringstream is(value);
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + tok + "' in " + what);
    }
  }
  return out;
}

// Reader that tracks consumed keys so unknown ones can be rejected.
class IniReader {
 public:
  explicit IniReader(const IniDoc& doc) : doc_(doc) {}

  double number(const std::string& sec, const std::string& key) {
    return one(sec, key);
  }
  int integer(const std::string& sec, const std::string& key) {
    const double v = one(sec, key);
    const int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-12) {
      throw ConfigError(sec + "." + key + " must be an integer");
    }
    return i;
  }
  bool boolean(const std::string& sec, const std::string& key) {
    return integer(sec, key) != 0;
  }
  std::vector<double> numbers(const std::string& sec, const std::string& key,
                              std::size_t n) {
    const std::string raw = this->raw(sec, key);
    const auto vs = parse_numbers(raw, sec + "." + key);
    if (vs.size() != n) {
      throw ConfigError(sec + "." + key + ": expected " + std::to_string(n) +
                        " numbers, got " + std::to_string(vs.size()));
    }
    return vs;
  }
  Vec2 vec2(const std::string& sec, const std::string& key) {
    const auto v = numbers(sec, key, 2);
    return Vec2(v[0], v[1]);
  }
  Vec3 vec3(const std::string& sec, const std::string& key) {
    const auto v = numbers(sec, key, 3);
    return Vec3(v[0], v[1], v[2]);
  }
  VecX vecx(const std::string& sec, const std::string& key) {
    const auto vs = parse_numbers(raw(sec, key), sec + "." + key);
    VecX out(vs.size());
    for (std::size_t i = 0; i < vs.size(); ++i) out[i] = vs[i];
    return out;
  }
  std::string raw(const std::string& sec, const std::string& key) {
    const std::string* v = doc_.find(sec, key);
    if (!v) throw ConfigError("missing config key " + sec + "." + key);
    used_.insert(sec + "." + key);
    return *v;
  }

  void reject_unknown() const {
    for (const auto& [sec, kvs] : doc_.sections()) {
      for (const auto& [key, value] : kvs) {
        if (!used_.count(sec + "." + key)) {
          throw ConfigError("unknown config key " + sec + "." + key);
        }
      }
    }
  }

 private:
  double one(const std::string& sec, const std::string& key) {
    const auto vs = parse_numbers(raw(sec, key), sec + "." + key);
    if (vs.size() != 1) {
      throw ConfigError(sec + "." + key + " must be a single number");
    }
    return vs[0];
  }

  const IniDoc& doc_;
  std::set<std::string> used_;
};

std::string body_line(const BodySpec& b) {
  return nums({b.mass, b.com.x(), b.com.y(), b.ixx, b.iyy, b.izz});
}

BodySpec parse_body(IniReader& r, const std::string& sec,
                    const std::string& key) {
  const auto v = r.numbers(sec, key, 6);
  BodySpec b;
  b.mass = v[0];
  b.com = Vec2(v[1], v[2]);
  b.ixx = v[3];
  b.iyy = v[4];
  b.izz = v[5];
  return b;
}

std::string basis_line(const BasisComponent& c) {
  switch (c.kind) {
    case BasisComponent::Kind::constant:
      return "constant";
    case BasisComponent::Kind::sine:
      return "sine " + num(c.freq_hz);
    case BasisComponent::Kind::cosine:
      return "cosine " + num(c.freq_hz);
    case BasisComponent::Kind::trapezoid:
      return "trapezoid " + nums({c.t0, c.t1, c.t2, c.t3});
  }
  throw std::logic_error("unknown basis kind");
}

BasisComponent parse_basis(const std::string& raw, const std::string& what) {
  std::istringstream is(raw);
  std::string kind;
  is >> kind;
  BasisComponent c;
  if (kind == "constant") {
    c.kind = BasisComponent::Kind::constant;
  } else if (kind == "sine" || kind == "cosine") {
    c.kind = kind == "sine" ? BasisComponent::Kind::sine
                            : BasisComponent::Kind::cosine;
    if (!(is >> c.freq_hz)) {
      throw ConfigError(what + ": " + kind + " needs a frequency");
    }
  } else if (kind == "trapezoid") {
    c.kind = BasisComponent::Kind::trapezoid;
    if (!(is >> c.t0 >> c.t1 >> c.t2 >> c.t3)) {
      throw ConfigError(what + ": trapezoid needs four knots");
    }
  } else {
    throw ConfigError(what + ": unknown basis kind '" + kind + "'");
  }
  std::string extra;
  if (is >> extra) {
    throw ConfigError(what + ": trailing token '" + extra + "'");
  }
  return c;
}

}  // namespace

// --- IniDoc -----------------------------------------------------------------------

void IniDoc::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  for (auto& [name, kvs] : sections_) {
    if (name == section) {
      for (auto& [k, v] : kvs) {
        if (k == key) {
          v = value;
          return;
        }
      }
      kvs.emplace_back(key, value);
      return;
    }
  }
  sections_.push_back({section, {{key, value}}});
}

const std::string* IniDoc::find(const std::string& section,
                                const std::string& key) const {
  for (const auto& [name, kvs] : sections_) {
    if (name != section) continue;
    for (const auto& [k, v] : kvs) {
      if (k == key) return &v;
    }
  }
  return nullptr;
}

bool IniDoc::has_section(const std::string& section) const {
  for (const auto& [name, kvs] : sections_) {
    if (name == section) return true;
  }
  return false;
}

void IniDoc::override_value(const std::string& dotted_key,
                            const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    throw ConfigError("override key '" + dotted_key +
                      "' must look like section.key");
  }
  const std::string section = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  if (!find(section, key)) {
    throw ConfigError("override references unknown key '" + dotted_key + "'");
  }
  set(section, key, value);
}

IniDoc parse_ini(const std::string& text) {
  IniDoc doc;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header");
      }
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": empty section name");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": key outside any [section]");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    if (doc.find(section, key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " +
                        section + "." + key);
    }
    doc.set(section, key, value);
  }
  return doc;
}

std::string serialize_ini(const IniDoc& doc) {
  std::string out;
  bool first = true;
  for (const auto& [name, kvs] : doc.sections()) {
    if (!first) out += '\n';
    first = false;
    out += '[' + name + "]\n";
    for (const auto& [k, v] : kvs) {
      out += k + " = " + v + '\n';
    }
  }
  return out;
}

// --- Scenario <-> ini ---------------------------------------------------------------

IniDoc scenario_to_ini(const ScenarioConfig& cfg) {
  IniDoc d;
  d.set("sim", "duration", num(cfg.duration));
  d.set("sim", "dt", num(cfg.dt));
  d.set("sim", "substeps", num(cfg.substeps));
  d.set("sim", "engage_time", num(cfg.engage_time));
  d.set("sim", "disengage_time", num(cfg.disengage_time));
  d.set("sim", "seed", num(static_cast<double>(cfg.seed)));
  d.set("sim", "stream_log", num(cfg.stream_log ? 1 : 0));
  d.set("sim", "gravity", vec(cfg.gravity));

  d.set("channel", "kappa_p", num(cfg.channel.kappa_p));
  d.set("channel", "kappa_f", num(cfg.channel.kappa_f));
  d.set("channel", "lambda", vec(cfg.channel.lambda));
  d.set("channel", "a_gain", vec(cfg.channel.a_gain));
  d.set("channel", "c_filter", vec(cfg.channel.c_filter));
  d.set("channel", "delay_T", num(cfg.channel.delay_T));

  const auto& mk = cfg.master.kin;
  d.set("master", "l_upper", num(mk.l_upper));
  d.set("master", "l_tip", num(mk.l_tip));
  d.set("master", "crank", num(mk.crank));
  d.set("master", "d_cc", num(mk.d_cc));
  d.set("master", "d_o1", num(mk.d_o1));
  d.set("master", "q3_offset", num(mk.q3_offset));
  d.set("master", "q_min", vec(mk.q_min));
  d.set("master", "q_max", vec(mk.q_max));
  d.set("master", "cond_max", num(mk.cond_max));
  d.set("master", "k_m", vec(cfg.master.k_m));
  d.set("master", "q0", vec(cfg.master.q0));
  d.set("master", "body_b11", body_line(cfg.master.b11));
  d.set("master", "body_b12", body_line(cfg.master.b12));
  d.set("master", "body_b21", body_line(cfg.master.b21));
  d.set("master", "body_b22", body_line(cfg.master.b22));
  d.set("master", "body_o1", body_line(cfg.master.o1));

  d.set("operator", "m_h", vec(cfg.op.m_h));
  d.set("operator", "d_h", vec(cfg.op.d_h));
  d.set("operator", "k_h", vec(cfg.op.k_h));
  d.set("operator", "p_true", vec(cfg.op.p_true));
  d.set("operator", "p_lower", vec(cfg.op.p_lower));
  d.set("operator", "p_upper", vec(cfg.op.p_upper));
  d.set("operator", "p_hat0", vec(cfg.op.p_hat0));
  d.set("operator", "rho", vec(cfg.op.rho));

  d.set("basis", "count", num(static_cast<double>(cfg.op.basis.size())));
  for (std::size_t i = 0; i < cfg.op.basis.size(); ++i) {
    d.set("basis", "comp_" + std::to_string(i), basis_line(cfg.op.basis[i]));
  }

  const auto& sk = cfg.slave.kin;
  d.set("slave", "l1", num(sk.l1));
  d.set("slave", "l2", num(sk.l2));
  d.set("slave", "d_o2", num(sk.d_o2));
  d.set("slave", "q_min", vec(sk.q_min));
  d.set("slave", "q_max", vec(sk.q_max));
  d.set("slave", "cond_max", num(sk.cond_max));
  d.set("slave", "q0", vec(cfg.slave.q0));
  d.set("slave", "body_link1", body_line(cfg.slave.link1));
  d.set("slave", "body_link2", body_line(cfg.slave.link2));
  d.set("slave", "payload", num(cfg.slave.payload));
  d.set("slave", "k_o2", vec(cfg.slave.k_o2));
  d.set("slave", "k_link1", vec(cfg.slave.k_link1));
  d.set("slave", "rho_o2", vec(cfg.slave.rho_o2));
  d.set("slave", "theta_lo_scale", num(cfg.slave.theta_lo_scale));
  d.set("slave", "theta_hi_scale", num(cfg.slave.theta_hi_scale));
  d.set("slave", "theta_abs_slack", num(cfg.slave.theta_abs_slack));
  d.set("slave", "theta_hat_exact", num(cfg.slave.theta_hat_exact ? 1 : 0));

  d.set("environment", "m_e", vec(cfg.env.m_e));
  d.set("environment", "d_e", vec(cfg.env.d_e));
  d.set("environment", "k_e", vec(cfg.env.k_e));
  d.set("environment", "wall_normal", vec(cfg.env.wall_normal));
  d.set("environment", "wall_offset", num(cfg.env.wall_offset));
  d.set("environment", "hysteresis", num(cfg.env.hysteresis));
  return d;
}

ScenarioConfig scenario_from_ini(const IniDoc& doc) {
  IniReader r(doc);
  ScenarioConfig cfg;

  cfg.duration = r.number("sim", "duration");
  cfg.dt = r.number("sim", "dt");
  cfg.substeps = r.integer("sim", "substeps");
  cfg.engage_time = r.number("sim", "engage_time");
  cfg.disengage_time = r.number("sim", "disengage_time");
  cfg.seed = r.integer("sim", "seed");
  cfg.stream_log = r.boolean("sim", "stream_log");
  cfg.gravity = r.vec3("sim", "gravity");

  cfg.channel.kappa_p = r.number("channel", "kappa_p");
  cfg.channel.kappa_f = r.number("channel", "kappa_f");
  cfg.channel.lambda = r.vec2("channel", "lambda");
  cfg.channel.a_gain = r.vec2("channel", "a_gain");
  cfg.channel.c_filter = r.vec2("channel", "c_filter");
  cfg.channel.delay_T = r.number("channel", "delay_T");

  cfg.master.kin.l_upper = r.number("master", "l_upper");
  cfg.master.kin.l_tip = r.number("master", "l_tip");
  cfg.master.kin.crank = r.number("master", "crank");
  cfg.master.kin.d_cc = r.number("master", "d_cc");
  cfg.master.kin.d_o1 = r.number("master", "d_o1");
  cfg.master.kin.q3_offset = r.number("master", "q3_offset");
  cfg.master.kin.q_min = r.vec2("master", "q_min");
  cfg.master.kin.q_max = r.vec2("master", "q_max");
  cfg.master.kin.cond_max = r.number("master", "cond_max");
  cfg.master.k_m = r.vec2("master", "k_m");
  cfg.master.q0 = r.vec2("master", "q0");
  cfg.master.b11 = parse_body(r, "master", "body_b11");
  cfg.master.b12 = parse_body(r, "master", "body_b12");
  cfg.master.b21 = parse_body(r, "master", "body_b21");
  cfg.master.b22 = parse_body(r, "master", "body_b22");
  cfg.master.o1 = parse_body(r, "master", "body_o1");

  cfg.op.m_h = r.vec2("operator", "m_h");
  cfg.op.d_h = r.vec2("operator", "d_h");
  cfg.op.k_h = r.vec2("operator", "k_h");
  cfg.op.p_true = r.vecx("operator", "p_true");
  cfg.op.p_lower = r.vecx("operator", "p_lower");
  cfg.op.p_upper = r.vecx("operator", "p_upper");
  cfg.op.p_hat0 = r.vecx("operator", "p_hat0");
  cfg.op.rho = r.vecx("operator", "rho");

  const int n_basis = r.integer("basis", "count");
  if (n_basis < 1) throw ConfigError("basis.count must be >= 1");
  cfg.op.basis.clear();
  for (int i = 0; i < n_basis; ++i) {
    const std::string key = "comp_" + std::to_string(i);
    cfg.op.basis.push_back(parse_basis(r.raw("basis", key), "basis." + key));
  }

  cfg.slave.kin.l1 = r.number("slave", "l1");
  cfg.slave.kin.l2 = r.number("slave", "l2");
  cfg.slave.kin.d_o2 = r.number("slave", "d_o2");
  cfg.slave.kin.q_min = r.vec2("slave", "q_min");
  cfg.slave.kin.q_max = r.vec2("slave", "q_max");
  cfg.slave.kin.cond_max = r.number("slave", "cond_max");
  cfg.slave.q0 = r.vec2("slave", "q0");
  cfg.slave.link1 = parse_body(r, "slave", "body_link1");
  cfg.slave.link2 = parse_body(r, "slave", "body_link2");
  cfg.slave.payload = r.number("slave", "payload");
  {
    const auto v6 = r.numbers("slave", "k_o2", 6);
    const auto w6 = r.numbers("slave", "k_link1", 6);
    const auto r13 = r.numbers("slave", "rho_o2", 13);
    for (int i = 0; i < 6; ++i) {
      cfg.slave.k_o2[i] = v6[i];
      cfg.slave.k_link1[i] = w6[i];
    }
    for (int i = 0; i < 13; ++i) cfg.slave.rho_o2[i] = r13[i];
  }
  cfg.slave.theta_lo_scale = r.number("slave", "theta_lo_scale");
  cfg.slave.theta_hi_scale = r.number("slave", "theta_hi_scale");
  cfg.slave.theta_abs_slack = r.number("slave", "theta_abs_slack");
  cfg.slave.theta_hat_exact = r.boolean("slave", "theta_hat_exact");

  cfg.env.m_e = r.vec2("environment", "m_e");
  cfg.env.d_e = r.vec2("environment", "d_e");
  cfg.env.k_e = r.vec2("environment", "k_e");
  cfg.env.wall_normal = r.vec2("environment", "wall_normal");
  cfg.env.wall_offset = r.number("environment", "wall_offset");
  cfg.env.hysteresis = r.number("environment", "hysteresis");

  r.reject_unknown();
  return cfg;
}

std::string scenario_to_text(const ScenarioConfig& cfg) {
  return serialize_ini(scenario_to_ini(cfg));
}

ScenarioConfig scenario_from_text(const std::string& text) {
  return scenario_from_ini(parse_ini(text));
}

ScenarioConfig apply_overrides(const ScenarioConfig& cfg,
                               const std::vector<std::string>& overrides) {
  if (overrides.empty()) return cfg;
  IniDoc doc = scenario_to_ini(cfg);
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + ov + "' must look like key=value");
    }
    doc.override_value(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  return scenario_from_ini(doc);
}

ScenarioConfig load_scenario_file(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  ScenarioConfig cfg = scenario_from_text(buf.str());
  cfg = apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

}  // namespace teleop
