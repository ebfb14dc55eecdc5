// Command-line front end: scenario runs, experiment presets, delay-stability
// analysis, parameter sweeps and config validation.
//
// Exit codes: 0 success, 2 config/validation error, 3 numerical abort.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include "teleop/config.hpp"
#include "teleop/sim.hpp"
#include "teleop/stability.hpp"
#include "teleop/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct SourceOpts {
  std::string preset;
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_source_opts(CLI::App* cmd, SourceOpts& o) {
  cmd->add_option("--preset", o.preset, "experiment preset (exp1, exp2, exp3)");
  cmd->add_option("--config", o.config_path, "scenario config file");
  cmd->add_option("--set", o.overrides,
                  "override a config key, e.g. --set channel.kappa_f=800")
      ->take_all();
}

teleop::ScenarioConfig resolve_config(const SourceOpts& o) {
  if (!o.preset.empty() && !o.config_path.empty()) {
    throw teleop::ConfigError("use either --preset or --config, not both");
  }
  teleop::ScenarioConfig cfg;
  if (!o.config_path.empty()) {
    return teleop::load_scenario_file(o.config_path, o.overrides);
  }
  if (!o.preset.empty()) {
    cfg = teleop::experiment_preset(o.preset);
  } else {
    throw teleop::ConfigError("missing --preset or --config");
  }
  cfg = teleop::apply_overrides(cfg, o.overrides);
  cfg.validate();
  return cfg;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  fs::path tmp(path);
  tmp += ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot open '" + path + "'");
    os << text;
  }
  fs::rename(tmp, fs::path(path));
}

std::string verdict_row(const char* side, int axis,
                        const teleop::StabilityVerdict& v) {
  std::ostringstream os;
  os << side << " axis " << axis << ": "
     << (v.stable ? "stable" : "UNSTABLE") << "  margin=" << v.margin
     << "  a=" << v.a << " b=" << v.b << " c=" << v.c
     << "  condition=" << v.condition_value;
  return os.str();
}

int cmd_run(const SourceOpts& src, const std::string& out_path) {
  const teleop::ScenarioConfig cfg = resolve_config(src);
  teleop::TraceLog log;
  try {
    if (cfg.stream_log) {
      // Streaming flush: rows hit the file as they complete. No temp+rename
      // here, so a partial file survives an abort for inspection.
      std::ofstream os(out_path);
      if (!os) throw std::runtime_error("cannot open '" + out_path + "'");
      os << "# teleop-trace v1\n";
      const auto header = teleop::trace_csv_header(
          static_cast<int>(cfg.op.p_hat0.size()));
      for (std::size_t i = 0; i < header.size(); ++i) {
        os << (i ? "," : "") << header[i];
      }
      os << '\n';
      teleop::TraceLog row_holder;
      row_holder.p_dim = static_cast<int>(cfg.op.p_hat0.size());
      log = teleop::run_scenario(cfg, [&](const teleop::TraceRecord& r) {
        row_holder.records.assign(1, r);
        std::ostringstream line;
        teleop::write_trace_csv(line, row_holder);
        const std::string text = line.str();
        // drop the marker and header the writer prepends
        const auto second = text.find('\n', text.find('\n') + 1);
        os << text.substr(second + 1);
        os.flush();
      });
    } else {
      log = teleop::run_scenario(cfg);
    }
  } catch (const teleop::NumericalAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "last finite record at t = " << e.last_record().t << " s\n";
    return kExitNumerical;
  }
  if (!cfg.stream_log) {
    teleop::write_trace_csv_file(out_path, log);
  }
  const teleop::RunSummary s = teleop::summarize(log, cfg);
  std::cout << "wrote " << log.size() << " rows to " << out_path << "\n";
  std::cout << teleop::format_summary(s);
  return kExitOk;
}

int cmd_preset(const std::string& name, const std::string& out_path) {
  const teleop::ScenarioConfig cfg = teleop::experiment_preset(name);
  const std::string text = teleop::scenario_to_text(cfg);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_atomic(out_path, text);
    std::cout << "wrote preset '" << name << "' to " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_analyze(const SourceOpts& src, const std::string& out_path) {
  const teleop::ScenarioConfig cfg = resolve_config(src);
  const teleop::DelayRobustnessReport rep = teleop::delay_robustness_report(
      cfg.channel, cfg.op.m_h, cfg.op.d_h, cfg.op.k_h, cfg.env.m_e,
      cfg.env.d_e, cfg.env.k_e);

  for (int ax = 0; ax < 2; ++ax) {
    std::cout << verdict_row("master", ax, rep.master[ax]) << "\n";
    std::cout << verdict_row("slave", ax, rep.slave[ax]) << "\n";
  }
  std::cout << "combined: " << (rep.stable ? "stable" : "UNSTABLE")
            << " for arbitrary delay\n";

  if (!out_path.empty()) {
    std::ostringstream os;
    os << "side,axis,stable,margin,a,b,c,condition_value\n";
    auto row = [&os](const char* side, int ax,
                     const teleop::StabilityVerdict& v) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    side, ax, v.stable ? 1 : 0, v.margin, v.a, v.b, v.c,
                    v.condition_value);
      os << buf;
    };
    for (int ax = 0; ax < 2; ++ax) {
      row("master", ax, rep.master[ax]);
      row("slave", ax, rep.slave[ax]);
    }
    write_text_atomic(out_path, os.str());
  }
  return kExitOk;
}

struct SweepSpec {
  std::string key;
  double start = 0.0;
  double stop = 0.0;
  int steps = 1;
};

SweepSpec parse_sweep(const std::string& raw) {
  const auto eq = raw.find('=');
  if (eq == std::string::npos) {
    throw teleop::ConfigError("--sweep must look like key=start:stop:steps");
  }
  SweepSpec s;
  s.key = raw.substr(0, eq);
  const std::string rhs = raw.substr(eq + 1);
  char colon1 = 0;
  char colon2 = 0;
  std::istringstream is(rhs);
  if (!(is >> s.start >> colon1 >> s.stop >> colon2 >> s.steps) ||
      colon1 != ':' || colon2 != ':' || s.steps < 1) {
    throw teleop::ConfigError("--sweep must look like key=start:stop:steps");
  }
  return s;
}

int cmd_sweep(const SourceOpts& src, const std::string& sweep_raw,
              const std::string& out_path) {
  const SweepSpec spec = parse_sweep(sweep_raw);
  const teleop::ScenarioConfig base = resolve_config(src);

  struct Point {
    double value;
    double max_xi_p;
    double max_xi_v;
    double margin;
    bool aborted;
  };

  auto run_point = [&](double value) -> Point {
    char vbuf[32];
    std::snprintf(vbuf, sizeof(vbuf), "%.17g", value);
    teleop::ScenarioConfig cfg = teleop::apply_overrides(
        base, {spec.key + "=" + std::string(vbuf)});
    cfg.validate();
    const teleop::DelayRobustnessReport rep = teleop::delay_robustness_report(
        cfg.channel, cfg.op.m_h, cfg.op.d_h, cfg.op.k_h, cfg.env.m_e,
        cfg.env.d_e, cfg.env.k_e);
    double margin = rep.master[0].margin;
    for (int ax = 0; ax < 2; ++ax) {
      margin = std::min(margin, rep.master[ax].margin);
      margin = std::min(margin, rep.slave[ax].margin);
    }
    Point p{value, 0.0, 0.0, margin, false};
    try {
      const teleop::TraceLog log = teleop::run_scenario(cfg);
      const teleop::RunSummary s = teleop::summarize(log, cfg);
      p.max_xi_p = s.max_xi_p;
      p.max_xi_v = s.max_xi_v;
    } catch (const teleop::NumericalAbort&) {
      p.aborted = true;
    }
    return p;
  };

  std::vector<std::future<Point>> futures;
  futures.reserve(spec.steps);
  for (int i = 0; i < spec.steps; ++i) {
    const double value =
        spec.steps == 1
            ? spec.start
            : spec.start + (spec.stop - spec.start) * i / (spec.steps - 1);
    futures.push_back(std::async(std::launch::async, run_point, value));
  }

  std::ostringstream os;
  os << spec.key << ",max_xi_p,max_xi_v,stability_margin,aborted\n";
  for (auto& f : futures) {
    const Point p = f.get();
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d\n", p.value,
                  p.max_xi_p, p.max_xi_v, p.margin, p.aborted ? 1 : 0);
    os << buf;
  }
  if (out_path.empty()) {
    std::cout << os.str();
  } else {
    write_text_atomic(out_path, os.str());
    std::cout << "wrote sweep of " << spec.key << " (" << spec.steps
              << " points) to " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_validate(const SourceOpts& src) {
  const teleop::ScenarioConfig cfg = resolve_config(src);
  std::cout << "config ok: " << cfg.steps() << " steps at dt = " << cfg.dt
            << " s, delay " << cfg.channel.delay_steps(cfg.dt) << " steps\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"force-sensor-less bilateral teleoperation simulator"};
  app.require_subcommand(1);

  SourceOpts run_src;
  std::string run_out = "trace.csv";
  CLI::App* run = app.add_subcommand("run", "run a scenario, write the trace CSV");
  add_source_opts(run, run_src);
  run->add_option("--out", run_out, "output CSV path");

  std::string preset_name;
  std::string preset_out;
  CLI::App* preset =
      app.add_subcommand("preset", "print or write a preset scenario config");
  preset->add_option("name", preset_name, "exp1, exp2 or exp3")->required();
  preset->add_option("--out", preset_out, "write to file instead of stdout");

  SourceOpts an_src;
  std::string an_out;
  CLI::App* analyze = app.add_subcommand(
      "analyze-stability", "closed-form delay-robustness verdicts");
  add_source_opts(analyze, an_src);
  analyze->add_option("--out", an_out, "machine-readable CSV output");

  SourceOpts sw_src;
  std::string sw_raw;
  std::string sw_out;
  CLI::App* sweep =
      app.add_subcommand("sweep", "run a scenario per grid point of one key");
  add_source_opts(sweep, sw_src);
  sweep->add_option("--sweep", sw_raw, "key=start:stop:steps")->required();
  sweep->add_option("--out", sw_out, "output CSV path");

  SourceOpts val_src;
  CLI::App* validate =
      app.add_subcommand("validate", "parse and validate a config");
  add_source_opts(validate, val_src);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(run_src, run_out);
    if (preset->parsed()) return cmd_preset(preset_name, preset_out);
    if (analyze->parsed()) return cmd_analyze(an_src, an_out);
    if (sweep->parsed()) return cmd_sweep(sw_src, sw_raw, sw_out);
    if (validate->parsed()) return cmd_validate(val_src);
  } catch (const teleop::NumericalAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
