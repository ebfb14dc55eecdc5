#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "teleop/trace.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  const fs::path dir = fs::temp_directory_path() / "teleop_cli_test";
  fs::create_directories(dir);
  const fs::path out = dir / "cmd_output.txt";
  const std::string cmd = std::string(TELEOP_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WEXITSTATUS(status);
  std::ifstream is(out);
  std::stringstream buf;
  buf << is.rdbuf();
  r.output = buf.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "teleop_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("run --preset exp1 writes 500 rows per simulated second") {
  const fs::path csv = scratch("exp1_1s.csv");
  const CmdResult r = run_cli("run --preset exp1 --set sim.duration=1.0 --out " +
                              csv.string());
  CHECK(r.exit_code == 0);
  const teleop::TraceLog log = teleop::read_trace_csv_file(csv.string());
  CHECK(log.size() == 500);
}

TEST_CASE("run --preset exp3 reports delay_steps=40") {
  const fs::path csv = scratch("exp3_short.csv");
  const CmdResult r = run_cli(
      "run --preset exp3 --set sim.duration=0.5 --out " + csv.string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("delay_steps=40") != std::string::npos);
}

TEST_CASE("run echoes an overridden kappa_f in the summary") {
  const fs::path csv = scratch("exp1_kf800.csv");
  const CmdResult r =
      run_cli("run --preset exp1 --set channel.kappa_f=800 --set "
              "sim.duration=0.5 --out " +
              csv.string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("kappa_f=800") != std::string::npos);
}

TEST_CASE("preset emits a config that validate accepts") {
  const fs::path cfg = scratch("exp2.ini");
  const CmdResult w = run_cli("preset exp2 --out " + cfg.string());
  CHECK(w.exit_code == 0);
  const CmdResult v = run_cli("validate --config " + cfg.string());
  CHECK(v.exit_code == 0);
  CHECK(v.output.find("config ok") != std::string::npos);
}

TEST_CASE("validation failures exit with code 2") {
  const CmdResult missing = run_cli("run --config /nonexistent.ini");
  CHECK(missing.exit_code == 2);

  const fs::path cfg = scratch("broken.ini");
  {
    const CmdResult w = run_cli("preset exp1 --out " + cfg.string());
    CHECK(w.exit_code == 0);
    std::ofstream os(cfg, std::ios::app);
    os << "\n[channel]\n";  // appending a duplicate key makes parsing fail
    os << "kappa_p = 2\n";
  }
  const CmdResult dup = run_cli("validate --config " + cfg.string());
  CHECK(dup.exit_code == 2);

  const CmdResult bad_override =
      run_cli("validate --preset exp1 --set channel.nonsense=1");
  CHECK(bad_override.exit_code == 2);

  const CmdResult no_source = run_cli("validate");
  CHECK(no_source.exit_code == 2);
}

TEST_CASE("a numerically aborting run exits with code 3") {
  const fs::path csv = scratch("abort.csv");
  const CmdResult r = run_cli(
      "run --preset exp1 --set 'master.k_m=-500 -500' --set sim.duration=5 "
      "--out " +
      csv.string());
  CHECK(r.exit_code == 3);
}

TEST_CASE("analyze-stability prints verdicts and writes machine CSV") {
  const fs::path csv = scratch("stab.csv");
  const CmdResult r =
      run_cli("analyze-stability --preset exp3 --out " + csv.string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("master axis 0") != std::string::npos);
  CHECK(r.output.find("combined: stable") != std::string::npos);

  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "side,axis,stable,margin,a,b,c,condition_value");
  int rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("sweep produces one row per grid point") {
  const fs::path csv = scratch("sweep.csv");
  const CmdResult r = run_cli(
      "sweep --preset exp1 --set sim.duration=0.5 "
      "--sweep channel.kappa_f=300:800:3 --out " +
      csv.string());
  CHECK(r.exit_code == 0);
  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "channel.kappa_f,max_xi_p,max_xi_v,stability_margin,aborted");
  int rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("single-point sweep matches a plain run") {
  const fs::path sweep_csv = scratch("sweep_one.csv");
  const CmdResult s = run_cli(
      "sweep --preset exp1 --set sim.duration=1 "
      "--sweep channel.kappa_f=300:300:1 --out " +
      sweep_csv.string());
  CHECK(s.exit_code == 0);

  const fs::path run_csv = scratch("run_one.csv");
  const CmdResult r = run_cli("run --preset exp1 --set sim.duration=1 --out " +
                              run_csv.string());
  CHECK(r.exit_code == 0);

  // the sweep's max_xi_p must equal the run's summary value
  const teleop::TraceLog log = teleop::read_trace_csv_file(run_csv.string());
  double max_xi_p = 0.0;
  for (const auto& rec : log.records) {
    max_xi_p = std::max(max_xi_p, rec.xi_p.norm());
  }
  std::ifstream is(sweep_csv);
  std::string header;
  std::string row;
  std::getline(is, header);
  std::getline(is, row);
  const auto c1 = row.find(',');
  const auto c2 = row.find(',', c1 + 1);
  const double sweep_xi_p = std::stod(row.substr(c1 + 1, c2 - c1 - 1));
  CHECK(sweep_xi_p == doctest::Approx(max_xi_p).epsilon(1e-12));
}

TEST_CASE("a stiffness sweep emits a monotone stability-margin trend") {
  const fs::path csv = scratch("ke_sweep.csv");
  const CmdResult r = run_cli(
      "sweep --preset exp1 --set sim.duration=0.1 "
      "--sweep 'environment.k_e=100000 100000' --out " + csv.string());
  // vector-valued keys cannot be swept; expect a clean config error
  CHECK(r.exit_code == 2);

  const fs::path csv2 = scratch("ke_sweep2.csv");
  const CmdResult r2 = run_cli(
      "sweep --preset exp1 --set sim.duration=0.1 --set 'environment.k_e="
      "100000 100000' --sweep channel.kappa_f=100:1000:4 --out " +
      csv2.string());
  CHECK(r2.exit_code == 0);
  std::ifstream is(csv2);
  std::string line;
  std::getline(is, line);  // header
  std::vector<double> margins;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    // stability_margin is the fourth column
    std::size_t pos = 0;
    for (int c = 0; c < 3; ++c) pos = line.find(',', pos) + 1;
    margins.push_back(std::stod(line.substr(pos)));
  }
  REQUIRE(margins.size() == 4);
  // higher force scaling stiffens the reflected operator impedance and can
  // only shrink the master-side margin
  for (std::size_t i = 0; i + 1 < margins.size(); ++i) {
    CHECK(margins[i + 1] <= margins[i] + 1e-12);
  }
}

TEST_CASE("a delay sweep at exp3 gains stays bounded when the verdict is "
          "stable") {
  const fs::path csv = scratch("delay_sweep.csv");
  const CmdResult r = run_cli(
      "sweep --preset exp3 --set sim.duration=4 "
      "--sweep channel.delay_T=0:0.2:6 --out " + csv.string());
  CHECK(r.exit_code == 0);
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++rows;
    CHECK(line.back() == '0');  // aborted flag stays clear
    std::size_t pos = 0;
    for (int c = 0; c < 3; ++c) pos = line.find(',', pos) + 1;
    const double margin = std::stod(line.substr(pos));
    CHECK(margin > 0.0);  // analyzer verdict stable at every point
  }
  CHECK(rows == 6);
}

TEST_CASE("streaming flush writes the same rows as the buffered path") {
  const fs::path a = scratch("buffered.csv");
  const fs::path b = scratch("streamed.csv");
  const CmdResult r1 =
      run_cli("run --preset exp1 --set sim.duration=0.5 --out " + a.string());
  const CmdResult r2 = run_cli(
      "run --preset exp1 --set sim.duration=0.5 --set sim.stream_log=1 "
      "--out " + b.string());
  CHECK(r1.exit_code == 0);
  CHECK(r2.exit_code == 0);
  std::ifstream fa(a);
  std::ifstream fb(b);
  std::stringstream sa;
  std::stringstream sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
}
