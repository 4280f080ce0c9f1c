#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "fsi/io.hpp"

namespace fs = std::filesystem;
using fsi::Table;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fsi_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(FSI_CLI) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << body;
  return p;
}

const std::string kSmall =
    "[time]\nsteps = 40\n[mesh]\ncells = 20\nblocks = 4\n[ensemble]\nrealizations = 500\nseed = 5\n"
    "[solver]\nthreads = 2\n";

}  // namespace

TEST_CASE("forward, moments, invert, verify", "[cli]") {
  const auto cfg = write_config("small.ini", kSmall);
  const std::string base = "--config " + cfg.string() + " --out " + (kRoot / "a").string();
  REQUIRE(run(base + " forward") == 0);
  CHECK(fs::exists(kRoot / "a" / "v_trace.csv"));
  CHECK(fs::exists(kRoot / "a" / "ensemble.bin"));
  const Table v = Table::read_file((kRoot / "a" / "v_trace.csv").string(), "v");
  CHECK(v.column("v")[1] > 0.0);
  for (const char* k : {"alpha", "T", "N", "mesh", "seed"}) CHECK(v.header.has(k));

  REQUIRE(run(base + " moments") == 0);
  REQUIRE(run(base + " invert") == 0);
  const Table rec = Table::read_file((kRoot / "a" / "reconstruction.csv").string(), "rec");
  CHECK(rec.rows() == 40);
  CHECK(rec.has_column("g1_true"));

  REQUIRE(run(base + " moments --exact --delta 0") == 0);
  REQUIRE(run(base + " invert") == 0);
  CHECK(slurp(kRoot / "last.log").find("residual") != std::string::npos);
  REQUIRE(run(base + " verify") == 0);
  CHECK(fs::exists(kRoot / "a" / "bounds.csv"));
  CHECK(slurp(kRoot / "a" / "bounds.txt").find("PASS bound_b") != std::string::npos);
}

TEST_CASE("identical config and seed give byte-identical files", "[cli]") {
  const auto cfg = write_config("small.ini", kSmall);
  for (const char* d : {"r1", "r2"}) {
    const std::string base = "--config " + cfg.string() + " --out " + (kRoot / d).string();
    REQUIRE(run(base + " forward") == 0);
    REQUIRE(run(base + " moments") == 0);
  }
  for (const char* f : {"v_trace.csv", "ensemble.bin", "ensemble.csv", "moments.csv"})
    CHECK(slurp(kRoot / "r1" / f) == slurp(kRoot / "r2" / f));
  REQUIRE(run("--config " + cfg.string() + " --out " + (kRoot / "r3").string() + " --seed 6 forward") == 0);
  CHECK(slurp(kRoot / "r1" / "ensemble.bin") != slurp(kRoot / "r3" / "ensemble.bin"));
}

TEST_CASE("single deterministic trajectory", "[cli]") {
  const auto cfg = write_config("det.ini", kSmall + "[signal]\ng2 = zero\n");
  REQUIRE(run("--config " + cfg.string() + " --out " + (kRoot / "det").string() + " --realizations 1 forward") == 0);
  const Table e = Table::read_file((kRoot / "det" / "ensemble.csv").string(), "ens");
  const Table v = Table::read_file((kRoot / "det" / "v_trace.csv").string(), "v");
  CHECK(e.names.size() == 2);  // t, r0
  CHECK(e.rows() == v.rows());
}

TEST_CASE("exit codes", "[cli]") {
  const auto cfg = write_config("small.ini", kSmall);
  const std::string out = " --out " + (kRoot / "e").string();
  CHECK(run("--config " + write_config("bad.ini", "[time]\nalpha = 1.2\n").string() + out + " forward") == 2);
  CHECK(run("--config " + cfg.string() + out + " --solver spectral forward") == 2);
  CHECK(run("--config " + write_config("eta.ini", kSmall + "[verify]\neta = 1\n").string() + out + " verify") == 2);
  CHECK(run("--config " + write_config("x0.ini", kSmall + "[observation]\nx = 0.6\ny = 0.6\n").string() + out +
            " forward") == 2);

  REQUIRE(run("--config " + cfg.string() + out + " forward") == 0);
  REQUIRE(run("--config " + cfg.string() + out + " moments --exact") == 0);
  const auto other = write_config("n80.ini", "[time]\nsteps = 80\n[mesh]\ncells = 20\nblocks = 4\n");
  REQUIRE(run("--config " + other.string() + " --out " + (kRoot / "n80").string() + " --realizations 0 forward") == 0);
  CHECK(run("--config " + cfg.string() + out + " invert --vtrace " + (kRoot / "n80" / "v_trace.csv").string()) == 2);
  CHECK(slurp(kRoot / "last.log").find("'N'") != std::string::npos);

  // A trace with v(x0, t_1) = 0 makes the Volterra system singular.
  {
    const Table good = Table::read_file((kRoot / "e" / "v_trace.csv").string(), "v");
    Table flat = good;
    flat.columns[1][1] = 0.0;
    std::ofstream o(kRoot / "flat.csv");
    flat.write(o);
  }
  CHECK(run("--config " + cfg.string() + out + " invert --vtrace " + (kRoot / "flat.csv").string()) == 3);
  CHECK(slurp(kRoot / "last.log").find("Refine the time step") != std::string::npos);
}

TEST_CASE("basis and studies", "[cli]") {
  const auto cfg = write_config(
      "gms.ini", "[mesh]\ncells = 100\nblocks = 10\n[medium]\ntype = channels\ncontrast = 1000\nseed = 1\n"
                 "[solver]\nkind = gmsfem\nbases = 2\n");
  const std::string base = "--config " + cfg.string() + " --out " + (kRoot / "g").string();
  REQUIRE(run(base + " basis") == 0);
  const Table ev = Table::read_file((kRoot / "g" / "eigenvalues.csv").string(), "eig");
  CHECK(ev.header.get("dof") == "242");
  CHECK(ev.header.get("fine_dof") == "9801");
  CHECK(ev.rows() == 242);
  REQUIRE(run(base + " basis") == 0);
  CHECK(slurp(kRoot / "last.log").find("cache hit") != std::string::npos);
  REQUIRE(run(base + " --bases 1 basis") == 0);
  CHECK(slurp(kRoot / "last.log").find("GMsFEM DOF 121") != std::string::npos);

  REQUIRE(run(base + " study time-order") == 0);
  const Table to = Table::read_file((kRoot / "g" / "study_time_order.csv").string(), "order");
  CHECK(to.column("order").back() == Catch::Approx(1.25).margin(0.1));
  CHECK(run(base + " study nonsense") == 2);
}
