#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "qkdsim/emitter.hpp"
#include "synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("qkdsim_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(QKDSIM_CLI) + " " + args + " 2>" + (workdir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

}  // namespace

TEST_CASE("simulate: success, ordering, determinism, required seed") {
  REQUIRE(run("simulate --scenario deployed-3p5km --seed 9 --n-pulses 2000000 --out " + path("a.json") +
              " --series " + path("a.csv")) == 0);
  REQUIRE(run("simulate --scenario deployed-3p5km --seed 9 --n-pulses 2000000 --out " + path("b.json")) == 0);
  CHECK(slurp(path("a.json")) == slurp(path("b.json")));
  const auto j = json::parse(slurp(path("a.json")));
  CHECK(j["expected"]["qber_da"].get<double>() < j["expected"]["qber_lr"].get<double>());
  CHECK(slurp(path("a.csv")).rfind("window_index,qber,sifted_bps\n", 0) == 0);
  CHECK(run("simulate --scenario deployed-3p5km") == 1);
  CHECK(run("simulate --scenario deployed-3p5km --seed 1 --n-pulses 0") == 1);
  CHECK(run("simulate --scenario no-such-scenario --seed 1") == 1);
  write("bad.cfg", "channel.length_km = 1\nchannel.segments = 0 1 0 0.1\ndevice.eta_det = 2\n");
  CHECK(run("simulate --scenario " + path("bad.cfg") + " --seed 1") == 1);
  CHECK(slurp(path("stderr.txt")).find("eta_det") != std::string::npos);
}

TEST_CASE("keyrate: tally, zero counts, inconsistent input, session input") {
  write("tally.json", R"({"n_key":1e6,"n_check":1e4,"e_key":0.02,"e_check":0.05,"p_key":0.99,"p_det":1e-5,
                          "p_m":1e-9,"duration_s":100,"eps_sec":1e-12,"eps_cor":1e-12,"f":1.16})");
  REQUIRE(run("keyrate --input " + path("tally.json") + " --out " + path("k.json")) == 0);
  auto k = json::parse(slurp(path("k.json")));
  CHECK(k["status"] == "ok");
  CHECK(k["length_bits"].get<long>() > 0);
  CHECK(k["terms"]["log_term"].get<double>() == doctest::Approx(120.589411));

  write("zero.json", R"({"n_key":0,"n_check":0,"e_key":0,"e_check":0,"p_det":1e-5})");
  REQUIRE(run("keyrate --input " + path("zero.json") + " --out " + path("z.json")) == 0);
  k = json::parse(slurp(path("z.json")));
  CHECK(k["length_bits"] == 0);
  CHECK(k["status"] == "no_counts");

  write("neg.json", R"({"n_key":-5,"n_check":1,"e_key":0,"e_check":0,"p_det":1e-5})");
  CHECK(run("keyrate --input " + path("neg.json")) == 1);
  write("broken.json", "{");
  CHECK(run("keyrate --input " + path("broken.json")) == 1);

  REQUIRE(run("simulate --scenario deployed-3p5km --seed 2 --n-pulses 1000000 --out " + path("s.json")) == 0);
  REQUIRE(run("keyrate --input " + path("s.json") + " --out " + path("ks.json")) == 0);
  CHECK(json::parse(slurp(path("ks.json")))["p_det_source"] == "analytic");
  REQUIRE(run("keyrate --empirical-pdet --input " + path("s.json") + " --out " + path("ke.json")) == 0);
  CHECK(json::parse(slurp(path("ke.json")))["p_det_source"] == "empirical");
}

TEST_CASE("keyrate: reconstruction reports both basis assignments") {
  write("rec.json", R"({"nu_rep":80e6,"r_c":4.19e-4,"eta_det":0.375,"p_dark":1e-7,"e0":0.009,"l_c":4.0,
    "l_a":6.2,"l_b":1.7,"eps_sec":1e-12,"eps_cor":1e-12,"f":1.16,"g2_zero":0.323,
    "reconstruct":{"sifted_bps":1349.6,"duration_s":25200,"qber_da":0.017,"qber_lr":0.083,"p_key":0.997}})");
  REQUIRE(run("keyrate --input " + path("rec.json") + " --out " + path("r.json")) == 0);
  const auto r = json::parse(slurp(path("r.json")));
  CHECK(r.contains("key_basis_DA"));
  CHECK(r.contains("key_basis_LR"));
  CHECK(r["default"] == r["key_basis_DA"]);
  CHECK(r["key_basis_DA"]["rate_bps"].get<double>() > r["key_basis_LR"]["rate_bps"].get<double>());
}

TEST_CASE("pmd: sweep / fit / estimate") {
  REQUIRE(run("pmd sweep --axis 0,1,0 --dgd 0.117 --state L --start-nm 1306.5 --stop-nm 1313.5 "
              "--reference-nm 1310 --out " + path("t.csv")) == 0);
  REQUIRE(run("pmd fit --input " + path("t.csv") + " --out " + path("f.json")) == 0);
  const auto f = json::parse(slurp(path("f.json")));
  CHECK(f["central_angle_deg"].get<double>() == doctest::Approx(51.5).epsilon(0.01));
  CHECK(f["dgd_ps"].get<double>() == doctest::Approx(0.117).epsilon(0.01));
  REQUIRE(run("pmd estimate --angle-deg 51.5 --span-nm 7 --center-nm 1310 --length-km 3.5 --out " +
              path("e.json")) == 0);
  const auto e = json::parse(slurp(path("e.json")));
  CHECK(e["dgd_ps"].get<double>() == doctest::Approx(0.117).epsilon(0.01));
  CHECK(e["pmd_parameter"].get<double>() == doctest::Approx(0.117 / std::sqrt(3.5)).epsilon(0.01));
  write("two.csv", "wavelength_nm,s1,s2,s3\n1300,1,0,0\n1301,0,1,0\n");
  CHECK(run("pmd fit --input " + path("two.csv")) == 1);
  write("bad.csv", "wavelength_nm,s1,s2,s3\n1300,1,0,0\n1301,0,1\n");
  CHECK(run("pmd fit --input " + path("bad.csv")) == 1);
  CHECK(slurp(path("stderr.txt")).find("line 3") != std::string::npos);
  CHECK(run("pmd sweep --synthesize 0.46,3.5,10") == 1);
}

TEST_CASE("g2: fit-cw and pulsed") {
  {
    std::ofstream out(path("cw.csv"));
    qkdsim::write_histogram_csv(out, synth::cw_histogram({0.5, 1.5, 20.0, 0.28, 0.0}, 2000.0, 100.0, 0.25, 5));
  }
  REQUIRE(run("g2 fit-cw --input " + path("cw.csv") + " --out " + path("cw.json")) == 0);
  CHECK(json::parse(slurp(path("cw.json")))["g2_zero"].get<double>() == doctest::Approx(0.28).epsilon(0.15));
  {
    std::ofstream out(path("p.csv"));
    qkdsim::write_histogram_csv(out, synth::pulsed_histogram(0.323, 2e5, 12.5, 8, 0.05, 0.4, 6));
  }
  REQUIRE(run("g2 pulsed --input " + path("p.csv") + " --rep-period-ns 12.5 --out " + path("p.json")) == 0);
  CHECK(json::parse(slurp(path("p.json")))["g2_zero"].get<double>() == doctest::Approx(0.323).epsilon(0.02));
  write("empty.csv", "");
  CHECK(run("g2 fit-cw --input " + path("empty.csv")) == 1);
  write("flat.csv", "tau_ns,counts\n");
  CHECK(run("g2 pulsed --input " + path("flat.csv")) == 1);
}

TEST_CASE("optimize and rate-curve") {
  REQUIRE(run("optimize --scenario deployed-3p5km --out " + path("o.json") + " --audit " + path("audit.csv") +
              " --rate-curve " + path("rc.csv") + " --losses 0:15:1") == 0);
  const auto o = json::parse(slurp(path("o.json")));
  CHECK(o["positive"] == true);
  CHECK(o["rate_bps"].get<double>() > o["balanced_rate_bps"].get<double>());
  CHECK(slurp(path("audit.csv")).rfind("p_key,rate_bps\n", 0) == 0);
  CHECK(slurp(path("rc.csv")).rfind("loss_db,finite_bps,gllp_bps\n", 0) == 0);
  REQUIRE(run("optimize --scenario deployed-3p5km --duration-s 1e-3 --out " + path("o0.json")) == 0);
  CHECK(json::parse(slurp(path("o0.json")))["status"] == "no positive key anywhere");
  REQUIRE(run("rate-curve --losses 0,5,10 --qber 0.05 --out " + path("c.csv")) == 0);
  CHECK(run("rate-curve --losses 0:x:1") == 1);
  CHECK(run("rate-curve --qber-model nonsense") == 1);
  CHECK(run("rate-curve --format json") == 1);
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
}
