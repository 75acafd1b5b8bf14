#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace ddvar;

namespace {

const char* kMinimal = "nx = 8\nny = 6\nn_steps = 3\nformulation = is4dvar\nobs_surface = 4\n";

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const InvalidArgument& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal config takes the defaults") {
  const ExperimentConfig c = parse_config(std::string("# comment\n\n") + kMinimal);
  CHECK(c.nx == 8);
  CHECK(c.halo == 2);
  CHECK(c.alpha == 1.0);
  CHECK(c.beta_i == 1.0);
  CHECK(c.beta_j == 1.0);
  CHECK(c.gamma_i == 1.0);
  CHECK(c.gamma_j == 1.0);
  CHECK(c.ntile_i == 1);
  CHECK(c.n_t == 1);
  CHECK(!c.is_dd());
  const DDConfig dd = c.dd_config();
  CHECK(dd.weights.alpha == 1.0);
}

TEST_CASE("invalid configs name the offending line and key") {
  const std::string e = error_of(std::string(kMinimal) + "ntile_i = 0\n");
  CHECK(e.find("ntile_i") != std::string::npos);
  CHECK(e.find("line 6") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "ntile_x = 2\n").find("ntile_x") != std::string::npos);
  CHECK(error_of("nx = 8\nny = 6\nformulation = is4dvar\nobs_surface = 4\n").find("n_steps") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "nouter = two\n").find("nouter") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "nx = 9\n").find("nx") != std::string::npos);
  CHECK(error_of("nx = 8\nny = 6\nn_steps = 3\nformulation = 4dvar\nobs_surface = 4\n").find("rbl4dvar") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "halo\n").find("line 6") != std::string::npos);
}

TEST_CASE("config round trip") {
  for (const char* name : {"case1", "case4", "dd", "dd_spacetime", "impact", "burgers"}) {
    const ExperimentConfig c = load_config(std::string(DDVAR_CONFIGS) + "/" + name + ".cfg");
    CHECK_MESSAGE(parse_config(emit_config(c)) == c, name);
    CHECK(emit_config(parse_config(emit_config(c))) == emit_config(c));
  }
  ExperimentConfig odd = parse_config(kMinimal);
  odd.dt = 0.1 + 1e-17;
  odd.sigma_b = 1.0 / 3.0;
  odd.gamma_i = 0.3;
  CHECK(parse_config(emit_config(odd)) == odd);
}

TEST_CASE("experiments are deterministic and fully listed in the manifest") {
  namespace fs = std::filesystem;
  ExperimentConfig c = load_config(std::string(DDVAR_CONFIGS) + "/case1.cfg");
  c.nx = 12;
  c.ny = 10;
  c.obs_surface = 6;
  c.obs_track = 4;
  c.obs_profile = 2;
  std::string out[2] = {"unit_det_a", "unit_det_b"};
  ExperimentSummary s[2];
  for (int run = 0; run < 2; ++run) {
    c.output = out[run];
    s[run] = run_experiment(c);
  }
  CHECK(s[0].j_final < s[0].j_initial);
  CHECK(s[0].j_min == 6.0);
  for (const std::string& f : s[0].files) {
    if (f == "timing.csv" || f.size() < 4 || f.substr(f.size() - 4) != ".csv") continue;
    CHECK_MESSAGE(slurp(fs::path(out[0]) / f) == slurp(fs::path(out[1]) / f), f);
  }
  const nlohmann::json m = nlohmann::json::parse(slurp(fs::path(out[0]) / "manifest.json"));
  CHECK(m["seed"] == c.seed);
  for (const std::string& f : s[0].files) {
    if (f == "manifest.json") continue;
    bool listed = false;
    for (const auto& e : m["files"]) {
      if (e["name"] != f) continue;
      listed = true;
      const std::string body = slurp(fs::path(out[0]) / f);
      CHECK(e["bytes"] == body.size());
      CHECK(e["sha256"] == sha256_hex(body));
    }
    CHECK_MESSAGE(listed, f);
  }
  for (const char* need : {"cost_history.csv", "solver_trace.csv", "timing.csv", "config.cfg"})
    CHECK(fs::exists(fs::path(out[0]) / need));
}

TEST_CASE("rpcg and is4dvar give the same cost history") {
  ExperimentConfig c = load_config(std::string(DDVAR_CONFIGS) + "/case1.cfg");
  c.output = "unit_rpcg";
  c.formulation = "rpcg";
  c.reorthogonalize = true;
  const ExperimentSummary a = run_experiment(c);
  c.formulation = "is4dvar";
  c.output = "unit_is4dvar";
  const ExperimentSummary b = run_experiment(c);
  const std::size_t n = std::min(a.history.size(), b.history.size());
  REQUIRE(n > 10);
  for (std::size_t k = 0; k < n; ++k) CHECK(testing::rel(a.history[k].cost.J, b.history[k].cost.J) <= 1e-8);
}

TEST_CASE("shipped case 1 reduces J by two orders of magnitude") {
  ExperimentConfig c = load_config(std::string(DDVAR_CONFIGS) + "/case1.cfg");
  c.output = "unit_case1";
  const ExperimentSummary s = run_experiment(c);
  CHECK(std::log10(s.j_initial / s.j_final) >= 2.0);
}

TEST_CASE("sha256 of known inputs") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
