#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "vortex/vortex.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  vortex_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("version and experiment names") {
  CHECK(std::string(vortex_version()).size() > 0);
  REQUIRE(vortex_experiment_count() == 9);
  CHECK(std::string(vortex_experiment_name(0)) == "evolve");
  CHECK(vortex_experiment_name(vortex_experiment_count()) == nullptr);
}

TEST_CASE("config handle: set, validate, errors") {
  vortex_config* cfg = nullptr;
  REQUIRE(vortex_config_parse(R"({"experiment": "sample"})", &cfg) == VORTEX_OK);
  CHECK(vortex_config_set(cfg, "measure.N", "5") == VORTEX_OK);
  CHECK(vortex_config_set_assignment(cfg, "seed=77") == VORTEX_OK);
  CHECK(vortex_config_validate(cfg) == VORTEX_OK);
  char* text = nullptr;
  REQUIRE(vortex_config_to_json(cfg, &text) == VORTEX_OK);
  const auto json = take(text);
  CHECK(json.find("\"seed\": 77") != std::string::npos);
  CHECK(json.find("\"experiment\": \"sample\"") != std::string::npos);

  CHECK(vortex_config_set(cfg, "measure.bogus", "1") == VORTEX_ERR_INPUT);
  CHECK(std::string(vortex_last_error()).find("measure.bogus") != std::string::npos);
  CHECK(vortex_config_set(cfg, "measure.s_prime", "0.75") == VORTEX_OK);
  CHECK(vortex_config_validate(cfg) == VORTEX_ERR_INPUT);
  CHECK(std::string(vortex_last_error()).find("measure.s_prime") != std::string::npos);
  vortex_config_free(cfg);

  vortex_config* bad = nullptr;
  CHECK(vortex_config_parse("{\"seed\": ", &bad) == VORTEX_ERR_INPUT);
  CHECK(bad == nullptr);
  CHECK(vortex_config_load("/nonexistent/x.json", &bad) == VORTEX_ERR_INPUT);
  CHECK(vortex_config_parse(nullptr, &bad) == VORTEX_ERR_INPUT);
  vortex_config_free(nullptr);
}

TEST_CASE("state handle follows the single-mode closed form") {
  vortex_state* s = nullptr;
  REQUIRE(vortex_state_new(0, 1.0, &s) == VORTEX_OK);
  CHECK(vortex_state_set(s, 0, 0.7, -0.4) == VORTEX_OK);
  CHECK(vortex_state_set(s, 1, 1.0, 0.0) == VORTEX_ERR_INPUT);
  REQUIRE(vortex_state_evolve(s, 50.0, 1e-12, 1e-12) == VORTEX_OK);
  double t = 0, re = 0, im = 0, m = 0;
  int N = -1;
  CHECK(vortex_state_time(s, &t) == VORTEX_OK);
  CHECK(t == 50.0);
  CHECK(vortex_state_modes(s, &N) == VORTEX_OK);
  CHECK(N == 0);
  CHECK(vortex_state_get(s, 0, &re, &im) == VORTEX_OK);
  const std::complex<double> a(0.7, -0.4);
  const auto expect = a * std::polar(1.0, -std::norm(a) * std::log(50.0));
  CHECK(std::abs(std::complex<double>(re, im) - expect) < 1e-8);
  CHECK(vortex_state_mass(s, &m) == VORTEX_OK);
  CHECK(m == doctest::Approx(std::norm(a)).epsilon(1e-10));
  CHECK(vortex_state_evolve(s, 0.5, 1e-10, 1e-10) == VORTEX_ERR_INPUT);
  CHECK(vortex_state_evolve(s, 2.0, -1.0, 1e-10) == VORTEX_ERR_INPUT);
  vortex_state_free(s);
  CHECK(vortex_state_new(-1, 1.0, &s) == VORTEX_ERR_INPUT);
}

TEST_CASE("vortex_run reports manifest, exit code and progress") {
  const auto dir = fs::temp_directory_path() / ("vortex-capi-" + std::to_string(::getpid()));
  vortex_config* cfg = nullptr;
  REQUIRE(vortex_config_new(&cfg) == VORTEX_OK);
  const std::string out = "\"" + (dir / "run").string() + "\"";
  REQUIRE(vortex_config_set(cfg, "output_dir", out.c_str()) == VORTEX_OK);
  REQUIRE(vortex_config_set(cfg, "tau.tau_max", "10") == VORTEX_OK);
  REQUIRE(vortex_config_set(cfg, "data.N", "2") == VORTEX_OK);
  std::vector<std::string> stages;
  auto cb = [](const char* stage, const char*, void* user) {
    static_cast<std::vector<std::string>*>(user)->push_back(stage);
  };
  char* manifest = nullptr;
  int code = -1;
  REQUIRE(vortex_run(cfg, cb, &stages, &manifest, &code) == VORTEX_OK);
  CHECK(code == 0);
  const auto m = take(manifest);
  CHECK(m.find("\"coefficients.csv\"") != std::string::npos);
  CHECK(!stages.empty());
  CHECK(fs::exists(dir / "run" / "manifest.json"));

  // foreign file: I/O error, no manifest
  std::error_code ec;
  fs::create_directories(dir / "busy");
  { FILE* f = std::fopen((dir / "busy" / "keep.txt").c_str(), "w"); std::fclose(f); }
  const std::string busy = "\"" + (dir / "busy").string() + "\"";
  REQUIRE(vortex_config_set(cfg, "output_dir", busy.c_str()) == VORTEX_OK);
  manifest = nullptr;
  CHECK(vortex_run(cfg, nullptr, nullptr, &manifest, &code) == VORTEX_ERR_IO);
  CHECK(code == 3);
  CHECK(manifest == nullptr);

  // invariants checked at run time
  REQUIRE(vortex_config_set(cfg, "measure.s_prime", "0.9") == VORTEX_OK);
  CHECK(vortex_run(cfg, nullptr, nullptr, nullptr, &code) == VORTEX_ERR_INPUT);
  CHECK(code == 1);
  vortex_config_free(cfg);
  fs::remove_all(dir, ec);
}
