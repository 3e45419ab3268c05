#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <random>
#include <sstream>

#include "vortex/error.hpp"
#include "vortex/io.hpp"
#include "vortex/runs.hpp"
#include "xml_check.hpp"

using namespace vortex;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("vortex-runs-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::set<std::string> files_in(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).string());
  }
  return out;
}

// Every file on disk is in the manifest with a matching hash, and the reverse.
void check_manifest(const fs::path& dir) {
  const auto m = read_manifest(dir);
  std::set<std::string> listed{"manifest.json"};
  for (const auto& f : m.files) {
    CAPTURE(f.path);
    REQUIRE(fs::exists(dir / f.path));
    CHECK(io::sha256_file(dir / f.path) == f.sha256);
    CHECK(fs::file_size(dir / f.path) == f.bytes);
    listed.insert(f.path);
  }
  CHECK(files_in(dir) == listed);
  // no staging directory left beside it
  for (const auto& e : fs::directory_iterator(dir.parent_path()))
    CHECK(e.path().filename().string().find(".staging-") == std::string::npos);
}

RunConfig small(Experiment e, const fs::path& out) {
  RunConfig c;
  c.experiment = e;
  c.seed = 3;
  c.output_dir = out.string();
  c.flow.rtol = c.flow.atol = 1e-8;
  c.data.N = 2;
  c.measure.N = 4;
  c.samples = 2;
  c.grid = {-4.0, 4.0, 0.05};
  c.ladder.t_min = 1.0 / 128;
  c.tau.tau_max = 20;
  c.density = {100.0 / 16, 100.0, 2};
  c.quadrature.tol = 1e-6;
  c.quasi_invariance.tau = 2.0;
  c.holder_growth = {10.0, 5, GrowthPicture::solution};
  if (e == Experiment::corners) {
    c.grid = {-6.0, 6.0, 0.02};
  }
  if (e == Experiment::random_curves) c.samples = 1;
  if (e == Experiment::quasi_invariance) c.samples = 20;
  if (e == Experiment::verify) c.verify.only = {3, 4};
  return c;
}

}  // namespace

TEST_CASE("minimal config is fully populated with defaults") {
  const auto c = parse_config(R"({"experiment": "evolve"})");
  CHECK(c == RunConfig{});
  const auto text = serialize_config(c);
  for (const char* key : {"\"flow\"", "\"measure\"", "\"data\"", "\"ladder\"", "\"tau\"", "\"grid\"", "\"density\"",
                          "\"quadrature\"", "\"quasi_invariance\"", "\"holder_growth\"", "\"holder\"", "\"curve\"",
                          "\"corners\"", "\"verify\"", "\"seed\"", "\"output_dir\"", "\"samples\""})
    CHECK(text.find(key) != std::string::npos);
  CHECK(parse_config("{}").experiment == Experiment::evolve);
}

TEST_CASE("s_prime >= s is refused naming both fields") {
  const auto msg = message_of([] { parse_config(R"({"measure": {"s": 0.5, "s_prime": 0.5}})"); });
  CHECK(msg.find("measure.s_prime") != std::string::npos);
  CHECK(msg.find("measure.s ") != std::string::npos);
  CHECK_THROWS_AS(parse_config(R"({"measure": {"s": 0.4, "s_prime": 0.6}})"), InputError);
  // without validation the structure still parses
  CHECK_NOTHROW(parse_config(R"({"measure": {"s": 0.4, "s_prime": 0.6}})", false));
}

TEST_CASE("config errors carry their location") {
  CHECK(message_of([] { parse_config(R"({"flow": {"rtl": 1e-8}})"); }).find("flow.rtl: unknown key") !=
        std::string::npos);
  CHECK(message_of([] { parse_config(R"({"bogus": 1})"); }).find("bogus: unknown key") != std::string::npos);
  CHECK(message_of([] { parse_config(R"({"flow": {"rtol": "small"}})"); }).find("flow.rtol: expected a number") !=
        std::string::npos);
  CHECK(message_of([] {
          parse_config(R"({"data": {"kind": "explicit", "coefficients": [{"k": 0, "re": 1, "imag": 0}]}})");
        }).find("data.coefficients[0].imag: unknown key") != std::string::npos);
  CHECK(message_of([] { parse_config(R"({"experiment": "nope"})"); }).find("experiment") != std::string::npos);
  CHECK(message_of([] { parse_config(R"({"seed": -4})"); }).find("seed") != std::string::npos);
  CHECK(message_of([] { parse_config(R"({"data": {"kind": "explicit", "N": 1, "coefficients": [{"k": 3}]}})"); })
            .find("data.coefficients[0].k") != std::string::npos);
  // malformed JSON: line and column
  const auto msg = message_of([] { parse_config("{\n  \"seed\": 1,\n  oops\n}", true, "run.json"); });
  CHECK(msg.find("run.json:3:") != std::string::npos);
  CHECK(msg.find("malformed JSON") != std::string::npos);
  CHECK_THROWS_AS(parse_config_file("/nonexistent/vortex.json"), InputError);
}

TEST_CASE("parse(serialize(config)) = config") {
  RunConfig c;
  c.experiment = Experiment::density;
  c.seed = 18446744073709551557ull;
  c.output_dir = "out dir/\"quoted\"";
  c.samples = 7;
  c.flow.rtol = 0.1 + 0.2;  // not a short decimal
  c.flow.atol = 3e-13;
  c.flow.max_step = 1.0 / 3.0;
  c.flow.scheme = Scheme::fixed_rk4;
  c.flow.dealias = false;
  c.flow.linear = true;
  c.flow.renormalized = true;
  c.measure = {0.7, 0.3, 2.5, 12, 0.5};
  c.data.kind = DataKind::explicit_;
  c.data.N = 3;
  c.data.coefficients = {{-3, 0.1, -0.2}, {2, std::nextafter(1.0, 2.0), 1e-300}};
  c.ladder = {2e-3, false, 5};
  c.tau = {333.3, 7};
  c.grid = {-2.5, 7.25, 0.003};
  c.density = {2.0, 256.0, 3};
  c.quadrature = {1e-7, 20};
  c.quasi_invariance = {4.5, 1.1};
  c.holder_growth = {50.0, 9, GrowthPicture::interaction};
  c.holder = {128, 0.125, 0.5};
  c.curve = {0.25, 0.05};
  c.corners = {2.5, 0.3, 5.0};
  c.verify = {SuiteLevel::full, {1, 5}};
  const auto text = serialize_config(c);
  const auto back = parse_config(text);
  CHECK(back == c);
  CHECK(back.flow.rtol == c.flow.rtol);
  CHECK(back.data.coefficients[1].re == c.data.coefficients[1].re);
  CHECK(serialize_config(back) == text);

  // dealias: null means automatic
  RunConfig d;
  CHECK(parse_config(serialize_config(d)).flow.dealias == std::nullopt);
}

TEST_CASE("overrides obey the schema and layer over the file") {
  auto doc = ConfigDocument::from_text(R"({"experiment": "sample", "flow": {"rtol": 1e-9}})");
  doc.set("flow.rtol", "1e-7");
  doc.set_assignment("measure.N=12");
  doc.set("data.kind", "gaussian");  // bare string
  doc.set("output_dir", "runs/a");
  auto c = doc.resolve();
  CHECK(c.flow.rtol == 1e-7);
  CHECK(c.measure.N == 12);
  CHECK(c.data.kind == DataKind::gaussian);
  CHECK(c.output_dir == "runs/a");
  CHECK(c.experiment == Experiment::sample);

  const auto before = doc.text();
  CHECK(message_of([&] { doc.set("flow.rtl", "1"); }).find("flow.rtl") != std::string::npos);
  CHECK(doc.text() == before);
  CHECK_THROWS_AS(doc.set("seed.x", "1"), InputError);
  CHECK_THROWS_AS(doc.set_assignment("no-equals-sign"), InputError);
  CHECK_THROWS_AS(doc.set("measure.N", "\"many\""), InputError);
  // invariants wait for resolve
  doc.set("measure.s_prime", "0.9");
  CHECK_THROWS_AS(doc.resolve(), InputError);
  CHECK_NOTHROW(doc.resolve(false));
}

TEST_CASE("17-digit floats round-trip") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::ldexp(u(gen), int(u(gen)) * 10);
    CHECK(std::strtod(io::format_double(x).c_str(), nullptr) == x);
  }
  CHECK(io::format_double(0.1) == "0.10000000000000001");
  CHECK(io::format_double(NAN) == "nan");
}

TEST_CASE("csv table") {
  io::CsvTable t({"a", "b"});
  t.row({1.5, "x,y"});
  t.row({2, "say \"hi\""});
  CHECK(t.str() == "a,b\n1.5,\"x,y\"\n2,\"say \"\"hi\"\"\"\n");
  CHECK_THROWS_AS(t.row({1.0}), InputError);
  CHECK(t.rows() == 2);
}

TEST_CASE("sha256 test vectors") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("svg output is well-formed with a viewBox") {
  std::vector<std::vector<Vec3>> curves(2);
  for (int i = 0; i <= 200; ++i) {
    const double s = i * 0.05;
    curves[0].push_back(Vec3(std::cos(s), std::sin(s), 0.1 * s));
    curves[1].push_back(Vec3(s, 0.0, std::sin(s)));
  }
  io::PlotStyle st;
  st.title = "a <b> & 'c'";
  std::vector<std::string> labels{"t = 1", "x < 2 & y > 1"};
  const auto proj = io::curve_projections(curves, st, labels);
  REQUIRE(proj.size() == 2);
  CHECK(proj[0].suffix == "xy");
  CHECK(proj[1].suffix == "xz");

  std::vector<io::Series> series{{"one", {1, 2, 4, 8}, {1, 0.5, 0.25, 0.125}, std::nullopt},
                                 {"two \"q\"", {1, 10, 100}, {0.0, 3.0, 30.0}, std::nullopt}};
  series[0].fit = fit_power_law(series[0].x, series[0].y, FitWindow{0, 0});
  std::vector<std::string> docs{proj[0].svg, proj[1].svg, io::svg_loglog(series, st)};
  for (const auto& d : docs) {
    std::unique_ptr<xmlcheck::Element> root;
    REQUIRE_NOTHROW(root = xmlcheck::parse(d));
    CHECK(root->name == "svg");
    CHECK(root->attrs.at("xmlns") == "http://www.w3.org/2000/svg");
    REQUIRE(root->attrs.count("viewBox"));
    std::istringstream vb(root->attrs.at("viewBox"));
    double v[4];
    for (double& x : v) REQUIRE(bool(vb >> x));
    CHECK(v[2] > 0);
    CHECK(v[3] > 0);
    std::vector<const xmlcheck::Element*> lines;
    root->collect("polyline", lines);
    CHECK(!lines.empty());
  }
  // the checker itself rejects broken documents
  CHECK_THROWS(xmlcheck::parse("<svg><g></svg>"));
  CHECK_THROWS(xmlcheck::parse("<svg a=1/>"));
  CHECK_THROWS(xmlcheck::parse("<svg>&bogus;</svg>"));
  CHECK_THROWS(xmlcheck::parse("<svg/><svg/>"));
}

TEST_CASE("a straight curve is one segment per projection") {
  std::vector<std::vector<Vec3>> line(1);
  for (int i = 0; i <= 500; ++i) line[0].push_back(Vec3(0.01 * i, -0.02 * i, 0.005 * i));
  for (const auto& p : io::curve_projections(line, io::PlotStyle{})) {
    const auto root = xmlcheck::parse(p.svg);
    std::vector<const xmlcheck::Element*> lines;
    root->collect("polyline", lines);
    REQUIRE(lines.size() == 1);
    std::istringstream pts(lines[0]->attrs.at("points"));
    std::string tok;
    int n = 0;
    while (pts >> tok) ++n;
    CHECK(n == 2);
  }
}

TEST_CASE("empty data is refused before emission") {
  std::vector<std::vector<Vec3>> none;
  CHECK_THROWS_AS(io::svg_curves(none, 0, 1, io::PlotStyle{}), InputError);
  std::vector<std::vector<Vec3>> hollow(1);
  CHECK_THROWS_AS(io::svg_curves(hollow, 0, 1, io::PlotStyle{}), InputError);
  std::vector<io::Series> zeros{{"z", {1, 2}, {0, 0}, std::nullopt}};
  CHECK_THROWS_AS(io::svg_loglog(zeros, io::PlotStyle{}), InputError);
  RunConfig c;
  c.experiment = Experiment::reconstruct;
  c.ladder.t_min = 1.5;  // no ladder at all
  CHECK_THROWS_AS(c.validate(), InputError);
  c.ladder.t_min = 1.0 / 64;  // dyadic ladder spans under two decades
  CHECK(message_of([&] { c.validate(); }).find("ladder.t_min") != std::string::npos);
  c.ladder.t_min = 1.0 / 128;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("evolve N = 0 writes the closed form") {
  TempDir tmp;
  RunConfig c;
  c.output_dir = (tmp.path / "evolve").string();
  c.data.kind = DataKind::explicit_;
  c.data.N = 0;
  c.data.coefficients = {{0, 0.7, -0.4}};
  c.flow.rtol = c.flow.atol = 1e-12;
  c.tau.tau_max = 100;
  const auto m = run(c);
  REQUIRE(m.exit_code == 0);
  CHECK(m.status == "ok");
  const auto rows = read_csv(tmp.path / "evolve" / "coefficients.csv");
  REQUIRE(rows.size() > 30);
  CHECK(rows[0] == std::vector<std::string>{"t", "k", "re", "im", "abs"});
  const std::complex<double> a(0.7, -0.4);
  double worst = 0.0, tmax = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double t = std::stod(rows[i][0]);
    const std::complex<double> b(std::stod(rows[i][2]), std::stod(rows[i][3]));
    worst = std::max(worst, std::abs(b - a * std::polar(1.0, -std::norm(a) * std::log(t))));
    tmax = std::max(tmax, t);
  }
  CHECK(worst < 1e-8);
  CHECK(tmax == 100.0);
  check_manifest(tmp.path / "evolve");
}

TEST_CASE("reruns give identical hashes; a rerun replaces the previous outputs") {
  TempDir tmp;
  auto c = small(Experiment::sample, tmp.path / "a");
  const auto m1 = run(c);
  c.output_dir = (tmp.path / "b").string();
  const auto m2 = run(c);
  REQUIRE(m1.files.size() == m2.files.size());
  for (std::size_t i = 0; i < m1.files.size(); ++i) {
    CHECK(m1.files[i].path == m2.files[i].path);
    CHECK(m1.files[i].sha256 == m2.files[i].sha256);
  }
  // a different seed changes the data
  c.seed = 4;
  c.output_dir = (tmp.path / "a").string();
  const auto m3 = run(c);
  CHECK(m3.files.front().sha256 != m1.files.front().sha256);
  check_manifest(tmp.path / "a");
  // into the same directory with a different experiment: stale files go
  auto e = small(Experiment::evolve, tmp.path / "a");
  run(e);
  check_manifest(tmp.path / "a");
  CHECK_FALSE(fs::exists(tmp.path / "a" / "samples.csv"));
}

TEST_CASE("output_dir holding foreign files is refused untouched") {
  TempDir tmp;
  fs::create_directories(tmp.path / "o");
  std::ofstream(tmp.path / "o" / "notes.txt") << "mine";
  const auto c = small(Experiment::sample, tmp.path / "o");
  CHECK_THROWS_AS(run(c), IoError);
  CHECK(files_in(tmp.path / "o") == std::set<std::string>{"notes.txt"});
  for (const auto& e : fs::directory_iterator(tmp.path))
    CHECK(e.path().filename().string().find(".staging-") == std::string::npos);
}

TEST_CASE("validation errors write nothing") {
  TempDir tmp;
  auto c = small(Experiment::sample, tmp.path / "v");
  c.measure.s_prime = 0.8;
  CHECK_THROWS_AS(run(c), InputError);
  CHECK_FALSE(fs::exists(tmp.path / "v"));
  CHECK(exit_code_for(InputError("x")) == 1);
  CHECK(exit_code_for(NumericalError("x")) == 2);
  CHECK(exit_code_for(QuadratureError("x", 0, 0)) == 2);
  CHECK(exit_code_for(IoError("x")) == 3);
}

TEST_CASE("a failing stage is recorded and leaves no partial output") {
  TempDir tmp;
  auto c = small(Experiment::density, tmp.path / "d");
  c.quadrature = {1e-15, 1};  // cannot converge
  std::vector<std::string> seen;
  const auto m = run(c, [&](const std::string& stage, const std::string&) { seen.push_back(stage); });
  CHECK(m.exit_code == 2);
  CHECK(m.status == "failed");
  REQUIRE(m.stages.size() == 2);
  CHECK(m.stages[0].status == "failed");
  CHECK(!m.stages[0].error.empty());
  CHECK(m.stages[1].status == "skipped");
  CHECK(m.files.empty());
  CHECK(files_in(tmp.path / "d") == std::set<std::string>{"manifest.json"});
  CHECK(read_manifest(tmp.path / "d").exit_code == 2);
  CHECK(!seen.empty());
}

TEST_CASE("every experiment runs at small size") {
  TempDir tmp;
  for (const auto& name : experiment_names()) {
    CAPTURE(name);
    const auto e = parse_experiment(name);
    const auto dir = tmp.path / name;
    const auto m = run(small(e, dir));
    CHECK(m.exit_code == 0);
    CHECK(m.error == "");
    CHECK(!m.files.empty());
    check_manifest(dir);
    for (const auto& f : m.files) {
      if (fs::path(f.path).extension() != ".svg") continue;
      CAPTURE(f.path);
      std::unique_ptr<xmlcheck::Element> root;
      REQUIRE_NOTHROW(root = xmlcheck::parse(io::read_file(dir / f.path)));
      CHECK(root->attrs.count("viewBox") == 1);
    }
    const auto echo = parse_config(read_manifest(dir).config_json);
    CHECK(echo == small(e, dir));
  }
}
