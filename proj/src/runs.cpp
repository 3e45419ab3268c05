#include "vortex/runs.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include <json.hpp>

#include "vortex/error.hpp"
#include "vortex/io.hpp"
#include "vortex/singularity.hpp"
#include "vortex/verify.hpp"

namespace vortex {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// names

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"evolve",           "reconstruct",   "corners",
                                              "sample",           "density",       "quasi_invariance",
                                              "holder_growth",    "random_curves", "verify"};
  return names;
}

std::string to_string(Experiment e) { return experiment_names()[std::size_t(e)]; }

Experiment parse_experiment(std::string_view name) {
  const auto& names = experiment_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return Experiment(i);
  std::string list;
  for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
  throw InputError("experiment: unknown experiment '" + std::string(name) + "' (expected one of " + list + ")");
}

namespace {

const std::vector<std::pair<DataKind, std::string>> kDataKinds{{DataKind::profile, "profile"},
                                                               {DataKind::gaussian, "gaussian"},
                                                               {DataKind::bf_random, "bf_random"},
                                                               {DataKind::explicit_, "explicit"}};
const std::vector<std::pair<GrowthPicture, std::string>> kPictures{{GrowthPicture::solution, "solution"},
                                                                   {GrowthPicture::interaction, "interaction"}};
const std::vector<std::pair<SuiteLevel, std::string>> kLevels{{SuiteLevel::quick, "quick"},
                                                              {SuiteLevel::full, "full"}};
const std::vector<std::pair<Scheme, std::string>> kSchemes{{Scheme::adaptive_rk, "adaptive_rk"},
                                                           {Scheme::fixed_rk4, "fixed_rk4"}};

template <class E>
std::string enum_name(const std::vector<std::pair<E, std::string>>& table, E v) {
  for (const auto& [e, n] : table)
    if (e == v) return n;
  return "?";
}

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

std::string where(const std::string& path) { return path.empty() ? "config" : path; }

// Reads one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(where(path_) + ": expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const char* key) const { return join_path(path_, key); }

  void number(const char* key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw InputError(path(key) + ": expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw InputError(path(key) + ": must be finite");
    }
  }
  template <class I>
  void integer(const char* key, I& out) {
    if (auto* v = find(key)) {
      if (v->is_number_integer()) {
        if constexpr (std::is_unsigned_v<I>) {
          if (v->is_number_unsigned()) {
            out = I(v->get<std::uint64_t>());
            return;
          }
          throw InputError(path(key) + ": expected a non-negative integer");
        } else {
          const auto x = v->get<std::int64_t>();
          if (x < std::int64_t(std::numeric_limits<I>::min()) || x > std::int64_t(std::numeric_limits<I>::max()))
            throw InputError(path(key) + ": integer out of range");
          out = I(x);
          return;
        }
      }
      throw InputError(path(key) + ": expected an integer");
    }
  }
  void boolean(const char* key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) throw InputError(path(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (auto* v = find(key)) {
      if (!v->is_string()) throw InputError(path(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  template <class E>
  void choice(const char* key, E& out, const std::vector<std::pair<E, std::string>>& table) {
    if (auto* v = find(key)) {
      if (!v->is_string()) throw InputError(path(key) + ": expected a string");
      const auto s = v->get<std::string>();
      std::string list;
      for (const auto& [e, n] : table) {
        if (n == s) {
          out = e;
          return;
        }
        list += (list.empty() ? "" : ", ") + n;
      }
      throw InputError(path(key) + ": unknown value '" + s + "' (expected one of " + list + ")");
    }
  }
  template <class F>
  void object(const char* key, F&& f) {
    if (auto* v = find(key)) {
      ObjectReader sub(*v, path(key));
      f(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InputError(join_path(path_, it.key()) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

RunConfig from_json(const json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  {
    std::string e = to_string(c.experiment);
    r.string("experiment", e);
    c.experiment = parse_experiment(e);
  }
  r.integer("seed", c.seed);
  r.string("output_dir", c.output_dir);
  r.integer("samples", c.samples);
  r.object("flow", [&](ObjectReader& o) {
    o.number("rtol", c.flow.rtol);
    o.number("atol", c.flow.atol);
    o.number("max_step", c.flow.max_step);
    o.choice("scheme", c.flow.scheme, kSchemes);
    if (auto* v = o.find("dealias")) {
      if (v->is_null() || (v->is_string() && v->get<std::string>() == "auto"))
        c.flow.dealias.reset();
      else if (v->is_boolean())
        c.flow.dealias = v->get<bool>();
      else
        throw InputError(o.path("dealias") + ": expected true, false, null or \"auto\"");
    }
    o.boolean("linear", c.flow.linear);
    o.boolean("renormalized", c.flow.renormalized);
  });
  r.object("measure", [&](ObjectReader& o) {
    o.number("s", c.measure.s);
    o.number("s_prime", c.measure.s_prime);
    o.number("M", c.measure.M);
    o.integer("N", c.measure.N);
    o.number("scale", c.measure.scale);
  });
  r.object("data", [&](ObjectReader& o) {
    o.choice("kind", c.data.kind, kDataKinds);
    o.integer("N", c.data.N);
    o.number("amplitude", c.data.amplitude);
    o.number("decay", c.data.decay);
    if (auto* v = o.find("coefficients")) {
      if (!v->is_array()) throw InputError(o.path("coefficients") + ": expected an array");
      c.data.coefficients.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        ObjectReader e((*v)[i], o.path("coefficients") + "[" + std::to_string(i) + "]");
        Coefficient co;
        e.integer("k", co.k);
        e.number("re", co.re);
        e.number("im", co.im);
        e.finish();
        c.data.coefficients.push_back(co);
      }
    }
  });
  r.object("ladder", [&](ObjectReader& o) {
    o.number("t_min", c.ladder.t_min);
    o.boolean("dyadic", c.ladder.dyadic);
    o.integer("per_decade", c.ladder.per_decade);
  });
  r.object("tau", [&](ObjectReader& o) {
    o.number("tau_max", c.tau.tau_max);
    o.integer("per_decade", c.tau.per_decade);
  });
  r.object("grid", [&](ObjectReader& o) {
    o.number("x_min", c.grid.x_min);
    o.number("x_max", c.grid.x_max);
    o.number("dx", c.grid.dx);
  });
  r.object("density", [&](ObjectReader& o) {
    o.number("tau0", c.density.tau0);
    o.number("tau_max", c.density.tau_max);
    o.integer("per_octave", c.density.per_octave);
  });
  r.object("quadrature", [&](ObjectReader& o) {
    o.number("tol", c.quadrature.tol);
    o.integer("max_depth", c.quadrature.max_depth);
  });
  r.object("quasi_invariance", [&](ObjectReader& o) {
    o.number("tau", c.quasi_invariance.tau);
    o.number("radius", c.quasi_invariance.radius);
  });
  r.object("holder_growth", [&](ObjectReader& o) {
    o.number("T", c.holder_growth.T);
    o.integer("checkpoints", c.holder_growth.checkpoints);
    o.choice("picture", c.holder_growth.picture, kPictures);
  });
  r.object("holder", [&](ObjectReader& o) {
    o.integer("points", c.holder.points);
    o.number("span", c.holder.span);
    o.number("x0", c.holder.x0);
  });
  r.object("curve", [&](ObjectReader& o) {
    o.number("time_resolution", c.curve.time_resolution);
    o.number("space_resolution", c.curve.space_resolution);
  });
  r.object("corners", [&](ObjectReader& o) {
    o.number("spacing", c.corners.spacing);
    o.number("window_fraction", c.corners.window_fraction);
    o.number("threshold_deg", c.corners.threshold_deg);
  });
  r.object("verify", [&](ObjectReader& o) {
    o.choice("level", c.verify.level, kLevels);
    if (auto* v = o.find("only")) {
      if (!v->is_array()) throw InputError(o.path("only") + ": expected an array of criterion ids");
      c.verify.only.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer())
          throw InputError(o.path("only") + "[" + std::to_string(i) + "]: expected an integer");
        c.verify.only.push_back((*v)[i].get<int>());
      }
    }
  });
  r.finish();
  return c;
}

json to_json_value(const RunConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["samples"] = c.samples;
  j["flow"] = {{"rtol", c.flow.rtol},
               {"atol", c.flow.atol},
               {"max_step", c.flow.max_step},
               {"scheme", enum_name(kSchemes, c.flow.scheme)},
               {"dealias", c.flow.dealias ? json(*c.flow.dealias) : json(nullptr)},
               {"linear", c.flow.linear},
               {"renormalized", c.flow.renormalized}};
  j["measure"] = {{"s", c.measure.s},
                  {"s_prime", c.measure.s_prime},
                  {"M", c.measure.M},
                  {"N", c.measure.N},
                  {"scale", c.measure.scale}};
  json coeffs = json::array();
  for (const auto& co : c.data.coefficients) coeffs.push_back({{"k", co.k}, {"re", co.re}, {"im", co.im}});
  j["data"] = {{"kind", enum_name(kDataKinds, c.data.kind)},
               {"N", c.data.N},
               {"amplitude", c.data.amplitude},
               {"decay", c.data.decay},
               {"coefficients", coeffs}};
  j["ladder"] = {{"t_min", c.ladder.t_min}, {"dyadic", c.ladder.dyadic}, {"per_decade", c.ladder.per_decade}};
  j["tau"] = {{"tau_max", c.tau.tau_max}, {"per_decade", c.tau.per_decade}};
  j["grid"] = {{"x_min", c.grid.x_min}, {"x_max", c.grid.x_max}, {"dx", c.grid.dx}};
  j["density"] = {{"tau0", c.density.tau0}, {"tau_max", c.density.tau_max}, {"per_octave", c.density.per_octave}};
  j["quadrature"] = {{"tol", c.quadrature.tol}, {"max_depth", c.quadrature.max_depth}};
  j["quasi_invariance"] = {{"tau", c.quasi_invariance.tau}, {"radius", c.quasi_invariance.radius}};
  j["holder_growth"] = {{"T", c.holder_growth.T},
                        {"checkpoints", c.holder_growth.checkpoints},
                        {"picture", enum_name(kPictures, c.holder_growth.picture)}};
  j["holder"] = {{"points", c.holder.points}, {"span", c.holder.span}, {"x0", c.holder.x0}};
  j["curve"] = {{"time_resolution", c.curve.time_resolution}, {"space_resolution", c.curve.space_resolution}};
  j["corners"] = {{"spacing", c.corners.spacing},
                  {"window_fraction", c.corners.window_fraction},
                  {"threshold_deg", c.corners.threshold_deg}};
  j["verify"] = {{"level", enum_name(kLevels, c.verify.level)}, {"only", c.verify.only}};
  return j;
}

json parse_json_text(std::string_view text, std::string_view origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // byte offset -> line:column
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    const auto pos = msg.find("syntax error");
    if (pos != std::string::npos) msg = msg.substr(pos);
    throw InputError(std::string(origin) + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": malformed JSON: " + msg);
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InputError(message);
}

std::string num(double v) { return io::format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------
// config

std::size_t GridSpec::nodes() const {
  if (!(dx > 0.0) || !(x_max > x_min)) return 0;
  return std::size_t(std::llround((x_max - x_min) / dx)) + 1;
}

void RunConfig::validate() const {
  require(!output_dir.empty(), "output_dir: must not be empty");
  require(samples >= 1 && samples <= 1000000, "samples: must lie in [1, 1000000]");
  require(flow.rtol > 0.0 && flow.atol > 0.0, "flow.rtol, flow.atol: must be > 0");
  require(flow.max_step > 0.0, "flow.max_step: must be > 0");

  require(measure.s > 0.0 && measure.s < 1.0, "measure.s: must lie in (0, 1)");
  require(measure.s_prime >= 0.0, "measure.s_prime: must be >= 0");
  require(measure.s_prime < measure.s, "measure.s_prime (" + num(measure.s_prime) +
                                           ") must be less than measure.s (" + num(measure.s) + ")");
  require(measure.M > 0.0, "measure.M: must be > 0");
  require(measure.N >= 0 && measure.N <= 512, "measure.N: must lie in [0, 512]");
  require(measure.scale >= 0.0, "measure.scale: must be >= 0");

  require(data.N >= 0 && data.N <= 512, "data.N: must lie in [0, 512]");
  require(data.decay >= 0.0, "data.decay: must be >= 0");
  if (data.kind == DataKind::explicit_) {
    std::set<int> seen;
    for (std::size_t i = 0; i < data.coefficients.size(); ++i) {
      const auto& c = data.coefficients[i];
      const std::string p = "data.coefficients[" + std::to_string(i) + "]";
      require(std::abs(c.k) <= data.N, p + ".k: |k| exceeds data.N (" + std::to_string(data.N) + ")");
      require(seen.insert(c.k).second, p + ".k: mode " + std::to_string(c.k) + " listed twice");
    }
  }

  require(ladder.t_min > 0.0 && ladder.t_min < 1.0, "ladder.t_min: must lie in (0, 1)");
  require(ladder.per_decade >= 1 && ladder.per_decade <= 64, "ladder.per_decade: must lie in [1, 64]");
  require(tau.tau_max >= 1.0, "tau.tau_max: must be >= 1");
  require(tau.per_decade >= 1 && tau.per_decade <= 256, "tau.per_decade: must lie in [1, 256]");

  require(grid.dx > 0.0, "grid.dx: must be > 0");
  require(grid.x_max > grid.x_min, "grid.x_max (" + num(grid.x_max) + ") must exceed grid.x_min (" +
                                        num(grid.x_min) + ")");
  require(grid.nodes() >= 3 && grid.nodes() <= 2000000, "grid: node count must lie in [3, 2000000]");

  require(density.tau0 >= 1.0, "density.tau0: must be >= 1");
  require(density.tau_max >= 100.0, "density.tau_max: must be >= 100");
  require(density.tau_max >= 4.0 * density.tau0, "density.tau_max must be at least 4 * density.tau0");
  require(density.per_octave >= 1 && density.per_octave <= 64, "density.per_octave: must lie in [1, 64]");
  require(quadrature.tol > 0.0, "quadrature.tol: must be > 0");
  require(quadrature.max_depth >= 1 && quadrature.max_depth <= 60, "quadrature.max_depth: must lie in [1, 60]");
  require(quasi_invariance.tau >= 1.0, "quasi_invariance.tau: must be >= 1");
  require(quasi_invariance.radius > 0.0, "quasi_invariance.radius: must be > 0");
  require(holder_growth.T > 1.0 && holder_growth.T <= 1000.0, "holder_growth.T: must lie in (1, 1000]");
  require(holder_growth.checkpoints >= 2 && holder_growth.checkpoints <= 10000,
          "holder_growth.checkpoints: must lie in [2, 10000]");
  require(holder.points >= 64, "holder.points: must be >= 64");
  require(holder.span > 0.0 && holder.span <= 1.0, "holder.span: must lie in (0, 1]");
  require(curve.time_resolution > 0.0, "curve.time_resolution: must be > 0");
  require(curve.space_resolution > 0.0, "curve.space_resolution: must be > 0");
  require(corners.spacing > 0.0, "corners.spacing: must be > 0");
  require(corners.window_fraction > 0.0 && corners.window_fraction <= 0.5,
          "corners.window_fraction: must lie in (0, 0.5]");
  require(corners.threshold_deg > 0.0 && corners.threshold_deg < 180.0,
          "corners.threshold_deg: must lie in (0, 180)");
  for (std::size_t i = 0; i < verify.only.size(); ++i)
    require(verify.only[i] >= 1 && verify.only[i] <= int(invariant_checks().size()),
            "verify.only[" + std::to_string(i) + "]: no criterion " + std::to_string(verify.only[i]));

  const bool on_line = experiment == Experiment::reconstruct || experiment == Experiment::corners ||
                       experiment == Experiment::random_curves;
  if (on_line)
    require(holder.x0 >= grid.x_min && holder.x0 <= grid.x_max,
            "holder.x0 (" + num(holder.x0) + ") must lie in [grid.x_min, grid.x_max]");
  if (on_line) {
    const auto t = time_ladder();
    require(t.back() <= 1e-2 * t.front(), "ladder.t_min: the ladder stops at t = " + num(t.back()) +
                                               "; the limit fit needs two decades below t = 1");
  }
  if (experiment == Experiment::random_curves)
    require(ladder.t_min >= 1e-3, "ladder.t_min: random_curves needs t_min >= 0.001");
  if (experiment == Experiment::corners)
    require(ladder.t_min <= 1e-2, "ladder.t_min: corners needs t_min <= 0.01 (tau ladder to 100)");
  if (experiment == Experiment::quasi_invariance) require(samples >= 2, "samples: quasi_invariance needs >= 2");
}

MeasureParams RunConfig::measure_params() const {
  MeasureParams p;
  p.s = measure.s;
  p.M = measure.M;
  p.N = measure.N;
  p.seed = seed;
  p.scale = measure.scale;
  return p;
}

QuadratureConfig RunConfig::quadrature_config() const { return QuadratureConfig{quadrature.tol, quadrature.max_depth}; }

CurveOptions RunConfig::curve_options() const {
  CurveOptions o;
  o.time_resolution = curve.time_resolution;
  o.space_resolution = curve.space_resolution;
  return o;
}

std::vector<double> RunConfig::grid_nodes() const { return uniform_grid(grid.x_min, grid.dx, grid.nodes()); }

std::vector<double> RunConfig::time_ladder() const {
  if (ladder.dyadic) return dyadic_ladder(ladder.t_min);
  const double decades = -std::log10(ladder.t_min);
  const int n = std::max(1, int(std::ceil(decades * ladder.per_decade - 1e-9)));
  std::vector<double> t;
  for (int k = 0; k <= n; ++k) t.push_back(std::pow(ladder.t_min, double(k) / n));
  t.back() = ladder.t_min;
  return t;
}

std::vector<double> RunConfig::tau_ladder() const {
  std::vector<double> t{1.0};
  if (tau.tau_max <= 1.0) return t;
  const int n = std::max(1, int(std::ceil(std::log10(tau.tau_max) * tau.per_decade - 1e-9)));
  for (int k = 1; k <= n; ++k) t.push_back(std::pow(tau.tau_max, double(k) / n));
  t.back() = tau.tau_max;
  return t;
}

CoefficientState RunConfig::initial_state() const {
  switch (data.kind) {
    case DataKind::profile: {
      CoefficientState s(1.0, data.N);
      for (int j = -data.N; j <= data.N; ++j)
        s.at(j) = std::polar(data.amplitude * std::pow(1.0 + std::abs(j), -data.decay), double(j));
      return s;
    }
    case DataKind::gaussian:
      return sample_state(measure_params(), 0);
    case DataKind::bf_random:
      return randomize_bf_data(measure_params(), 0);
    case DataKind::explicit_: {
      CoefficientState s(1.0, data.N);
      for (const auto& c : data.coefficients) s.at(c.k) = cplx(c.re, c.im);
      return s;
    }
  }
  throw InputError("data.kind: unhandled");
}

bool operator==(const RunConfig& a, const RunConfig& b) { return to_json_value(a) == to_json_value(b); }

RunConfig parse_config(std::string_view json_text, bool validate, std::string_view origin) {
  const auto c = from_json(parse_json_text(json_text, origin));
  if (validate) c.validate();
  return c;
}

RunConfig parse_config_file(const fs::path& path, bool validate) {
  if (!fs::exists(path)) throw InputError(path.string() + ": config file does not exist");
  return parse_config(io::read_file(path), validate, path.string());
}

std::string serialize_config(const RunConfig& config) { return to_json_value(config).dump(2) + "\n"; }

struct ConfigDocument::Impl {
  json doc = json::object();
  std::string origin = "config";
};

ConfigDocument::ConfigDocument() : impl_(std::make_unique<Impl>()) {}
ConfigDocument::~ConfigDocument() = default;
ConfigDocument::ConfigDocument(const ConfigDocument& o) : impl_(std::make_unique<Impl>(*o.impl_)) {}
ConfigDocument& ConfigDocument::operator=(const ConfigDocument& o) {
  *impl_ = *o.impl_;
  return *this;
}

ConfigDocument ConfigDocument::from_text(std::string_view text, std::string_view origin) {
  ConfigDocument d;
  d.impl_->doc = parse_json_text(text, origin);
  d.impl_->origin = origin;
  from_json(d.impl_->doc);  // schema check now, invariants at resolve()
  return d;
}

ConfigDocument ConfigDocument::from_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError(path.string() + ": config file does not exist");
  return from_text(io::read_file(path), path.string());
}

void ConfigDocument::set(std::string_view key, std::string_view value) {
  if (key.empty()) throw InputError("--set: empty key");
  json v;
  try {
    v = json::parse(value.begin(), value.end());
  } catch (const json::parse_error&) {
    v = std::string(value);
  }
  json next = impl_->doc;
  json* node = &next;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part(key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (part.empty()) throw InputError("--set " + std::string(key) + ": empty path component");
    walked = join_path(walked, part);
    if (!node->is_object()) throw InputError(walked + ": parent is not an object");
    if (dot == std::string_view::npos) {
      (*node)[part] = v;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
  from_json(next);
  impl_->doc = std::move(next);
}

void ConfigDocument::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw InputError("--set " + std::string(assignment) + ": expected key=value");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig ConfigDocument::resolve(bool validate) const {
  auto c = from_json(impl_->doc);
  if (validate) c.validate();
  return c;
}

std::string ConfigDocument::text() const { return impl_->doc.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// manifest

std::string RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["experiment"] = experiment;
  json cfg;
  try {
    cfg = json::parse(config_json);
  } catch (const json::parse_error&) {
    cfg = config_json;
  }
  j["config"] = cfg;
  j["started"] = started;
  j["finished"] = finished;
  j["wall_seconds"] = wall_seconds;
  j["status"] = status;
  j["exit_code"] = exit_code;
  if (!error.empty()) j["error"] = error;
  json st = json::array();
  for (const auto& s : stages) {
    json e = {{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}, {"outputs", s.outputs}};
    if (!s.error.empty()) e["error"] = s.error;
    st.push_back(e);
  }
  j["stages"] = st;
  json files = json::array();
  for (const auto& f : this->files) files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  j["files"] = files;
  return j.dump(2) + "\n";
}

RunManifest read_manifest(const fs::path& output_dir) {
  const auto j = parse_json_text(io::read_file(output_dir / "manifest.json"), "manifest.json");
  RunManifest m;
  m.output_dir = output_dir;
  m.version = j.value("version", "");
  m.experiment = j.value("experiment", "");
  if (j.contains("config")) m.config_json = j["config"].dump(2) + "\n";
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.wall_seconds = j.value("wall_seconds", 0.0);
  m.status = j.value("status", "");
  m.exit_code = j.value("exit_code", 0);
  m.error = j.value("error", "");
  for (const auto& s : j.value("stages", json::array())) {
    StageRecord r;
    r.name = s.value("name", "");
    r.status = s.value("status", "");
    r.seconds = s.value("seconds", 0.0);
    r.outputs = s.value("outputs", std::vector<std::string>{});
    r.error = s.value("error", "");
    m.stages.push_back(r);
  }
  for (const auto& f : j.value("files", json::array()))
    m.files.push_back(FileRecord{f.value("path", ""), f.value("bytes", std::uintmax_t(0)), f.value("sha256", "")});
  return m;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e)) return 1;
  if (dynamic_cast<const NumericalError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
  return 4;
}

// ---------------------------------------------------------------------------
// experiments

namespace {

struct Context {
  const RunConfig& config;
  const ProgressFn& progress;
  fs::path staging;
  std::vector<std::string>* outputs = nullptr;
  std::set<std::string> written;
  // verify reports failed checks without discarding its outputs
  int soft_exit = 0;
  std::string soft_error;

  void say(const std::string& stage, const std::string& msg) const {
    if (progress) progress(stage, msg);
  }
  void write(const std::string& name, const std::string& content) {
    if (!written.insert(name).second) throw std::logic_error("output written twice: " + name);
    std::ofstream out(staging / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (staging / name).string());
    out.write(content.data(), std::streamsize(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + (staging / name).string());
    outputs->push_back(name);
  }
  void json_file(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
};

struct Stage {
  std::string name;
  std::function<void(Context&)> fn;
};

json fit_json(const RateFit& f) {
  json j = {{"exponent", f.exponent}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
            {"t_lo", f.t_lo},         {"t_hi", f.t_hi},           {"points", f.points},
            {"reliable", f.reliable}, {"exact_constant", f.exact_constant}};
  if (!f.note.empty()) j["note"] = f.note;
  return j;
}

// At most n entries of v, evenly spread, ends included.
std::vector<std::size_t> spread(std::size_t size, std::size_t n) {
  std::vector<std::size_t> idx;
  if (size == 0) return idx;
  if (size <= n) {
    for (std::size_t i = 0; i < size; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t k = 0; k < n; ++k) idx.push_back(std::size_t(std::llround(double(k) * (size - 1) / (n - 1))));
  return idx;
}

std::string tlabel(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t = %.4g", t);
  return buf;
}

void write_curves(Context& ctx, const std::string& stem, const std::string& title,
                  const std::vector<std::vector<Vec3>>& curves, const std::vector<std::string>& labels) {
  io::PlotStyle style;
  style.title = title;
  for (const auto& p : io::curve_projections(curves, style, labels))
    ctx.write(stem + "_" + p.suffix + ".svg", p.svg);
}

std::vector<Stage> evolve_stages(const RunConfig&) {
  auto traj = std::make_shared<TrajectoryRecord>();
  return {
      {"flow",
       [traj](Context& ctx) {
         const auto s0 = ctx.config.initial_state();
         const auto taus = ctx.config.tau_ladder();
         ctx.say("flow", "N = " + std::to_string(s0.N) + ", " + std::to_string(taus.size()) + " times to t = " +
                             num(taus.back()));
         *traj = evolve_dense(s0, taus, ctx.config.flow);
       }},
      {"write",
       [traj](Context& ctx) {
         const auto& tr = *traj;
         io::CsvTable coeffs({"t", "k", "re", "im", "abs"});
         io::CsvTable mass_csv({"t", "mass", "drift"});
         const double m0 = tr.mass_series.front();
         double drift = 0.0;
         for (std::size_t i = 0; i < tr.times.size(); ++i) {
           const auto& s = tr.states[i];
           for (int k = -s.N; k <= s.N; ++k)
             coeffs.row({tr.times[i], k, s.at(k).real(), s.at(k).imag(), std::abs(s.at(k))});
           mass_csv.row({tr.times[i], tr.mass_series[i], tr.mass_series[i] - m0});
           drift = std::max(drift, std::abs(tr.mass_series[i] - m0));
         }
         ctx.write("coefficients.csv", coeffs.str());
         ctx.write("mass.csv", mass_csv.str());
         const int N = tr.states.front().N;
         std::vector<io::Series> series;
         for (int a = 0; a <= N && series.size() < 8; ++a) {
           for (int k : {a, -a}) {
             if (a == 0 && k < 0) continue;
             if (series.size() >= 8) break;
             io::Series s{"k = " + std::to_string(k), {}, {}, std::nullopt};
             for (std::size_t i = 0; i < tr.times.size(); ++i) {
               s.x.push_back(tr.times[i]);
               s.y.push_back(std::abs(tr.states[i].at(k)));
             }
             series.push_back(std::move(s));
           }
         }
         json summary = {{"N", N}, {"mass", m0}, {"max_mass_drift", drift}, {"t_final", tr.times.back()}};
         bool any = false;
         for (const auto& s : series)
           for (double y : s.y) any = any || y > 0.0;
         if (any) {
           io::PlotStyle st{"|B_k(t)|", "t", "|B_k|"};
           ctx.write("modes.svg", io::svg_loglog(series, st));
         } else {
           summary["plot"] = "skipped: all coefficients are zero";
         }
         ctx.json_file("summary.json", summary);
       }},
  };
}

struct CurveWork {
  CurveFamily family;
  CurveLimit limit;
  std::vector<double> grid;
};

std::vector<Stage> reconstruct_stages(const RunConfig&) {
  auto w = std::make_shared<CurveWork>();
  return {
      {"curves",
       [w](Context& ctx) {
         const auto& c = ctx.config;
         w->grid = c.grid_nodes();
         const auto times = c.time_ladder();
         Anchor anchor;
         anchor.x0 = c.holder.x0;
         auto opt = c.curve_options();
         opt.keep_frames = true;
         ctx.say("curves", std::to_string(times.size()) + " times, " + std::to_string(w->grid.size()) + " nodes");
         w->family = reconstruct_curve(c.initial_state(), times, w->grid, anchor, c.flow, opt);
       }},
      {"limit", [w](Context& ctx) {
         w->limit = curve_limit(w->family);
         ctx.say("limit", "sqrt(t) fit exponent " + num(w->limit.fit.exponent));
       }},
      {"write",
       [w](Context& ctx) {
         const auto& f = w->family;
         const double dx = ctx.config.grid.dx;
         io::CsvTable pts({"t", "x", "X", "Y", "Z"});
         io::CsvTable quality({"t", "orthonormality_defect", "arclength_defect"});
         double worst_orth = 0.0, worst_arc = 0.0;
         for (std::size_t i = 0; i < f.times.size(); ++i) {
           for (std::size_t m = 0; m < f.x_nodes.size(); ++m) {
             const auto& p = f.points[i][m];
             pts.row({f.times[i], f.x_nodes[m], p[0], p[1], p[2]});
           }
           const double o = f.frames.empty() ? 0.0 : orthonormality_defect(f.frames[i]);
           const double a = arclength_defect(f.points[i], dx);
           worst_orth = std::max(worst_orth, o);
           worst_arc = std::max(worst_arc, a);
           quality.row({f.times[i], o, a});
         }
         ctx.write("curves.csv", pts.str());
         ctx.write("quality.csv", quality.str());
         io::CsvTable conv({"t", "sup_distance"});
         for (std::size_t i = 0; i < w->limit.times.size(); ++i) conv.row({w->limit.times[i], w->limit.distances[i]});
         ctx.write("convergence.csv", conv.str());
         io::CsvTable lim({"x", "X", "Y", "Z"});
         for (std::size_t m = 0; m < f.x_nodes.size(); ++m)
           lim.row({f.x_nodes[m], w->limit.limit[m][0], w->limit.limit[m][1], w->limit.limit[m][2]});
         ctx.write("limit.csv", lim.str());

         std::vector<std::vector<Vec3>> curves;
         std::vector<std::string> labels;
         for (auto i : spread(f.times.size(), 5)) {
           curves.push_back(f.points[i]);
           labels.push_back(tlabel(f.times[i]));
         }
         curves.push_back(w->limit.limit);
         labels.push_back("t -> 0");
         write_curves(ctx, "curves", "binormal-flow curves", curves, labels);
         json summary = {{"times", f.times.size()},
                         {"nodes", f.x_nodes.size()},
                         {"sqrt_t_fit", fit_json(w->limit.fit)},
                         {"max_orthonormality_defect", worst_orth},
                         {"max_arclength_defect", worst_arc}};
         std::vector<io::Series> s{{"sup |chi(t) - chi(0)|", w->limit.times, w->limit.distances, w->limit.fit}};
         if (!w->limit.fit.exact_constant)
           ctx.write("convergence.svg", io::svg_loglog(s, io::PlotStyle{"convergence to the limit", "t", "sup_x distance"}));
         else
           summary["plot"] = "skipped: the curve does not move";
         ctx.json_file("summary.json", summary);
       }},
  };
}

struct CornerWork {
  CurveWork curve;
  AlphaFit alpha;
  std::vector<Corner> corners;
};

std::vector<Stage> corner_stages(const RunConfig&) {
  auto w = std::make_shared<CornerWork>();
  return {
      {"curves",
       [w](Context& ctx) {
         const auto& c = ctx.config;
         w->curve.grid = c.grid_nodes();
         Anchor anchor;
         anchor.x0 = c.holder.x0;
         w->curve.family = reconstruct_curve(c.initial_state(), c.time_ladder(), w->curve.grid, anchor, c.flow,
                                             c.curve_options());
         w->curve.limit = curve_limit(w->curve.family);
       }},
      {"alpha",
       [w](Context& ctx) {
         const auto& c = ctx.config;
         std::vector<double> taus;
         const double tmax = 1.0 / c.ladder.t_min;
         const int n = int(std::ceil(std::log10(tmax) * 16 - 1e-9));
         for (int k = 0; k <= n; ++k) taus.push_back(std::pow(tmax, double(k) / n));
         taus.back() = tmax;
         ctx.say("alpha", "tau ladder to " + num(tmax));
         w->alpha = extract_alpha(evolve_dense(c.initial_state(), taus, c.flow));
       }},
      {"corners",
       [w](Context& ctx) {
         const auto& c = ctx.config;
         CornerOptions o;
         o.spacing = c.corners.spacing;
         o.window_fraction = c.corners.window_fraction;
         o.threshold = c.corners.threshold_deg * std::numbers::pi / 180.0;
         w->corners = polygon_corners(w->curve.grid, w->curve.limit.limit, o);
         ctx.say("corners", std::to_string(w->corners.size()) + " corners");
       }},
      {"write",
       [w](Context& ctx) {
         const int N = int(w->alpha.alpha.size() / 2);
         const double deg = 180.0 / std::numbers::pi;
         io::CsvTable ct({"location", "nearest_j", "turning_deg", "interior_deg", "alpha_abs", "alpha_re", "alpha_im"});
         json list = json::array();
         for (const auto& k : w->corners) {
           const int j = int(std::lround(k.location / 2.0));
           const cplx a = std::abs(j) <= N ? w->alpha.alpha[std::size_t(j + N)] : cplx(0.0);
           ct.row({k.location, j, k.turning_angle * deg, k.interior_angle * deg, std::abs(a), a.real(), a.imag()});
           list.push_back({{"location", k.location}, {"nearest_j", j}, {"turning_deg", k.turning_angle * deg},
                           {"alpha_abs", std::abs(a)}});
         }
         ctx.write("corners.csv", ct.str());
         io::CsvTable at({"j", "re", "im", "abs"});
         for (int j = -N; j <= N; ++j) {
           const cplx a = w->alpha.alpha[std::size_t(j + N)];
           at.row({j, a.real(), a.imag(), std::abs(a)});
         }
         ctx.write("alpha.csv", at.str());
         io::CsvTable rt({"t", "residual"});
         for (std::size_t i = 0; i < w->alpha.residual_t.size(); ++i)
           rt.row({w->alpha.residual_t[i], w->alpha.residual[i]});
         ctx.write("alpha_residual.csv", rt.str());
         const auto& f = w->curve.family;
         io::CsvTable lim({"x", "X", "Y", "Z"});
         for (std::size_t m = 0; m < f.x_nodes.size(); ++m) {
           const auto& p = w->curve.limit.limit[m];
           lim.row({f.x_nodes[m], p[0], p[1], p[2]});
         }
         ctx.write("limit.csv", lim.str());
         write_curves(ctx, "limit", "limit curve", {w->curve.limit.limit}, {"t -> 0"});
         ctx.json_file("summary.json", {{"corners", list},
                                        {"mu", w->alpha.mu},
                                        {"alpha_mass_defect", w->alpha.mass_defect},
                                        {"alpha_residual_fit", fit_json(w->alpha.slope)},
                                        {"sqrt_t_fit", fit_json(w->curve.limit.fit)}});
       }},
  };
}

std::vector<Stage> sample_stages(const RunConfig&) {
  auto batch = std::make_shared<SampleBatch>();
  return {
      {"draw", [batch](Context& ctx) { *batch = sample_gamma(ctx.config.measure_params(), ctx.config.samples); }},
      {"write",
       [batch](Context& ctx) {
         const auto& c = ctx.config;
         const auto& b = *batch;
         const int N = c.measure.N;
         io::CsvTable st({"index", "accepted", "mass", "norm_s_prime"});
         io::CsvTable co({"index", "k", "re", "im"});
         std::vector<double> power(std::size_t(N) + 1, 0.0);
         double mean_mass = 0.0;
         for (std::size_t i = 0; i < b.states.size(); ++i) {
           const auto& s = b.states[i];
           const double m = mass(s);
           mean_mass += m / double(b.states.size());
           st.row({(unsigned long long)i, bool(b.accepted[i]), m, weighted_norm(s, c.measure.s_prime)});
           for (int k = -N; k <= N; ++k) {
             co.row({(unsigned long long)i, k, s.at(k).real(), s.at(k).imag()});
             power[std::size_t(std::abs(k))] += std::norm(s.at(k)) / double(b.states.size()) / (k == 0 ? 1.0 : 2.0);
           }
         }
         ctx.write("samples.csv", st.str());
         ctx.write("coefficients.csv", co.str());
         io::CsvTable sp({"abs_k", "mean_power", "expected_power"});
         io::Series ser{"mean |B_k|^2", {}, {}, std::nullopt};
         for (int k = 0; k <= N; ++k) {
           const double expect = c.measure.scale * c.measure.scale / multiplier_symbol(k, c.measure.s);
           sp.row({k, power[std::size_t(k)], expect});
           if (k > 0) {
             ser.x.push_back(k);
             ser.y.push_back(power[std::size_t(k)]);
           }
         }
         ctx.write("spectrum.csv", sp.str());
         json summary = {{"samples", b.states.size()},
                         {"acceptance_rate", b.acceptance_rate()},
                         {"mean_mass", mean_mass},
                         {"expected_mass", c.measure.scale * c.measure.scale * expected_mass(N, c.measure.s)}};
         if (ser.x.size() >= 3 && c.measure.scale > 0.0) {
           ser.fit = fit_power_law(ser.x, ser.y, FitWindow{0, 0});
           summary["spectrum_slope"] = ser.fit->exponent;
           summary["spectrum_slope_expected"] = -(2.0 * c.measure.s + 1.0);
           std::vector<io::Series> v{ser};
           ctx.write("spectrum.svg", io::svg_loglog(v, io::PlotStyle{"gamma_s spectrum", "|k|", "mean |B_k|^2"}));
         }
         ctx.json_file("summary.json", summary);
       }},
  };
}

struct DensityWork {
  std::vector<DensityLimit> limits;
};

std::vector<Stage> density_stages(const RunConfig&) {
  auto w = std::make_shared<DensityWork>();
  return {
      {"density",
       [w](Context& ctx) {
         const auto& c = ctx.config;
         const auto rho = sample_rho(c.measure_params(), c.samples);
         const auto lad = octave_ladder(c.density.tau0, c.density.tau_max, c.density.per_octave);
         for (std::size_t i = 0; i < rho.states.size(); ++i) {
           ctx.say("density", "sample " + std::to_string(i + 1) + "/" + std::to_string(rho.states.size()));
           w->limits.push_back(
               density_limit(rho.states[i], c.measure.s, lad, c.flow, c.quadrature_config()));
         }
       }},
      {"write",
       [w](Context& ctx) {
         io::CsvTable dt({"index", "tau", "log_f", "quadrature_error"});
         io::CsvTable tt({"index", "tau", "increment"});
         std::vector<double> slopes, mean;
         for (std::size_t i = 0; i < w->limits.size(); ++i) {
           const auto& L = w->limits[i];
           for (std::size_t k = 0; k < L.series.tau_grid.size(); ++k)
             dt.row({(unsigned long long)i, L.series.tau_grid[k], L.series.log_f[k], L.series.quadrature_error[k]});
           for (std::size_t k = 0; k < L.tail_tau.size(); ++k) tt.row({(unsigned long long)i, L.tail_tau[k], L.tail_increment[k]});
           if (!L.tail_fit.exact_constant) slopes.push_back(L.tail_fit.exponent);
           mean.resize(L.tail_tau.size(), 0.0);
           for (std::size_t k = 0; k < L.tail_tau.size(); ++k) mean[k] += L.tail_increment[k] / double(w->limits.size());
         }
         ctx.write("density.csv", dt.str());
         ctx.write("tail.csv", tt.str());
         const auto& taus = w->limits.front().tail_tau;
         const auto mfit = fit_power_law(taus, mean, density_tail_window(w->limits.front().per_octave, taus.size()));
         json summary = {{"samples", w->limits.size()},
                         {"mean_increment_fit", fit_json(mfit)},
                         {"median_sample_slope", slopes.empty() ? json(nullptr) : json(median(slopes))},
                         {"log_f_limit", json::array()}};
         for (const auto& L : w->limits) summary["log_f_limit"].push_back(L.series.log_f.back());
         std::vector<io::Series> plot{{"sample mean", taus, mean, mfit}};
         for (auto i : spread(w->limits.size(), 5))
           plot.push_back({"sample " + std::to_string(i), taus, w->limits[i].tail_increment, std::nullopt});
         if (!mfit.exact_constant)
           ctx.write("tail.svg", io::svg_loglog(plot, io::PlotStyle{"|log f(2 tau) - log f(tau)|", "tau", "increment"}));
         else
           summary["plot"] = "skipped: log f is constant";
         ctx.json_file("summary.json", summary);
       }},
  };
}

std::vector<Stage> qi_stages(const RunConfig&) {
  auto rep = std::make_shared<QuasiInvarianceReport>();
  return {
      {"estimate",
       [rep](Context& ctx) {
         const auto& c = ctx.config;
         ctx.say("estimate", std::to_string(c.samples) + " samples per estimate at tau = " + num(c.quasi_invariance.tau));
         *rep = quasi_invariance_check(c.measure_params(), c.quasi_invariance.tau, c.measure.s_prime,
                                       c.quasi_invariance.radius, c.samples, c.flow, c.quadrature_config());
       }},
      {"write",
       [rep](Context& ctx) {
         const auto& r = *rep;
         io::CsvTable t({"estimate", "value", "standard_error"});
         t.row({"rho_A", r.rho_A, r.rho_A_se});
         t.row({"pushforward", r.pushforward, r.pushforward_se});
         t.row({"density", r.density, r.density_se});
         ctx.write("estimates.csv", t.str());
         ctx.json_file("summary.json", {{"tau", r.tau},
                                        {"s_prime", r.s_prime},
                                        {"radius", r.radius},
                                        {"count", r.count},
                                        {"rho_A", r.rho_A},
                                        {"rho_A_first", r.rho_A_first},
                                        {"pushforward", r.pushforward},
                                        {"density", r.density},
                                        {"z_score", r.z_score()},
                                        {"max_quadrature_error", r.max_quadrature_error},
                                        {"acceptance_rate", r.acceptance_rate},
                                        {"kappa", r.kappa},
                                        {"ratio", r.ratio},
                                        {"insufficient", r.insufficient}});
       }},
  };
}

std::vector<Stage> growth_stages(const RunConfig&) {
  auto rep = std::make_shared<GrowthReport>();
  return {
      {"growth",
       [rep](Context& ctx) {
         const auto& c = ctx.config;
         const auto cps = geometric_checkpoints(c.holder_growth.T, std::size_t(c.holder_growth.checkpoints));
         ctx.say("growth", std::to_string(c.samples) + " samples, N = " + std::to_string(c.measure.N));
         *rep = holder_growth_experiment(c.measure_params(), c.measure.s_prime, cps, c.samples, c.flow,
                                         c.holder_growth.picture);
       }},
      {"write",
       [rep](Context& ctx) {
         const auto& r = *rep;
         io::CsvTable g({"index", "t", "norm"});
         io::CsvTable e({"index", "exponent"});
         for (std::size_t i = 0; i < r.norms.size(); ++i) {
           for (std::size_t k = 0; k < r.checkpoints.size(); ++k) g.row({(unsigned long long)i, r.checkpoints[k], r.norms[i][k]});
           e.row({(unsigned long long)i, r.exponents[i]});
         }
         ctx.write("growth.csv", g.str());
         ctx.write("exponents.csv", e.str());
         std::vector<io::Series> plot;
         for (auto i : spread(r.norms.size(), 6)) {
           io::Series s{"sample " + std::to_string(i), r.checkpoints, r.norms[i], std::nullopt};
           s.fit = fit_power_law(s.x, s.y, FitWindow{0, 0});
           plot.push_back(std::move(s));
         }
         json summary = {{"median_exponent", r.median_exponent}, {"exponents", r.exponents}};
         bool any = false;
         for (const auto& n : r.norms)
           for (double v : n) any = any || v > 0.0;
         if (any)
           ctx.write("growth.svg", io::svg_loglog(plot, io::PlotStyle{"C^{s'} norm growth", "t", "norm"}));
         else
           summary["plot"] = "skipped: zero norms";
         ctx.json_file("summary.json", summary);
       }},
  };
}

std::vector<Stage> random_curve_stages(const RunConfig&) {
  auto reps = std::make_shared<std::vector<CurveSampleReport>>();
  return {
      {"curves",
       [reps](Context& ctx) {
         const auto& c = ctx.config;
         RandomCurveOptions o;
         o.t_min = c.ladder.t_min;
         o.grid = c.grid_nodes();
         o.x0 = c.holder.x0;
         o.holder_points = c.holder.points;
         o.holder_span = c.holder.span;
         o.curve = c.curve_options();
         ctx.say("curves", std::to_string(c.samples) + " samples");
         *reps = random_curve_experiment(c.measure_params(), c.samples, o, c.flow);
       }},
      {"write",
       [reps](Context& ctx) {
         io::CsvTable t({"index", "curve_exponent", "curve_r_squared", "curve_reliable", "holder_exponent",
                         "holder_r_squared"});
         std::vector<double> ce, he;
         std::size_t in_band = 0;
         for (const auto& r : *reps) {
           t.row({(unsigned long long)r.index, r.curve_fit.exponent, r.curve_fit.r_squared, r.curve_fit.reliable,
                  r.holder_fit.exponent, r.holder_fit.r_squared});
           ce.push_back(r.curve_fit.exponent);
           he.push_back(r.holder_fit.exponent);
           if (r.holder_fit.exponent >= 0.35 && r.holder_fit.exponent <= 0.55) ++in_band;
         }
         ctx.write("fits.csv", t.str());
         ctx.json_file("summary.json", {{"samples", reps->size()},
                                        {"median_curve_exponent", median(ce)},
                                        {"median_holder_exponent", median(he)},
                                        {"holder_in_0.35_0.55", in_band}});
       }},
  };
}

std::vector<Stage> verify_stages(const RunConfig&) {
  return {
      {"checks",
       [](Context& ctx) {
         const auto& c = ctx.config;
         const auto results = run_invariant_suite(c.verify.level, c.verify.only, [&](const CheckResult& r) {
           ctx.say("checks", std::string(r.passed ? "PASS " : "FAIL ") + std::to_string(r.id) + " " + r.name + ": " +
                                 r.measured);
         });
         io::CsvTable t({"id", "name", "passed", "measured", "gate", "error"});
         json list = json::array();
         std::string failed;
         for (const auto& r : results) {
           t.row({r.id, r.name, r.passed, r.measured, r.gate, r.error});
           list.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"measured", r.measured}, {"gate", r.gate}});
           if (!r.passed) failed += (failed.empty() ? "" : ", ") + std::to_string(r.id);
         }
         ctx.write("verify.csv", t.str());
         ctx.json_file("summary.json", {{"level", c.verify.level == SuiteLevel::full ? "full" : "quick"},
                                        {"checks", list},
                                        {"all_passed", failed.empty()}});
         if (!failed.empty()) {
           ctx.soft_exit = 2;
           ctx.soft_error = "invariant checks failed: " + failed;
         }
       }},
  };
}

std::vector<Stage> stages_for(const RunConfig& c) {
  switch (c.experiment) {
    case Experiment::evolve: return evolve_stages(c);
    case Experiment::reconstruct: return reconstruct_stages(c);
    case Experiment::corners: return corner_stages(c);
    case Experiment::sample: return sample_stages(c);
    case Experiment::density: return density_stages(c);
    case Experiment::quasi_invariance: return qi_stages(c);
    case Experiment::holder_growth: return growth_stages(c);
    case Experiment::random_curves: return random_curve_stages(c);
    case Experiment::verify: return verify_stages(c);
  }
  throw InputError("experiment: unhandled");
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Files a previous run left in output_dir; anything else there is refused.
std::set<std::string> previous_outputs(const fs::path& out) {
  std::set<std::string> prev;
  if (!fs::exists(out)) return prev;
  if (!fs::is_directory(out)) throw IoError("output_dir " + out.string() + " exists and is not a directory");
  if (fs::exists(out / "manifest.json")) {
    try {
      for (const auto& f : read_manifest(out).files) prev.insert(f.path);
    } catch (const InputError&) {
      throw IoError("output_dir " + out.string() + " holds an unreadable manifest.json");
    }
  }
  for (const auto& e : fs::directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name == "manifest.json" || prev.count(name)) continue;
    throw IoError("output_dir " + out.string() + " holds '" + name +
                  "', which no previous run wrote; use an empty or new directory");
  }
  return prev;
}

class StagingDir {
 public:
  explicit StagingDir(const fs::path& out) {
    static std::atomic<int> counter{0};
    path_ = out.parent_path() / ("." + out.filename().string() + ".staging-" + std::to_string(::getpid()) + "-" +
                                 std::to_string(counter++));
    std::error_code ec;
    fs::create_directories(out.parent_path(), ec);
    if (!fs::create_directory(path_, ec) || ec)
      throw IoError("cannot create a staging directory next to " + out.string() + " (not writable?)");
  }
  ~StagingDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

RunManifest run(const RunConfig& config, const ProgressFn& progress) {
  config.validate();
  const fs::path out = fs::absolute(fs::path(config.output_dir)).lexically_normal();
  if (out.filename().empty()) throw InputError("output_dir: must name a directory");
  const auto prev = previous_outputs(out);
  StagingDir staging(out);

  RunManifest m;
  m.experiment = to_string(config.experiment);
  m.config_json = serialize_config(config);
  m.output_dir = out;
  m.started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  Context ctx{config, progress, staging.path(), nullptr, {}, 0, {}};
  auto stages = stages_for(config);
  for (const auto& s : stages) {
    StageRecord r;
    r.name = s.name;
    m.stages.push_back(r);
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto& rec = m.stages[i];
    ctx.outputs = &rec.outputs;
    ctx.say(stages[i].name, "start");
    const auto s0 = std::chrono::steady_clock::now();
    try {
      stages[i].fn(ctx);
      rec.status = "ok";
    } catch (const std::exception& e) {
      // a failed stage leaves nothing behind
      for (const auto& f : rec.outputs) {
        std::error_code ec;
        fs::remove(staging.path() / f, ec);
      }
      rec.outputs.clear();
      rec.status = "failed";
      rec.error = e.what();
      m.status = "failed";
      m.exit_code = exit_code_for(e);
      m.error = stages[i].name + ": " + e.what();
      for (std::size_t k = i + 1; k < stages.size(); ++k) m.stages[k].status = "skipped";
      ctx.say(stages[i].name, std::string("failed: ") + e.what());
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
      break;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
  }
  if (m.exit_code == 0 && ctx.soft_exit != 0) {
    m.status = "failed";
    m.exit_code = ctx.soft_exit;
    m.error = ctx.soft_error;
  }

  // inventory
  for (const auto& s : m.stages)
    for (const auto& f : s.outputs) {
      const auto p = staging.path() / f;
      m.files.push_back(FileRecord{f, fs::file_size(p), io::sha256_file(p)});
    }
  std::sort(m.files.begin(), m.files.end(), [](const FileRecord& a, const FileRecord& b) { return a.path < b.path; });

  // commit: data files first, stale files of the previous run out, manifest last
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output_dir " + out.string() + ": " + ec.message());
  std::set<std::string> now;
  for (const auto& f : m.files) {
    fs::rename(staging.path() / f.path, out / f.path, ec);
    if (ec) throw IoError("cannot move " + f.path + " into " + out.string() + ": " + ec.message());
    now.insert(f.path);
  }
  for (const auto& p : prev)
    if (!now.count(p)) fs::remove(out / p, ec);
  m.finished = utc_now();
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_file_atomic(out / "manifest.json", m.to_json());
  ctx.say("run", m.status == "ok" ? "wrote " + std::to_string(m.files.size()) + " files to " + out.string()
                                  : "failed: " + m.error);
  return m;
}

}  // namespace vortex
