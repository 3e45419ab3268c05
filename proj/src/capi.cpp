#include "vortex/vortex.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "vortex/error.hpp"
#include "vortex/flow.hpp"
#include "vortex/runs.hpp"

struct vortex_config {
  vortex::ConfigDocument doc;
};

struct vortex_state {
  vortex::CoefficientState state;
};

namespace {

thread_local std::string last_error;

vortex_status fail(vortex_status code, const std::string& msg) {
  last_error = msg;
  return code;
}

template <class F>
vortex_status guard(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const vortex::InputError& e) {
    return fail(VORTEX_ERR_INPUT, e.what());
  } catch (const vortex::NumericalError& e) {
    return fail(VORTEX_ERR_NUMERICAL, e.what());
  } catch (const vortex::IoError& e) {
    return fail(VORTEX_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(VORTEX_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(VORTEX_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(VORTEX_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VORTEX_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

#define VORTEX_REQUIRE(ptr) \
  if (!(ptr)) return fail(VORTEX_ERR_INPUT, #ptr " is null")

}  // namespace

extern "C" {

const char* vortex_version(void) { return vortex::kVersion; }
const char* vortex_last_error(void) { return last_error.c_str(); }
void vortex_string_free(char* s) { std::free(s); }

size_t vortex_experiment_count(void) { return vortex::experiment_names().size(); }

const char* vortex_experiment_name(size_t i) {
  const auto& n = vortex::experiment_names();
  return i < n.size() ? n[i].c_str() : nullptr;
}

vortex_status vortex_config_new(vortex_config** out) {
  VORTEX_REQUIRE(out);
  return guard([&] {
    *out = new vortex_config{};
    return VORTEX_OK;
  });
}

vortex_status vortex_config_parse(const char* json_text, vortex_config** out) {
  VORTEX_REQUIRE(json_text);
  VORTEX_REQUIRE(out);
  return guard([&] {
    *out = new vortex_config{vortex::ConfigDocument::from_text(json_text)};
    return VORTEX_OK;
  });
}

vortex_status vortex_config_load(const char* path, vortex_config** out) {
  VORTEX_REQUIRE(path);
  VORTEX_REQUIRE(out);
  return guard([&] {
    *out = new vortex_config{vortex::ConfigDocument::from_file(path)};
    return VORTEX_OK;
  });
}

vortex_status vortex_config_set(vortex_config* cfg, const char* key, const char* value) {
  VORTEX_REQUIRE(cfg);
  VORTEX_REQUIRE(key);
  VORTEX_REQUIRE(value);
  return guard([&] {
    cfg->doc.set(key, value);
    return VORTEX_OK;
  });
}

vortex_status vortex_config_set_assignment(vortex_config* cfg, const char* assignment) {
  VORTEX_REQUIRE(cfg);
  VORTEX_REQUIRE(assignment);
  return guard([&] {
    cfg->doc.set_assignment(assignment);
    return VORTEX_OK;
  });
}

vortex_status vortex_config_validate(const vortex_config* cfg) {
  VORTEX_REQUIRE(cfg);
  return guard([&] {
    cfg->doc.resolve(true);
    return VORTEX_OK;
  });
}

vortex_status vortex_config_to_json(const vortex_config* cfg, char** out) {
  VORTEX_REQUIRE(cfg);
  VORTEX_REQUIRE(out);
  return guard([&] {
    *out = dup(vortex::serialize_config(cfg->doc.resolve(false)));
    return VORTEX_OK;
  });
}

void vortex_config_free(vortex_config* cfg) { delete cfg; }

vortex_status vortex_run(const vortex_config* cfg, vortex_progress_fn progress, void* user, char** manifest_json,
                         int* exit_code) {
  VORTEX_REQUIRE(cfg);
  if (manifest_json) *manifest_json = nullptr;
  if (exit_code) *exit_code = 4;
  const auto status = guard([&] {
    vortex::ProgressFn fn;
    if (progress)
      fn = [&](const std::string& stage, const std::string& msg) { progress(stage.c_str(), msg.c_str(), user); };
    const auto m = vortex::run(cfg->doc.resolve(true), fn);
    if (manifest_json) *manifest_json = dup(m.to_json());
    if (exit_code) *exit_code = m.exit_code;
    if (m.exit_code == 0) return VORTEX_OK;
    last_error = m.error;
    return m.exit_code >= 1 && m.exit_code <= 3 ? vortex_status(m.exit_code) : VORTEX_ERR_INTERNAL;
  });
  if (exit_code && *exit_code == 4 && status != VORTEX_ERR_INTERNAL) *exit_code = int(status);
  return status;
}

vortex_status vortex_state_new(int N, double t, vortex_state** out) {
  VORTEX_REQUIRE(out);
  return guard([&] {
    if (N < 0 || N > 4096) throw vortex::InputError("vortex_state_new: N must lie in [0, 4096]");
    vortex::CoefficientState s(t, N);
    s.validate();
    *out = new vortex_state{std::move(s)};
    return VORTEX_OK;
  });
}

vortex_status vortex_state_set(vortex_state* s, int k, double re, double im) {
  VORTEX_REQUIRE(s);
  if (k < -s->state.N || k > s->state.N) return fail(VORTEX_ERR_INPUT, "vortex_state_set: mode out of range");
  s->state.at(k) = {re, im};
  return VORTEX_OK;
}

vortex_status vortex_state_get(const vortex_state* s, int k, double* re, double* im) {
  VORTEX_REQUIRE(s);
  VORTEX_REQUIRE(re);
  VORTEX_REQUIRE(im);
  if (k < -s->state.N || k > s->state.N) return fail(VORTEX_ERR_INPUT, "vortex_state_get: mode out of range");
  *re = s->state.at(k).real();
  *im = s->state.at(k).imag();
  return VORTEX_OK;
}

vortex_status vortex_state_modes(const vortex_state* s, int* N) {
  VORTEX_REQUIRE(s);
  VORTEX_REQUIRE(N);
  *N = s->state.N;
  return VORTEX_OK;
}

vortex_status vortex_state_time(const vortex_state* s, double* t) {
  VORTEX_REQUIRE(s);
  VORTEX_REQUIRE(t);
  *t = s->state.t;
  return VORTEX_OK;
}

vortex_status vortex_state_mass(const vortex_state* s, double* m) {
  VORTEX_REQUIRE(s);
  VORTEX_REQUIRE(m);
  *m = vortex::mass(s->state);
  return VORTEX_OK;
}

vortex_status vortex_state_evolve(vortex_state* s, double t_target, double rtol, double atol) {
  VORTEX_REQUIRE(s);
  return guard([&] {
    vortex::FlowConfig c;
    c.rtol = rtol;
    c.atol = atol;
    c.validate();
    if (!(t_target >= 1.0)) throw vortex::InputError("vortex_state_evolve: t_target must be >= 1");
    s->state = vortex::evolve(s->state, t_target, c);
    return VORTEX_OK;
  });
}

void vortex_state_free(vortex_state* s) { delete s; }

}  // extern "C"
