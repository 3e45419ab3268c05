// vortexlab <experiment> --config <path> [--set k=v]... [--seed n] [--out dir]

#include <unistd.h>

#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vortex/vortex.h"

namespace {

bool use_color() {
  const char* nc = std::getenv("NO_COLOR");
  if (nc && *nc) return false;
  return ::isatty(STDERR_FILENO) == 1;
}

struct Progress {
  bool color;
  bool quiet;
};

void on_progress(const char* stage, const char* message, void* user) {
  const auto* p = static_cast<const Progress*>(user);
  if (p->quiet) return;
  if (p->color)
    std::fprintf(stderr, "\033[1;36m%s\033[0m %s\n", stage, message);
  else
    std::fprintf(stderr, "%s: %s\n", stage, message);
}

int report(vortex_status st, const char* what) {
  std::fprintf(stderr, "vortexlab: %s: %s\n", what, vortex_last_error());
  return int(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral laboratory for binormal-flow vortex filaments"};
  app.set_version_flag("--version", std::string(vortex_version()));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool quiet = false;

  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < vortex_experiment_count(); ++i) {
    auto* sub = app.add_subcommand(vortex_experiment_name(i));
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--set", sets, "override a JSON path, e.g. --set flow.rtol=1e-8")->allow_extra_args(false);
    sub->add_option("--seed", seed, "master seed (same as --set seed=n)");
    sub->add_option("--out", out_dir, "output directory (same as --set output_dir=dir)");
    sub->add_flag("--quiet", quiet, "no progress on standard error");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::string experiment;
  for (auto* s : subs)
    if (s->parsed()) experiment = s->get_name();

  vortex_config* cfg = nullptr;
  vortex_status st = config_path.empty() ? vortex_config_new(&cfg) : vortex_config_load(config_path.c_str(), &cfg);
  if (st != VORTEX_OK) return report(st, "config");

  const std::string quoted = "\"" + experiment + "\"";
  st = vortex_config_set(cfg, "experiment", quoted.c_str());
  for (std::size_t i = 0; st == VORTEX_OK && i < sets.size(); ++i) st = vortex_config_set_assignment(cfg, sets[i].c_str());
  auto* sub = app.get_subcommand(experiment);
  if (st == VORTEX_OK && sub->count("--seed")) st = vortex_config_set(cfg, "seed", std::to_string(seed).c_str());
  if (st == VORTEX_OK && sub->count("--out")) {
    // JSON-quote the path
    std::string q = "\"";
    for (char c : out_dir) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    q += '"';
    st = vortex_config_set(cfg, "output_dir", q.c_str());
  }
  if (st != VORTEX_OK) {
    vortex_config_free(cfg);
    return report(st, "config");
  }

  Progress p{use_color(), quiet};
  char* manifest = nullptr;
  int exit_code = 0;
  st = vortex_run(cfg, on_progress, &p, &manifest, &exit_code);
  vortex_config_free(cfg);
  vortex_string_free(manifest);
  if (st != VORTEX_OK) {
    std::fprintf(stderr, "vortexlab: %s\n", vortex_last_error());
    return exit_code;
  }
  return 0;
}
