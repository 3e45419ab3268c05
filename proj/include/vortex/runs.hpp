#pragma once

// Run configuration (JSON), experiment dispatch and the run manifest.
//
// A run writes into a staging directory next to output_dir and renames the
// finished files into place; manifest.json goes last.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vortex/flow.hpp"
#include "vortex/measure.hpp"

namespace vortex {

inline constexpr const char* kVersion = "0.4.0";

enum class Experiment {
  evolve,
  reconstruct,
  corners,
  sample,
  density,
  quasi_invariance,
  holder_growth,
  random_curves,
  verify,
};

const std::vector<std::string>& experiment_names();
std::string to_string(Experiment e);
/// Throws InputError listing the valid names.
Experiment parse_experiment(std::string_view name);

enum class DataKind {
  profile,    // B_j(1) = amplitude (1 + |j|)^{-decay} e^{ij}, |j| <= N
  gaussian,   // gamma_s draw (measure block, stream (seed, 0))
  bf_random,  // randomize_bf_data (measure block, stream (seed, 0))
  explicit_,  // the listed coefficients
};

struct Coefficient {
  int k = 0;
  double re = 0.0;
  double im = 0.0;
  bool operator==(const Coefficient&) const = default;
};

struct DataSpec {
  DataKind kind = DataKind::profile;
  int N = 4;
  double amplitude = 0.3;
  double decay = 2.0;
  std::vector<Coefficient> coefficients;
  bool operator==(const DataSpec&) const = default;
};

struct MeasureSpec {
  double s = 0.5;
  double s_prime = 0.25;
  double M = 4.0;
  int N = 8;
  double scale = 1.0;
  bool operator==(const MeasureSpec&) const = default;
};

/// Times t in [t_min, 1] for the line problem.
struct LadderSpec {
  double t_min = 1e-3;
  bool dyadic = true;  // otherwise geometric with per_decade points
  int per_decade = 8;
  bool operator==(const LadderSpec&) const = default;
};

/// tau in [1, tau_max], per_decade geometric points.
struct TauSpec {
  double tau_max = 100.0;
  int per_decade = 16;
  bool operator==(const TauSpec&) const = default;
};

struct GridSpec {
  double x_min = -8.0;
  double x_max = 8.0;
  double dx = 0.01;
  std::size_t nodes() const;
  bool operator==(const GridSpec&) const = default;
};

struct DensitySpec {
  double tau0 = 200.0 / 128;
  double tau_max = 200.0;
  int per_octave = 4;
  bool operator==(const DensitySpec&) const = default;
};

struct QuadratureSpec {
  double tol = 1e-8;
  int max_depth = 30;
  bool operator==(const QuadratureSpec&) const = default;
};

struct QuasiInvarianceSpec {
  double tau = 10.0;
  double radius = 1.84;
  bool operator==(const QuasiInvarianceSpec&) const = default;
};

struct GrowthSpec {
  double T = 100.0;
  int checkpoints = 16;
  GrowthPicture picture = GrowthPicture::solution;
  bool operator==(const GrowthSpec&) const = default;
};

struct HolderSpec {
  int points = 64;
  double span = 1.0 / 16;
  double x0 = 0.0;
  bool operator==(const HolderSpec&) const = default;
};

struct CurveSpec {
  double time_resolution = 0.5;
  double space_resolution = 0.1;
  bool operator==(const CurveSpec&) const = default;
};

struct CornerSpec {
  double spacing = 2.0;
  double window_fraction = 0.25;
  double threshold_deg = 2.0;
  bool operator==(const CornerSpec&) const = default;
};

enum class SuiteLevel { quick, full };

struct VerifySpec {
  SuiteLevel level = SuiteLevel::quick;
  std::vector<int> only;  // criterion ids; empty = all
  bool operator==(const VerifySpec&) const = default;
};

struct RunConfig {
  Experiment experiment = Experiment::evolve;
  std::uint64_t seed = 0;
  std::string output_dir = "vortexlab-out";
  std::size_t samples = 20;
  FlowConfig flow;
  MeasureSpec measure;
  DataSpec data;
  LadderSpec ladder;
  TauSpec tau;
  GridSpec grid;
  DensitySpec density;
  QuadratureSpec quadrature;
  QuasiInvarianceSpec quasi_invariance;
  GrowthSpec holder_growth;
  HolderSpec holder;
  CurveSpec curve;
  CornerSpec corners;
  VerifySpec verify;

  /// Cross-field invariants; messages name the JSON paths involved.
  void validate() const;

  MeasureParams measure_params() const;
  QuadratureConfig quadrature_config() const;
  CurveOptions curve_options() const;
  std::vector<double> grid_nodes() const;
  /// Decreasing times in (0, 1] from the ladder block.
  std::vector<double> time_ladder() const;
  /// Increasing tau in [1, tau_max].
  std::vector<double> tau_ladder() const;
  /// The deterministic or random data the data block describes (at tau = 1).
  CoefficientState initial_state() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// Parses JSON text. Unknown keys and type errors are InputError with the key
/// path; malformed JSON reports line and column. validate() runs when asked.
RunConfig parse_config(std::string_view json_text, bool validate = true, std::string_view origin = "config");
RunConfig parse_config_file(const std::filesystem::path& path, bool validate = true);
/// Every field, doubles in shortest round-trip form.
std::string serialize_config(const RunConfig& config);

/// A config file plus `key=value` overrides, applied to the JSON before parsing
/// so the overrides obey the same key checks as the file.
class ConfigDocument {
 public:
  ConfigDocument();
  ~ConfigDocument();
  ConfigDocument(const ConfigDocument&);
  ConfigDocument& operator=(const ConfigDocument&);

  static ConfigDocument from_text(std::string_view json_text, std::string_view origin = "config");
  static ConfigDocument from_file(const std::filesystem::path& path);

  /// key is a dotted JSON path; value is JSON when it parses as JSON, else a string.
  /// Checks the path against the schema at once (unknown keys and type errors).
  void set(std::string_view key, std::string_view value);
  /// Accepts "key=value".
  void set_assignment(std::string_view assignment);

  RunConfig resolve(bool validate = true) const;
  std::string text() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StageRecord {
  std::string name;
  std::string status = "pending";  // ok, failed, skipped
  double seconds = 0.0;
  std::vector<std::string> outputs;
  std::string error;
};

struct FileRecord {
  std::string path;  // relative to output_dir
  std::uintmax_t bytes = 0;
  std::string sha256;
};

struct RunManifest {
  std::string version = kVersion;
  std::string experiment;
  std::string config_json;
  std::string started;   // UTC, ISO 8601
  std::string finished;
  double wall_seconds = 0.0;
  std::string status = "ok";  // ok, failed
  int exit_code = 0;
  std::string error;
  std::vector<StageRecord> stages;
  std::vector<FileRecord> files;
  std::filesystem::path output_dir;

  std::string to_json() const;
};

using ProgressFn = std::function<void(const std::string& stage, const std::string& message)>;

/// 1 InputError, 2 NumericalError, 3 IoError (and filesystem errors), 4 anything else.
int exit_code_for(const std::exception& e);

/// Validates, runs the stages, commits outputs and manifest. Config errors and
/// an unusable output_dir throw (nothing written); stage failures are recorded
/// in the returned manifest with a nonzero exit_code.
RunManifest run(const RunConfig& config, const ProgressFn& progress = {});

/// Reads manifest.json from a finished run.
RunManifest read_manifest(const std::filesystem::path& output_dir);

}  // namespace vortex
