#pragma once

// CSV, hashing and SVG emission for run outputs.
// Every floating-point value written to CSV uses 17 significant digits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vortex/hasimoto.hpp"
#include "vortex/singularity.hpp"

namespace vortex::io {

/// %.17g; non-finite values as nan, inf, -inf.
std::string format_double(double v);

struct Cell {
  std::string text;
  Cell(double v) : text(format_double(v)) {}
  Cell(int v) : text(std::to_string(v)) {}
  Cell(long v) : text(std::to_string(v)) {}
  Cell(long long v) : text(std::to_string(v)) {}
  Cell(unsigned long v) : text(std::to_string(v)) {}
  Cell(unsigned long long v) : text(std::to_string(v)) {}
  Cell(bool v) : text(v ? "1" : "0") {}
  Cell(const char* s) : text(s) {}
  Cell(std::string s) : text(std::move(s)) {}
};

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);
  /// Throws InputError when the row width differs from the header.
  void row(std::initializer_list<Cell> cells);
  void row(const std::vector<Cell>& cells);
  std::size_t rows() const { return rows_; }
  const std::string& str() const { return text_; }

 private:
  std::size_t width_;
  std::size_t rows_ = 0;
  std::string text_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes through a sibling temporary and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

struct PlotStyle {
  std::string title;
  std::string x_label = "x";
  std::string y_label = "y";
  int width = 640;
  int height = 480;
};

/// Drops interior points that lie within tol of the chord (Douglas-Peucker).
std::vector<std::array<double, 2>> simplify_polyline(std::span<const std::array<double, 2>> points, double tol);

/// One polyline per curve, projected onto the plane of coordinates (a, b).
/// Throws InputError when there is no curve or a curve has no point.
std::string svg_curves(std::span<const std::vector<Vec3>> curves, int axis_a, int axis_b, const PlotStyle& style,
                       std::span<const std::string> labels = {});

struct CurveProjection {
  std::string suffix;  // "xy", "xz"
  std::string svg;
};

/// The xy and xz projections of a family of curves.
std::vector<CurveProjection> curve_projections(std::span<const std::vector<Vec3>> curves, const PlotStyle& style,
                                               std::span<const std::string> labels = {});

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::optional<RateFit> fit;  // drawn as exp(intercept) x^exponent over [t_lo, t_hi]
};

/// Log-log plot; nonpositive points are skipped. Throws InputError when no
/// series has a positive point.
std::string svg_loglog(std::span<const Series> series, const PlotStyle& style);

/// Escapes &, <, >, " and '.
std::string xml_escape(std::string_view text);

}  // namespace vortex::io
