#include "vortex/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "vortex/error.hpp"

namespace vortex::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> columns) : width_(columns.size()) {
  if (columns.empty()) throw InputError("CsvTable: no columns");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) text_ += ',';
    text_ += columns[i];
  }
  text_ += '\n';
}

void CsvTable::row(std::initializer_list<Cell> cells) { row(std::vector<Cell>(cells)); }

void CsvTable::row(const std::vector<Cell>& cells) {
  if (cells.size() != width_)
    throw InputError("CsvTable: row of " + std::to_string(cells.size()) + " cells, header has " +
                     std::to_string(width_));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    const std::string& c = cells[i].text;
    if (c.find_first_of(",\"\n") == std::string::npos) {
      text_ += c;
      continue;
    }
    text_ += '"';
    for (char ch : c) {
      if (ch == '"') text_ += '"';
      text_ += ch;
    }
    text_ += '"';
  }
  text_ += '\n';
  ++rows_;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw std::runtime_error("sha256: OpenSSL digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp-" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), std::streamsize(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

using P2 = std::array<double, 2>;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
constexpr int kLeft = 72, kRight = 24, kTop = 40, kBottom = 52;

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double seg_distance(const P2& p, const P2& a, const P2& b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double L2 = dx * dx + dy * dy;
  if (L2 == 0.0) return std::hypot(p[0] - a[0], p[1] - a[1]);
  const double u = std::clamp(((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / L2, 0.0, 1.0);
  return std::hypot(p[0] - a[0] - u * dx, p[1] - a[1] - u * dy);
}

std::string header(const PlotStyle& s) {
  std::string o = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(s.width) +
       "\" height=\"" + std::to_string(s.height) + "\" viewBox=\"0 0 " + std::to_string(s.width) + " " +
       std::to_string(s.height) + "\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(s.width) + "\" height=\"" + std::to_string(s.height) +
       "\" fill=\"white\"/>\n";
  if (!s.title.empty())
    o += "<text x=\"" + px(s.width / 2.0) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + xml_escape(s.title) + "</text>\n";
  return o;
}

std::string axes_labels(const PlotStyle& s) {
  std::string o;
  o += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(s.width - kLeft - kRight) +
       "\" height=\"" + px(s.height - kTop - kBottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
  o += "<text x=\"" + px(kLeft + (s.width - kLeft - kRight) / 2.0) + "\" y=\"" + px(s.height - 12) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(s.x_label) +
       "</text>\n";
  const double cy = kTop + (s.height - kTop - kBottom) / 2.0;
  o += "<text x=\"16\" y=\"" + px(cy) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       "transform=\"rotate(-90 16 " + px(cy) + ")\">" + xml_escape(s.y_label) + "</text>\n";
  return o;
}

std::string polyline(const std::vector<P2>& pts, const char* color, bool dashed) {
  std::string o = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.2\"";
  if (dashed) o += " stroke-dasharray=\"6 4\"";
  o += " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) o += ' ';
    o += px(pts[i][0]) + "," + px(pts[i][1]);
  }
  o += "\"/>\n";
  return o;
}

std::string legend(std::span<const std::string> labels, int width) {
  std::string o;
  const std::size_t n = std::min<std::size_t>(labels.size(), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = kTop + 14 + 14.0 * double(i);
    const double x = width - kRight - 150;
    o += "<line x1=\"" + px(x) + "\" y1=\"" + px(y - 4) + "\" x2=\"" + px(x + 18) + "\" y2=\"" + px(y - 4) +
         "\" stroke=\"" + kPalette[i % 8] + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + px(x + 24) + "\" y=\"" + px(y) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
         xml_escape(labels[i]) + "</text>\n";
  }
  return o;
}

}  // namespace

std::vector<P2> simplify_polyline(std::span<const P2> points, double tol) {
  if (points.size() <= 2) return {points.begin(), points.end()};
  std::vector<char> keep(points.size(), 0);
  keep.front() = keep.back() = 1;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, points.size() - 1}};
  while (!stack.empty()) {
    const auto [a, b] = stack.back();
    stack.pop_back();
    double worst = -1.0;
    std::size_t at = a;
    for (std::size_t i = a + 1; i < b; ++i) {
      const double d = seg_distance(points[i], points[a], points[b]);
      if (d > worst) {
        worst = d;
        at = i;
      }
    }
    if (worst > tol) {
      keep[at] = 1;
      stack.push_back({a, at});
      stack.push_back({at, b});
    }
  }
  std::vector<P2> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (keep[i]) out.push_back(points[i]);
  return out;
}

std::string svg_curves(std::span<const std::vector<Vec3>> curves, int a, int b, const PlotStyle& style,
                       std::span<const std::string> labels) {
  if (curves.empty()) throw InputError("svg_curves: no curves to draw");
  if (a < 0 || a > 2 || b < 0 || b > 2 || a == b) throw InputError("svg_curves: bad projection axes");
  double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
  for (const auto& c : curves) {
    if (c.empty()) throw InputError("svg_curves: empty curve");
    for (const auto& p : c) {
      if (!std::isfinite(p[a]) || !std::isfinite(p[b])) throw InputError("svg_curves: non-finite point");
      lo[0] = std::min(lo[0], p[a]);
      hi[0] = std::max(hi[0], p[a]);
      lo[1] = std::min(lo[1], p[b]);
      hi[1] = std::max(hi[1], p[b]);
    }
  }
  const double W = style.width - kLeft - kRight, H = style.height - kTop - kBottom;
  double span = std::max(hi[0] - lo[0], hi[1] - lo[1]);
  if (span == 0.0) span = 1.0;
  // equal scale on both axes, centred
  const double scale = 0.94 * std::min(W, H) / span;
  const double cx = 0.5 * (lo[0] + hi[0]), cy = 0.5 * (lo[1] + hi[1]);
  const double ox = kLeft + W / 2, oy = kTop + H / 2;

  std::string o = header(style);
  o += axes_labels(style);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    std::vector<P2> pts;
    pts.reserve(curves[i].size());
    for (const auto& p : curves[i]) pts.push_back({ox + scale * (p[a] - cx), oy - scale * (p[b] - cy)});
    o += polyline(simplify_polyline(pts, 0.01), kPalette[i % 8], false);
  }
  o += legend(labels, style.width);
  o += "</svg>\n";
  return o;
}

std::vector<CurveProjection> curve_projections(std::span<const std::vector<Vec3>> curves, const PlotStyle& style,
                                               std::span<const std::string> labels) {
  std::vector<CurveProjection> out;
  const char* names[] = {"x", "y", "z"};
  for (int b : {1, 2}) {
    PlotStyle s = style;
    s.x_label = names[0];
    s.y_label = names[b];
    if (!style.title.empty()) s.title = style.title + " (" + names[0] + names[b] + ")";
    out.push_back({std::string(names[0]) + names[b], svg_curves(curves, 0, b, s, labels)});
  }
  return out;
}

std::string svg_loglog(std::span<const Series> series, const PlotStyle& style) {
  double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
  std::size_t n = 0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw InputError("svg_loglog: x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0) || !std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double lx = std::log10(s.x[i]), ly = std::log10(s.y[i]);
      lo[0] = std::min(lo[0], lx);
      hi[0] = std::max(hi[0], lx);
      lo[1] = std::min(lo[1], ly);
      hi[1] = std::max(hi[1], ly);
      ++n;
    }
  }
  if (n == 0) throw InputError("svg_loglog: no positive data to plot");
  for (int d = 0; d < 2; ++d) {
    if (hi[d] - lo[d] < 1e-9) {
      lo[d] -= 0.5;
      hi[d] += 0.5;
    }
    const double pad = 0.04 * (hi[d] - lo[d]);
    lo[d] -= pad;
    hi[d] += pad;
  }
  const double W = style.width - kLeft - kRight, H = style.height - kTop - kBottom;
  auto X = [&](double v) { return kLeft + W * (std::log10(v) - lo[0]) / (hi[0] - lo[0]); };
  auto Y = [&](double v) { return kTop + H * (1.0 - (std::log10(v) - lo[1]) / (hi[1] - lo[1])); };

  std::string o = header(style);
  // decade ticks
  for (int d = 0; d < 2; ++d) {
    for (int k = int(std::ceil(lo[d])); k <= int(std::floor(hi[d])); ++k) {
      const double v = std::pow(10.0, k);
      const std::string lbl = "1e" + std::to_string(k);
      if (d == 0)
        o += "<line x1=\"" + px(X(v)) + "\" y1=\"" + px(kTop) + "\" x2=\"" + px(X(v)) + "\" y2=\"" + px(kTop + H) +
             "\" stroke=\"#dddddd\"/>\n<text x=\"" + px(X(v)) + "\" y=\"" + px(kTop + H + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + lbl + "</text>\n";
      else
        o += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(Y(v)) + "\" x2=\"" + px(kLeft + W) + "\" y2=\"" + px(Y(v)) +
             "\" stroke=\"#dddddd\"/>\n<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(Y(v) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + lbl + "</text>\n";
    }
  }
  o += axes_labels(style);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % 8];
    std::vector<P2> pts;
    for (std::size_t m = 0; m < s.x.size(); ++m)
      if (s.x[m] > 0.0 && s.y[m] > 0.0 && std::isfinite(s.x[m]) && std::isfinite(s.y[m]))
        pts.push_back({X(s.x[m]), Y(s.y[m])});
    if (pts.size() > 1) o += polyline(pts, color, false);
    for (const auto& p : pts)
      o += "<circle cx=\"" + px(p[0]) + "\" cy=\"" + px(p[1]) + "\" r=\"2.2\" fill=\"" + color + "\"/>\n";
    std::string label = s.label;
    if (s.fit && s.fit->points > 0 && !s.fit->exact_constant && s.fit->t_hi > s.fit->t_lo && s.fit->t_lo > 0.0) {
      const auto& f = *s.fit;
      auto fy = [&](double x) { return std::exp(f.intercept) * std::pow(x, f.exponent); };
      const double y0 = fy(f.t_lo), y1 = fy(f.t_hi);
      if (y0 > 0.0 && y1 > 0.0 && std::isfinite(y0) && std::isfinite(y1))
        o += polyline({{X(f.t_lo), Y(y0)}, {X(f.t_hi), Y(y1)}}, color, true);
      char buf[48];
      std::snprintf(buf, sizeof buf, " (slope %.3f)", f.exponent);
      label += buf;
    }
    labels.push_back(label);
  }
  o += legend(labels, style.width);
  o += "</svg>\n";
  return o;
}

}  // namespace vortex::io
