#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "cli.hpp"

namespace confactor::cli {

// ----------------------------------------------------------------------------
// Diagnostics
// ----------------------------------------------------------------------------

LogLevel log_threshold() {
  static const LogLevel level = [] {
    const char* raw = std::getenv("INFER_LOG");
    if (!raw) return LogLevel::warn;
    const std::string v(raw);
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& message) {
  if (level > log_threshold()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[confactor][%s] %s\n", names[static_cast<int>(level)],
               message.c_str());
}

// ----------------------------------------------------------------------------
// CSV
// ----------------------------------------------------------------------------

std::string csv_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

std::string csv_table_numeric(const std::vector<std::string>& header,
                              const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<std::string> line;
    line.reserve(row.size());
    for (double v : row) line.push_back(csv_cell(v));
    cells.push_back(std::move(line));
  }
  return csv_table(header, cells);
}

// ----------------------------------------------------------------------------
// Atomic file writes
// ----------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  try {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp(path + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
      out << content;
      out.flush();
      if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("filesystem: ") + e.what());
  }
  log(LogLevel::info, "wrote " + path);
}

// ----------------------------------------------------------------------------
// SVG charts.  Fixed 720x480 canvas, everything inline, no external assets.
// ----------------------------------------------------------------------------

namespace {

constexpr double kWidth = 720.0, kHeight = 480.0;
constexpr double kLeft = 72.0, kRight = 692.0, kTop = 48.0, kBottom = 428.0;

const char* series_color(std::size_t index) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  return palette[index % (sizeof palette / sizeof palette[0])];
}

std::string num_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Minimal XML escaping for user-supplied labels.
std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
  double x_min = kInf, x_max = -kInf, y_min = kInf, y_max = -kInf;
  std::size_t points = 0;
  for (const auto& s : series) {
    if (s.xs.size() != s.ys.size())
      throw Error("svg_chart: series '" + s.name + "' has mismatched lengths");
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      x_min = std::min(x_min, s.xs[i]);
      x_max = std::max(x_max, s.xs[i]);
      y_min = std::min(y_min, s.ys[i]);
      y_max = std::max(y_max, s.ys[i]);
      ++points;
    }
  }
  if (points == 0) throw Error("svg_chart: no finite data points");
  if (x_max == x_min) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  if (y_max == y_min) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double x_pad = 0.04 * (x_max - x_min), y_pad = 0.06 * (y_max - y_min);
  x_min -= x_pad;
  x_max += x_pad;
  y_min -= y_pad;
  y_max += y_pad;

  const auto X = [&](double x) {
    return kLeft + (x - x_min) / (x_max - x_min) * (kRight - kLeft);
  };
  const auto Y = [&](double y) {
    return kBottom - (y - y_min) / (y_max - y_min) * (kBottom - kTop);
  };

  std::string svg;
  char buf[256];
  const auto add = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    svg += buf;
  };

  add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
      "viewBox=\"0 0 %g %g\">\n",
      kWidth, kHeight, kWidth, kHeight);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  add("<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
      "text-anchor=\"middle\">%s</text>\n",
      0.5 * kWidth, xml_escape(title).c_str());

  // Axes box and ticks.
  add("<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" "
      "stroke=\"#333333\" stroke-width=\"1\"/>\n",
      kLeft, kTop, kRight - kLeft, kBottom - kTop);
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_min + (x_max - x_min) * i / 4.0;
    const double fy = y_min + (y_max - y_min) * i / 4.0;
    add("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#333333\"/>\n",
        X(fx), kBottom, X(fx), kBottom + 5.0);
    add("<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"middle\">%s</text>\n",
        X(fx), kBottom + 18.0, num_label(fx).c_str());
    add("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#333333\"/>\n",
        kLeft - 5.0, Y(fy), kLeft, Y(fy));
    add("<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"end\">%s</text>\n",
        kLeft - 8.0, Y(fy) + 4.0, num_label(fy).c_str());
  }
  add("<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"13\" "
      "text-anchor=\"middle\">%s</text>\n",
      0.5 * (kLeft + kRight), kHeight - 10.0, xml_escape(x_label).c_str());
  add("<text x=\"18\" y=\"%g\" font-family=\"sans-serif\" font-size=\"13\" "
      "text-anchor=\"middle\" transform=\"rotate(-90 18 %g)\">%s</text>\n",
      0.5 * (kTop + kBottom), 0.5 * (kTop + kBottom), xml_escape(y_label).c_str());

  // Series.
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = series_color(k);
    if (s.markers) {
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        add("<circle cx=\"%.6g\" cy=\"%.6g\" r=\"3.5\" fill=\"%s\"/>\n", X(s.xs[i]),
            Y(s.ys[i]), color);
      }
    } else {
      svg += "<polyline fill=\"none\" stroke=\"";
      svg += color;
      svg += "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        add("%.6g,%.6g ", X(s.xs[i]), Y(s.ys[i]));
      }
      svg += "\"/>\n";
    }
    // Legend entry.
    const double ly = kTop + 16.0 + 18.0 * static_cast<double>(k);
    add("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" "
        "stroke-width=\"3\"/>\n",
        kLeft + 12.0, ly, kLeft + 36.0, ly, color);
    add("<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\">%s"
        "</text>\n",
        kLeft + 42.0, ly + 4.0, xml_escape(s.name).c_str());
  }
  svg += "</svg>\n";
  return svg;
}

// ----------------------------------------------------------------------------
// Manifest
// ----------------------------------------------------------------------------

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["config_echo"] = config_echo;
  j["tool_version"] = tool_version;
  j["wall_time_seconds"] = wall_time_seconds;
  j["output_files"] = output_files;
  return j.dump(2);
}

}  // namespace confactor::cli
