#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "twsc/harness.hpp"

namespace twsc {

enum class PlotMetric { psnr, ssim };
enum class PlotAxis { snr, epoch };

inline PlotMetric parse_plot_metric(const std::string& s) {
  if (s == "psnr") return PlotMetric::psnr;
  if (s == "ssim") return PlotMetric::ssim;
  throw UsageError("--metric must be psnr or ssim");
}
inline PlotAxis parse_plot_axis(const std::string& s) {
  if (s == "snr") return PlotAxis::snr;
  if (s == "epoch") return PlotAxis::epoch;
  throw UsageError("--x must be snr or epoch");
}

/// One curve. x/y keep the input text so the sidecar reproduces the source values exactly.
struct Series {
  std::string label;
  std::vector<std::string> x;
  std::vector<std::string> y;
};

struct PlotRequest {
  PlotMetric metric = PlotMetric::psnr;
  PlotAxis x = PlotAxis::snr;
  std::vector<fs::path> inputs;  // metrics.csv files (x=epoch) or eval CSVs (x=snr)
  std::vector<std::string> directions{"avg"};
  std::optional<std::string> eval_channel;  // keep only rows evaluated on this channel
  fs::path out;                             // .svg; the sidecar is the same path with .csv
  std::string title;
};

/// runs/<id>/metrics.csv and runs/<id>/eval/<file>.csv both map to <id>.
inline std::string run_id_of(const fs::path& input) {
  const fs::path parent = fs::absolute(input).parent_path();
  if (parent.filename() == "eval") return parent.parent_path().filename().string();
  return parent.filename().string();
}

inline std::vector<Series> collect_series(const PlotRequest& req) {
  if (req.inputs.empty()) throw UsageError("plot needs at least one input CSV");
  std::vector<Series> out;
  for (const auto& path : req.inputs) {
    const CsvTable t = read_csv(path);
    const std::string id = run_id_of(path);
    std::size_t xc, yc, dc;
    std::optional<std::size_t> mode_c, channel_c;
    if (req.x == PlotAxis::epoch) {
      if (!t.has_column("epoch") || !t.has_column("mode"))
        throw UsageError(path.string() + " is not a metrics.csv (needed for --x epoch)");
      xc = t.column("epoch");
      yc = t.column(req.metric == PlotMetric::psnr ? "psnr" : "ssim");
      mode_c = t.column("mode");
    } else {
      if (!t.has_column("snr_db") || !t.has_column("eval_channel"))
        throw UsageError(path.string() + " is not an evaluation CSV (needed for --x snr)");
      xc = t.column("snr_db");
      yc = t.column(req.metric == PlotMetric::psnr ? "psnr_db" : "ssim");
      channel_c = t.column("eval_channel");
    }
    dc = t.column("direction");
    for (const auto& dir : req.directions) {
      Series s;
      s.label = req.directions.size() == 1 ? id : id + " " + dir;
      for (const auto& row : t.rows) {
        if (row[dc] != dir) continue;
        if (mode_c && row[*mode_c] != "eval") continue;
        if (channel_c && req.eval_channel && row[*channel_c] != *req.eval_channel) continue;
        s.x.push_back(row[xc]);
        s.y.push_back(row[yc]);
      }
      if (!s.x.empty()) out.push_back(std::move(s));
    }
  }
  if (out.empty()) throw UsageError("no plottable rows in the input tables");
  return out;
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Tick positions at 1/2/5 x 10^k spacing covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 ? 0.0 : v);
  return t;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// Static SVG line chart: one polyline with markers per series and a legend of the labels.
inline std::string render_svg(const std::vector<Series>& series, const std::string& x_label, const std::string& y_label,
                              const std::string& title) {
  constexpr double W = 760, H = 480, left = 70, right = 200, top = 40, bottom = 60;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double x = parse_cell(s.x[i]), y = parse_cell(s.y[i]);
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  using detail::num;

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" viewBox=\"0 0 " + num(W) +
       " " + num(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + detail::xml_escape(title) + "</text>\n";
  for (double t : detail::nice_ticks(x0, x1)) {
    o += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(px(t)) + "\" y2=\"" + num(top + ph) +
         "\" stroke=\"#e0e0e0\"/>\n";
    o += "<text x=\"" + num(px(t)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" + detail::tick_label(t) + "</text>\n";
  }
  for (double t : detail::nice_ticks(y0, y1)) {
    o += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(left + pw) + "\" y2=\"" + num(py(t)) +
         "\" stroke=\"#e0e0e0\"/>\n";
    o += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" + detail::tick_label(t) + "</text>\n";
  }
  o += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  o += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(H - 16) + "\" text-anchor=\"middle\">" + detail::xml_escape(x_label) + "</text>\n";
  o += "<text transform=\"translate(18," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       detail::xml_escape(y_label) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string color = palette[k % std::size(palette)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double x = parse_cell(s.x[i]), y = parse_cell(s.y[i]);
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      pts += num(px(x)) + "," + num(py(y)) + " ";
      o += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    o += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    o += "<line x1=\"" + num(W - right + 12) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(W - right + 36) + "\" y2=\"" +
         num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    o += "<text class=\"legend\" x=\"" + num(W - right + 42) + "\" y=\"" + num(ly) + "\">" + detail::xml_escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

inline std::string sidecar_csv(const std::vector<Series>& series) {
  std::string o = "series,x,y\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) o += s.label + ',' + s.x[i] + ',' + s.y[i] + '\n';
  return o;
}

struct PlotResult {
  fs::path svg;
  fs::path sidecar;
  std::vector<Series> series;
};

inline PlotResult plot_command(const PlotRequest& req) {
  if (req.out.empty()) throw UsageError("plot needs --out");
  PlotResult res;
  res.series = collect_series(req);
  res.svg = req.out;
  res.sidecar = fs::path(req.out).replace_extension(".csv");
  const std::string x_label = req.x == PlotAxis::snr ? "SNR (dB)" : "epoch";
  const std::string y_label = req.metric == PlotMetric::psnr ? "PSNR (dB)" : "SSIM";
  write_text(res.svg, render_svg(res.series, x_label, y_label, req.title.empty() ? y_label + " vs " + x_label : req.title));
  write_text(res.sidecar, sidecar_csv(res.series));
  return res;
}

}  // namespace twsc
