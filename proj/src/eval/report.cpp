#include "scopeqa/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "scopeqa/error.hpp"

namespace scopeqa::eval {

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["plcc"] = r.plcc;
  j["srocc"] = r.srocc;
  j["krocc"] = r.krocc;
  j["plcc_raw"] = r.plcc_raw;
  j["srocc_mapped"] = r.srocc_mapped;
  j["krocc_mapped"] = r.krocc_mapped;
  j["clips"] = r.rows.size();
  j["logistic"] = {{"beta", r.logistic.params.beta},
                   {"converged", r.logistic.converged},
                   {"iterations", r.logistic.iterations},
                   {"rmse", r.logistic.rmse}};
  if (r.confusion) {
    j["accuracy"] = r.confusion->accuracy;
    j["classes"] = r.confusion->classes;
    j["samples"] = r.confusion->total;
  }
  return j;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axes {
  double x0, x1, y0, y1;
  static constexpr double kWidth = 560, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40,
                          kBottom = 60;

  double sx(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double sy(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

std::string frame_svg(const Axes& a, const std::string& title, const std::string& xlabel,
                      const std::string& ylabel) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(Axes::kWidth) +
                  "\" height=\"" + px(Axes::kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + px(Axes::kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       escape(title) + "</text>\n";
  const double l = a.sx(a.x0), r = a.sx(a.x1), t = a.sy(a.y1), b = a.sy(a.y0);
  s += "<rect x=\"" + px(l) + "\" y=\"" + px(t) + "\" width=\"" + px(r - l) + "\" height=\"" +
       px(b - t) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = a.x0 + (a.x1 - a.x0) * i / 5.0, yv = a.y0 + (a.y1 - a.y0) * i / 5.0;
    s += "<line x1=\"" + px(a.sx(xv)) + "\" y1=\"" + px(b) + "\" x2=\"" + px(a.sx(xv)) + "\" y2=\"" +
         px(b + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + px(a.sx(xv)) + "\" y=\"" + px(b + 18) + "\" text-anchor=\"middle\">" +
         escape(num(std::round(xv * 1000) / 1000)) + "</text>\n";
    s += "<line x1=\"" + px(l - 5) + "\" y1=\"" + px(a.sy(yv)) + "\" x2=\"" + px(l) + "\" y2=\"" +
         px(a.sy(yv)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + px(l - 8) + "\" y=\"" + px(a.sy(yv) + 4) + "\" text-anchor=\"end\">" +
         escape(num(std::round(yv * 1000) / 1000)) + "</text>\n";
  }
  s += "<text x=\"" + px((l + r) / 2) + "\" y=\"" + px(Axes::kHeight - 15) +
       "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text transform=\"translate(18," + px((t + b) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + escape(ylabel) + "</text>\n";
  return s;
}

}  // namespace

std::string report_rows_csv(const EvalReport& r) {
  std::string out = "id,mos,raw,mapped\n";
  for (const auto& row : r.rows)
    out += row.id + "," + num(row.mos) + "," + num(row.raw) + "," + num(row.mapped) + "\n";
  return out;
}

std::string scatter_svg(const EvalReport& r, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : r.rows) {
    lo = std::min({lo, row.mos, row.mapped});
    hi = std::max({hi, row.mos, row.mapped});
  }
  if (r.rows.empty()) lo = 0, hi = 1;
  pad_range(lo, hi);
  const Axes a{lo, hi, lo, hi};
  std::string s = frame_svg(a, title, "predicted (mapped)", "MOS");
  s += "<line x1=\"" + px(a.sx(lo)) + "\" y1=\"" + px(a.sy(lo)) + "\" x2=\"" + px(a.sx(hi)) +
       "\" y2=\"" + px(a.sy(hi)) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& row : r.rows) {
    s += "<circle cx=\"" + px(a.sx(row.mapped)) + "\" cy=\"" + px(a.sy(row.mos)) +
         "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.8\"><title>" + escape(row.id) +
         "</title></circle>\n";
  }
  s += "<text x=\"" + px(a.sx(lo) + 8) + "\" y=\"" + px(a.sy(hi) + 16) + "\">PLCC " +
       num(std::round(r.plcc * 10000) / 10000) + "  SROCC " +
       num(std::round(r.srocc * 10000) / 10000) + "</text>\n";
  return s + "</svg>\n";
}

std::string loss_curve_svg(const std::vector<LossSeries>& series, const std::string& title) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& ls : series) {
    require(ls.epochs.size() == ls.values.size(), ErrorCode::kShape,
            "loss series '" + ls.name + "' has mismatched lengths");
    for (std::size_t i = 0; i < ls.values.size(); ++i) {
      x0 = std::min(x0, ls.epochs[i]);
      x1 = std::max(x1, ls.epochs[i]);
      y0 = std::min(y0, ls.values[i]);
      y1 = std::max(y1, ls.values[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  pad_range(y0, y1);
  if (!(x1 > x0)) x1 = x0 + 1;
  const Axes a{x0, x1, y0, y1};
  std::string s = frame_svg(a, title, "epoch", "loss");
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ls = series[k];
    const char* color = kColors[k % 5];
    std::string pts;
    for (std::size_t i = 0; i < ls.values.size(); ++i)
      pts += px(a.sx(ls.epochs[i])) + "," + px(a.sy(ls.values[i])) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
         pts + "\"/>\n";
    const double ly = Axes::kTop + 16 + 16 * double(k);
    s += "<line x1=\"" + px(Axes::kWidth - 170) + "\" y1=\"" + px(ly - 4) + "\" x2=\"" +
         px(Axes::kWidth - 150) + "\" y2=\"" + px(ly - 4) + "\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + px(Axes::kWidth - 145) + "\" y=\"" + px(ly) + "\">" + escape(ls.name) +
         "</text>\n";
  }
  return s + "</svg>\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(bool(out), ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace scopeqa::eval
