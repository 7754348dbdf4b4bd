#include "effectport/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "effectport/stats.hpp"

namespace effectport::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Maps data coordinates into a pixel rectangle; y may be log-scaled.
struct Frame {
  double left, top, width, height;
  double x_lo, x_hi, y_lo, y_hi;
  bool log_y = false;

  double px(double x) const { return left + (x - x_lo) / (x_hi - x_lo) * width; }
  double py(double y) const {
    const double t = log_y ? (std::log(y) - std::log(y_lo)) / (std::log(y_hi) - std::log(y_lo))
                           : (y - y_lo) / (y_hi - y_lo);
    return top + height - t * height;
  }
};

void axes(std::ostringstream& out, const Frame& f, const std::string& x_label,
          const std::string& y_label, int ticks = 5) {
  out << "<rect x=\"" << num(f.left) << "\" y=\"" << num(f.top) << "\" width=\"" << num(f.width)
      << "\" height=\"" << num(f.height) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= ticks; ++i) {
    const double x = f.x_lo + (f.x_hi - f.x_lo) * i / ticks;
    out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(f.top + f.height + 14)
        << "\" font-size=\"10\" text-anchor=\"middle\">" << num(x) << "</text>\n";
    double y;
    if (f.log_y) {
      y = std::exp(std::log(f.y_lo) + (std::log(f.y_hi) - std::log(f.y_lo)) * i / ticks);
    } else {
      y = f.y_lo + (f.y_hi - f.y_lo) * i / ticks;
    }
    out << "<text x=\"" << num(f.left - 4) << "\" y=\"" << num(f.py(y) + 3)
        << "\" font-size=\"10\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  out << "<text x=\"" << num(f.left + f.width / 2) << "\" y=\"" << num(f.top + f.height + 30)
      << "\" font-size=\"11\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  out << "<text x=\"" << num(f.left - 38) << "\" y=\"" << num(f.top + f.height / 2)
      << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 "
      << num(f.left - 38) << ' ' << num(f.top + f.height / 2) << ")\">" << escape(y_label)
      << "</text>\n";
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& style) {
  std::ostringstream out;
  out << "<polyline fill=\"none\" " << style << " points=\"";
  for (const auto& [x, y] : pts) out << num(x) << ',' << num(y) << ' ';
  out << "\"/>\n";
  return out.str();
}

std::string band(const Frame& f, const bglmm::ConditionalCurve& c, bool prediction,
                 const std::string& fill) {
  std::ostringstream out;
  out << "<polygon fill=\"" << fill << "\" stroke=\"none\" points=\"";
  for (const auto& p : c.points) {
    out << num(f.px(p.p0)) << ',' << num(f.py(prediction ? p.pred_high : p.compat_high)) << ' ';
  }
  for (auto it = c.points.rbegin(); it != c.points.rend(); ++it) {
    out << num(f.px(it->p0)) << ',' << num(f.py(prediction ? it->pred_low : it->compat_low)) << ' ';
  }
  out << "\"/>\n";
  return out.str();
}

std::string header(double width, double height) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height)
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out.str();
}

}  // namespace

std::string forest_plot(const std::vector<ForestPanel>& panels) {
  const double row_h = 18, width = 640, left = 160, plot_w = 360;
  double total_h = 20;
  for (const auto& p : panels) total_h += (p.fit.studies.size() + 4) * row_h + 40;
  std::ostringstream out;
  out << header(width, total_h);

  double y0 = 20;
  for (const auto& panel : panels) {
    const auto& fit = panel.fit;
    double lo = fit.pooled.ci_low, hi = fit.pooled.ci_high;
    std::vector<EffectEstimate> rows;
    for (const auto& s : fit.studies) {
      rows.push_back(wald_estimate(fit.kind, s.y, std::sqrt(s.v), fit.pooled.level));
      lo = std::min(lo, rows.back().ci_low);
      hi = std::max(hi, rows.back().ci_high);
    }
    const bool ratio = is_ratio(fit.kind);
    if (ratio) {
      lo = std::min(lo, 1.0) / 1.1;
      hi = std::max(hi, 1.0) * 1.1;
    } else {
      const double pad = 0.05 * (hi - lo + 1e-9);
      lo = std::min(lo, 0.0) - pad;
      hi = std::max(hi, 0.0) + pad;
    }
    auto px = [&](double v) {
      const double t = ratio ? (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo))
                             : (v - lo) / (hi - lo);
      return left + t * plot_w;
    };
    out << "<text x=\"10\" y=\"" << num(y0) << "\" font-size=\"13\" font-weight=\"bold\">"
        << escape(panel.title) << " (" << to_string(fit.kind) << ", "
        << meta::to_string(fit.method) << ")</text>\n";
    double y = y0 + row_h;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& e = rows[i];
      const std::string label = i < panel.labels.size() ? panel.labels[i] : "study " + std::to_string(i + 1);
      out << "<text x=\"10\" y=\"" << num(y + 4) << "\" font-size=\"11\">" << escape(label)
          << "</text>\n";
      out << "<line x1=\"" << num(px(e.ci_low)) << "\" y1=\"" << num(y) << "\" x2=\""
          << num(px(e.ci_high)) << "\" y2=\"" << num(y) << "\" stroke=\"black\"/>\n";
      out << "<rect x=\"" << num(px(e.point) - 3) << "\" y=\"" << num(y - 3)
          << "\" width=\"6\" height=\"6\" fill=\"black\"/>\n";
      out << "<text x=\"" << num(left + plot_w + 10) << "\" y=\"" << num(y + 4)
          << "\" font-size=\"11\">" << num(e.point) << " (" << num(e.ci_low) << ", "
          << num(e.ci_high) << ")</text>\n";
      y += row_h;
    }
    const auto& pe = fit.pooled;
    out << "<text x=\"10\" y=\"" << num(y + 4) << "\" font-size=\"11\" font-weight=\"bold\">Pooled</text>\n";
    out << "<polygon fill=\"#4a7ab5\" points=\"" << num(px(pe.ci_low)) << ',' << num(y) << ' '
        << num(px(pe.point)) << ',' << num(y - 6) << ' ' << num(px(pe.ci_high)) << ',' << num(y)
        << ' ' << num(px(pe.point)) << ',' << num(y + 6) << "\"/>\n";
    out << "<text x=\"" << num(left + plot_w + 10) << "\" y=\"" << num(y + 4)
        << "\" font-size=\"11\" font-weight=\"bold\">" << num(pe.point) << " (" << num(pe.ci_low)
        << ", " << num(pe.ci_high) << ")</text>\n";
    const double null_x = px(ratio ? 1.0 : 0.0);
    out << "<line x1=\"" << num(null_x) << "\" y1=\"" << num(y0 + 6) << "\" x2=\"" << num(null_x)
        << "\" y2=\"" << num(y + 10) << "\" stroke=\"#999\" stroke-dasharray=\"3,3\"/>\n";
    out << "<text x=\"" << num(left) << "\" y=\"" << num(y + 26) << "\" font-size=\"10\">tau2 = "
        << num(fit.tau2) << ", Q = " << num(fit.q) << ", k = " << fit.k << "</text>\n";
    y0 = y + 3 * row_h + 20;
  }
  out << "</svg>\n";
  return out.str();
}

std::string curve_plot(const std::vector<CurvePanel>& panels, const std::string& title) {
  const double panel_w = 300, panel_h = 240, margin_l = 60, margin_t = 40, gap = 70;
  const double width = margin_l + panels.size() * (panel_w + gap);
  const double height = margin_t + panel_h + 60;
  std::ostringstream out;
  out << header(width, height);
  out << "<text x=\"" << num(width / 2) << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
      << escape(title) << "</text>\n";

  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto& c = panels[i].curve;
    const bool ratio = is_ratio(c.kind);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto grow = [&](double v) {
      if (!std::isfinite(v) || (ratio && v <= 0)) return;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    };
    for (const auto& p : c.points) {
      grow(p.value);
      if (c.has_bands) {
        grow(p.pred_low);
        grow(p.pred_high);
      }
    }
    for (const auto& [x, y] : panels[i].observed) grow(y);
    if (!(lo < hi)) {
      lo = ratio ? 0.5 : -0.5;
      hi = ratio ? 2.0 : 0.5;
    }
    if (ratio) {
      lo /= 1.1;
      hi *= 1.1;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
    const Frame f{margin_l + i * (panel_w + gap), margin_t, panel_w, panel_h, 0, 1, lo, hi, ratio};
    out << "<g>\n";
    if (c.has_bands) {
      out << band(f, c, true, "#d9e6f5");
      out << band(f, c, false, "#8fb3de");
    }
    std::vector<std::pair<double, double>> line;
    for (const auto& p : c.points) line.emplace_back(f.px(p.p0), f.py(p.value));
    out << polyline(line, "stroke=\"#1f4e8c\" stroke-width=\"2\"");
    for (const auto& [x, y] : panels[i].observed) {
      if (ratio && y <= 0) continue;
      out << "<circle cx=\"" << num(f.px(x)) << "\" cy=\"" << num(f.py(y))
          << "\" r=\"3\" fill=\"none\" stroke=\"#c0392b\"/>\n";
    }
    axes(out, f, "Baseline risk", std::string(to_string(c.kind)));
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string scatter_plot(const std::vector<corpus::Record>& records,
                         const std::vector<corpus::Summary>& summaries) {
  const double panel = 300, margin_l = 60, margin_t = 40, gap = 70;
  const double width = margin_l + std::max<std::size_t>(1, summaries.size()) * (panel + gap);
  const double height = margin_t + panel + 60;
  std::ostringstream out;
  out << header(width, height);
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    const Frame f{margin_l + i * (panel + gap), margin_t, panel, panel, -1, 1, -1, 1, false};
    out << "<text x=\"" << num(f.left + panel / 2) << "\" y=\"25\" font-size=\"13\" "
        << "text-anchor=\"middle\">" << escape(s.label) << " (n = " << s.n_used << ")</text>\n";
    out << "<line x1=\"" << num(f.px(-1)) << "\" y1=\"" << num(f.py(-1)) << "\" x2=\""
        << num(f.px(1)) << "\" y2=\"" << num(f.py(1)) << "\" stroke=\"#999\" stroke-dasharray=\"4,3\"/>\n";
    for (const auto& r : records) {
      if (r.k < s.k_min || (s.k_max && r.k >= *s.k_max) || !r.usable()) continue;
      out << "<circle cx=\"" << num(f.px(r.rho_or->rho)) << "\" cy=\"" << num(f.py(r.rho_rr->rho))
          << "\" r=\"2\" fill=\"#1f4e8c\" fill-opacity=\"0.5\"/>\n";
    }
    if (s.line) {
      const double y_at_lo = s.line->intercept - s.line->slope;
      const double y_at_hi = s.line->intercept + s.line->slope;
      out << "<line x1=\"" << num(f.px(-1)) << "\" y1=\"" << num(f.py(y_at_lo)) << "\" x2=\""
          << num(f.px(1)) << "\" y2=\"" << num(f.py(y_at_hi))
          << "\" stroke=\"#e67e22\" stroke-width=\"2\"/>\n";
    }
    axes(out, f, "Spearman rho (OR vs baseline risk)", "Spearman rho (RR vs baseline risk)", 4);
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace effectport::svg
