#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dualmpc/harness.hpp"

namespace dualmpc {

namespace {

constexpr std::array<const char*, 8> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

struct Box {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  void finish() {
    if (!std::isfinite(x0)) *this = {0.0, 1.0, 0.0, 1.0};
    if (x1 - x0 < 1e-9) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-9) y1 = y0 + 1.0;
  }
};

// Axes frame with a title and tick labels at the data extremes; `px`/`py`
// map data to page coordinates.
class Canvas {
 public:
  Canvas(double w, double h, Box b, bool equal_aspect) : w_(w), h_(h), b_(b) {
    b_.finish();
    sx_ = (w_ - kLeft - kRight) / (b_.x1 - b_.x0);
    sy_ = (h_ - kTop - kBottom) / (b_.y1 - b_.y0);
    if (equal_aspect) sx_ = sy_ = std::min(sx_, sy_);
  }

  double px(double x) const { return kLeft + (x - b_.x0) * sx_; }
  double py(double y) const { return h_ - kBottom - (y - b_.y0) * sy_; }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double width = 1.5, const std::string& dash = "") {
    if (pts.size() < 2) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width)
          << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << " points=\"";
    for (const auto& [x, y] : pts)
      if (std::isfinite(x) && std::isfinite(y)) body_ << num(px(x)) << "," << num(py(y)) << " ";
    body_ << "\"/>\n";
  }
  void marker(double x, double y, const std::string& color) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    body_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
  }
  void cross(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    const double cx = px(x), cy = py(y);
    body_ << "<path d=\"M" << num(cx - 5) << "," << num(cy - 5) << " L" << num(cx + 5) << ","
          << num(cy + 5) << " M" << num(cx - 5) << "," << num(cy + 5) << " L" << num(cx + 5)
          << "," << num(cy - 5) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  void legend(int row, const std::string& label, const std::string& color) {
    const double y = kTop + 14.0 * row;
    body_ << "<rect x=\"" << num(w_ - kRight + 8) << "\" y=\"" << num(y - 8) << "\" width=\"10\" "
          << "height=\"3\" fill=\"" << color << "\"/>\n";
    body_ << "<text x=\"" << num(w_ - kRight + 22) << "\" y=\"" << num(y - 4)
          << "\" font-size=\"10\">" << escape(label) << "</text>\n";
  }

  std::string render(const std::string& title, const std::string& xlabel,
                     const std::string& ylabel) const {
    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\""
      << num(h_) << "\" viewBox=\"0 0 " << num(w_) << " " << num(h_) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << num(w_ / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(title) << "</text>\n";
    const double l = kLeft, r = w_ - kRight, t = kTop, b = h_ - kBottom;
    s << "<path d=\"M" << num(l) << "," << num(t) << " L" << num(l) << "," << num(b) << " L"
      << num(r) << "," << num(b) << "\" fill=\"none\" stroke=\"black\"/>\n";
    auto label = [&](double x, double y, const std::string& text, const char* anchor) {
      s << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
        << "\" font-size=\"10\">" << escape(text) << "</text>\n";
    };
    label(l, b + 14, num(b_.x0), "start");
    label(r, b + 14, num(b_.x0 + (r - l) / sx_), "end");
    label(l - 4, b, num(b_.y0), "end");
    label(l - 4, t + 8, num(b_.y0 + (b - t) / sy_), "end");
    label((l + r) / 2, h_ - 6, xlabel, "middle");
    s << "<text x=\"12\" y=\"" << num((t + b) / 2) << "\" font-size=\"11\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 12 " << num((t + b) / 2) << ")\">" << escape(ylabel)
      << "</text>\n";
    s << body_.str() << "</svg>\n";
    return s.str();
  }

 private:
  static constexpr double kLeft = 56, kRight = 110, kTop = 30, kBottom = 36;
  double w_, h_;
  Box b_;
  double sx_ = 1.0, sy_ = 1.0;
  std::ostringstream body_;
};

const char* color(size_t i) { return kColors[i % kColors.size()]; }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

std::string trajectory_svg(const std::vector<TrialTrace>& traces) {
  Box box;
  for (const auto& t : traces)
    for (const auto& r : t.records)
      for (int o : t.agent_offsets) box.add(r.x[o], r.x[o + 1]);
  Canvas c(720, 360, box, true);
  int row = 0;
  for (size_t k = 0; k < traces.size(); ++k) {
    const auto& t = traces[k];
    for (size_t a = 0; a < t.agent_offsets.size(); ++a) {
      const int o = t.agent_offsets[a];
      std::vector<std::pair<double, double>> pts;
      for (const auto& r : t.records) pts.emplace_back(r.x[o], r.x[o + 1]);
      const char* col = color(a);
      c.polyline(pts, col, a == 0 ? 2.0 : 1.5, a == 0 ? "" : "5,3");
      if (!pts.empty()) c.marker(pts.front().first, pts.front().second, col);
      if (k == 0) c.legend(row++, a == 0 ? "robot" : "human " + std::to_string(a - 1), col);
    }
    for (const auto& r : t.records)
      if (r.collision) {
        c.cross(r.x[0], r.x[1]);
        break;
      }
  }
  std::string title = "trajectories";
  if (!traces.empty()) title += " (" + traces[0].scenario + ", " + traces[0].planner + ")";
  return c.render(title, "x [m]", "y [m]");
}

std::string belief_svg(const TrialTrace& t) {
  Box box;
  box.add(0.0, 0.0);
  box.add(t.records.empty() ? 1.0 : t.records.back().time, 1.0);
  Canvas c(720, 300, box, false);
  int row = 0;
  const size_t nh = t.records.empty() ? 0 : t.records[0].beliefs.size();
  size_t series = 0;
  for (size_t h = 0; h < nh; ++h) {
    const int nm = static_cast<int>(t.records[0].beliefs[h].p.size());
    for (int m = 0; m < nm; ++m, ++series) {
      std::vector<std::pair<double, double>> pts, truth;
      for (const auto& r : t.records) {
        pts.emplace_back(r.time, r.beliefs[h].p[m]);
        truth.emplace_back(r.time, r.true_modes[h] == m ? 1.0 : 0.0);
      }
      const char* col = color(series);
      c.polyline(pts, col);
      c.polyline(truth, col, 0.8, "2,3");
      c.legend(row++, "h" + std::to_string(h) + " p(M=" + std::to_string(m) + ")", col);
    }
  }
  return c.render("mode belief (dotted: true mode)", "t [s]", "p(M)");
}

std::string entropy_svg(const std::vector<TrialTrace>& traces) {
  Box box;
  box.add(0.0, 0.0);
  std::vector<std::vector<std::pair<double, double>>> curves;
  for (const auto& t : traces) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : t.records) {
      double h = 0.0;
      for (const auto& b : r.beliefs) h += categorical_entropy(b.p);
      pts.emplace_back(r.time, h);
      box.add(r.time, h);
    }
    curves.push_back(std::move(pts));
  }
  Canvas c(720, 300, box, false);
  for (size_t k = 0; k < curves.size(); ++k) {
    c.polyline(curves[k], color(k));
    if (k < 12)
      c.legend(static_cast<int>(k), traces[k].planner + " #" + std::to_string(traces[k].trial),
               color(k));
  }
  return c.render("mode entropy", "t [s]", "H(p(M)) [nat]");
}

std::vector<std::string> export_plot(const std::vector<TrialTrace>& traces,
                                     const std::string& stem) {
  require(!traces.empty(), "export_plot: no traces");
  std::vector<std::string> paths{stem + "_traj.svg", stem + "_belief.svg", stem + "_entropy.svg"};
  write_file(paths[0], trajectory_svg(traces));
  write_file(paths[1], belief_svg(traces[0]));
  write_file(paths[2], entropy_svg(traces));
  return paths;
}

}  // namespace dualmpc
