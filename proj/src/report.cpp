#include "cfaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "cfaudit/csv.hpp"

namespace cfaudit::report {

void TextTable::add_row(std::vector<std::string> row) {
  row.resize(header_.size());
  rows_.push_back(std::move(row));
}

std::string TextTable::render() const {
  std::vector<std::size_t> width(header_.size());
  for (std::size_t c = 0; c < header_.size(); ++c) width[c] = header_[c].size();
  for (const auto& r : rows_) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto numeric = [](const std::string& s) { return parse_double(s).has_value(); };
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& r, bool is_header) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) line += "  ";
      const std::size_t pad = width[c] - r[c].size();
      const bool right = !is_header && numeric(r[c]);
      if (right) line += std::string(pad, ' ');
      line += r[c];
      if (!right && c + 1 < r.size()) line += std::string(pad, ' ');
    }
    line.erase(line.find_last_not_of(' ') + 1);
    out << line << '\n';
  };
  emit(header_, true);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : rows_) emit(r, false);
  return out.str();
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return format_double(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string importance_text(const xai::ImportanceTable& t, std::size_t top) {
  TextTable tab({"Variable", "Importance"});
  const std::size_t k = top == 0 ? t.rows.size() : std::min(top, t.rows.size());
  for (std::size_t r = 0; r < k; ++r) tab.add_row({t.rows[r].name, fixed(t.rows[r].importance)});
  std::string s = tab.render();
  if (t.degenerate) s += "(degenerate: the forest has no splits within the depth limit)\n";
  return s;
}

std::string blp_text(const iai::BlpResult& r) {
  TextTable tab({"Term", "Coefficient", "Std. error", "t", "p", ""});
  for (const auto& row : r.rows) {
    tab.add_row({row.term, fixed(row.coefficient, 4), fixed(row.std_error, 4), fixed(row.t_stat, 2),
                 fixed(row.p_value, 4), iai::significance_stars(row.p_value)});
  }
  std::string s = tab.render();
  s += "n = " + std::to_string(r.n_used) + "; HC3 standard errors; * p<0.1, ** p<0.05, *** p<0.01\n";
  for (const auto& ref : r.reference_levels) s += "reference level: " + ref + "\n";
  for (const auto& ex : r.excluded_categories) s += "excluded category: " + ex + "\n";
  return s;
}

namespace {

const std::string& feature_name(const std::vector<std::string>& names, std::int32_t f) {
  static const std::string unknown = "?";
  return f >= 0 && static_cast<std::size_t>(f) < names.size() ? names[static_cast<std::size_t>(f)]
                                                                : unknown;
}

void tree_text_rec(const Tree& t, std::size_t k, const std::vector<std::string>& names,
                   int indent, std::ostringstream& out) {
  const Node& nd = t.nodes[k];
  const std::string pad(2 * static_cast<std::size_t>(indent), ' ');
  if (nd.is_leaf()) {
    out << pad << "effect = " << fixed(nd.value, 4) << "  (n = " << (nd.leaf_end - nd.leaf_begin)
        << ")\n";
    return;
  }
  const std::string& name = feature_name(names, nd.feature);
  out << pad << "if " << name << " <= " << format_double(nd.threshold) << ":\n";
  tree_text_rec(t, nd.left, names, indent + 1, out);
  out << pad << "else:  # " << name << " > " << format_double(nd.threshold) << "\n";
  tree_text_rec(t, nd.right, names, indent + 1, out);
}

nlohmann::ordered_json tree_json_rec(const Tree& t, std::size_t k,
                                     const std::vector<std::string>& names) {
  const Node& nd = t.nodes[k];
  nlohmann::ordered_json j;
  if (nd.is_leaf()) {
    j["leaf"] = true;
    j["value"] = nd.value;
    j["samples"] = nd.leaf_end - nd.leaf_begin;
    return j;
  }
  j["feature"] = feature_name(names, nd.feature);
  j["threshold"] = nd.threshold;
  j["value"] = nd.value;
  j["samples"] = nd.num_split_samples;
  j["left"] = tree_json_rec(t, nd.left, names);
  j["right"] = tree_json_rec(t, nd.right, names);
  return j;
}

// ---- SVG helpers ----

struct Canvas {
  double width, height;
  std::ostringstream body;

  std::string finish() const {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body.str() << "</svg>\n";
    return s.str();
  }
  void text(double x, double y, const std::string& s, const char* anchor = "start") {
    body << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\">"
         << escape(s) << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke = "#888") {
    body << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
         << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* fill) {
    body << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << std::max(w, 0.5)
         << "\" height=\"" << h << "\" fill=\"" << fill << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill
         << "\" fill-opacity=\"0.7\"/>\n";
  }
  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      switch (c) {
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '&': o += "&amp;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
      }
    }
    return o;
  }
};

struct Scale {
  double lo, hi, a, b;  // data [lo, hi] -> pixels [a, b]
  double operator()(double v) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : 0.5 * (a + b); }
};

}  // namespace

std::string tree_text(const Tree& t, const std::vector<std::string>& names) {
  std::ostringstream out;
  if (!t.nodes.empty()) tree_text_rec(t, 0, names, 0, out);
  return out.str();
}

std::string tree_json(const Tree& t, const std::vector<std::string>& names) {
  if (t.nodes.empty()) return "{}\n";
  return tree_json_rec(t, 0, names).dump(2) + "\n";
}

std::string svg_waterfall(const std::vector<xai::WaterfallBar>& bars, double base,
                          double prediction) {
  const double row_h = 22, left = 190, right = 40, top = 30;
  Canvas cv{700, top + row_h * static_cast<double>(bars.size() + 1) + 30, {}};
  // Running total from the base value, drawn bottom-up like the usual waterfall.
  double lo = std::min(base, prediction), hi = std::max(base, prediction), run = base;
  for (auto it = bars.rbegin(); it != bars.rend(); ++it) {
    run += it->contribution;
    lo = std::min(lo, run);
    hi = std::max(hi, run);
  }
  const Scale sx{lo, hi, left, cv.width - right};
  cv.text(left, 18, "f(x) = " + fixed(prediction, 4) + "   E[f(X)] = " + fixed(base, 4));
  run = base;
  for (std::size_t k = bars.size(); k-- > 0;) {
    const auto& b = bars[k];
    const double y = top + row_h * static_cast<double>(k);
    const double start = run, end = run + b.contribution;
    run = end;
    cv.rect(std::min(sx(start), sx(end)), y + 3, std::abs(sx(end) - sx(start)), row_h - 6,
            b.contribution >= 0 ? "#d62728" : "#1f77b4");
    std::string label = b.label;
    if (std::isfinite(b.feature_value)) label += " = " + fixed(b.feature_value, 3);
    cv.text(left - 6, y + row_h - 7, label, "end");
    cv.text(std::max(sx(start), sx(end)) + 4, y + row_h - 7, fixed(b.contribution, 3));
  }
  const double axis_y = top + row_h * static_cast<double>(bars.size()) + 4;
  cv.line(left, axis_y, cv.width - right, axis_y);
  cv.line(sx(base), top, sx(base), axis_y, "#bbb");
  return cv.finish();
}

std::string svg_beeswarm(const xai::BeeswarmTable& t) {
  const double row_h = 24, left = 160, right = 30, top = 20;
  Canvas cv{700, top + row_h * static_cast<double>(t.features.size()) + 40, {}};
  double lo = 0, hi = 0;
  for (const auto& f : t.features) {
    for (const auto& [v, c] : f.points) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  const Scale sx{lo, hi, left, cv.width - right};
  for (std::size_t k = 0; k < t.features.size(); ++k) {
    const auto& f = t.features[k];
    const double y = top + row_h * (static_cast<double>(k) + 0.5);
    cv.text(left - 8, y + 4, f.name, "end");
    double vlo = std::numeric_limits<double>::infinity(), vhi = -vlo;
    for (const auto& pt : f.points) {
      vlo = std::min(vlo, pt.first);
      vhi = std::max(vhi, pt.first);
    }
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const auto [v, c] = f.points[i];
      const double u = vhi > vlo ? (v - vlo) / (vhi - vlo) : 0.5;
      char col[16];
      std::snprintf(col, sizeof col, "#%02x%02x%02x", static_cast<int>(30 + 200 * u), 60,
                    static_cast<int>(230 - 200 * u));
      // Deterministic vertical jitter keeps overlapping points visible.
      const double jitter = (static_cast<double>((i * 2654435761U) % 1000) / 1000.0 - 0.5) * (row_h - 8);
      cv.circle(sx(c), y + jitter, 2.2, col);
    }
  }
  const double axis_y = top + row_h * static_cast<double>(t.features.size()) + 6;
  cv.line(left, axis_y, cv.width - right, axis_y);
  cv.line(sx(0.0), top, sx(0.0), axis_y, "#bbb");
  cv.text(0.5 * (left + cv.width - right), axis_y + 20, "contribution to the effect estimate", "middle");
  return cv.finish();
}

std::string svg_rashomon(const std::vector<iai::RashomonPoint>& points) {
  Canvas cv{640, 360, {}};
  const double left = 70, right = 30, top = 20, bottom = 50;
  std::vector<const iai::RashomonPoint*> sized;
  const iai::RashomonPoint* distilled = nullptr;
  for (const auto& p : points) {
    if (p.distilled) distilled = &p;
    else sized.push_back(&p);
  }
  double lo = 0, hi = 0, lmax = 0;
  for (const auto& p : points) {
    lo = std::min(lo, p.relative_r_loss);
    hi = std::max(hi, p.relative_r_loss);
  }
  for (auto* p : sized) lmax = std::max(lmax, std::log10(static_cast<double>(p->ensemble_size)));
  const Scale sx{0, std::max(lmax, 1.0), left, cv.width - right};
  const Scale sy{lo, hi, cv.height - bottom, top};
  cv.line(left, cv.height - bottom, cv.width - right, cv.height - bottom);
  cv.line(left, top, left, cv.height - bottom);
  cv.line(left, sy(0), cv.width - right, sy(0), "#ccc");
  for (std::size_t k = 0; k < sized.size(); ++k) {
    const double x = sx(std::log10(static_cast<double>(sized[k]->ensemble_size)));
    const double y = sy(sized[k]->relative_r_loss);
    cv.circle(x, y, 4, "#1f77b4");
    cv.text(x, cv.height - bottom + 16, sized[k]->label, "middle");
    if (k > 0) {
      cv.line(sx(std::log10(static_cast<double>(sized[k - 1]->ensemble_size))),
              sy(sized[k - 1]->relative_r_loss), x, y, "#1f77b4");
    }
  }
  if (distilled) {
    const double y = sy(distilled->relative_r_loss);
    cv.line(left, y, cv.width - right, y, "#d62728");
    cv.text(cv.width - right, y - 4, "distilled tree", "end");
  }
  cv.text(0.5 * (left + cv.width - right), cv.height - 12, "trees in ensemble (log scale)", "middle");
  cv.text(12, top + 4, "relative R-loss");
  return cv.finish();
}

std::string svg_profile(const std::vector<diagnostics::ProfileBin>& bins, const std::string& title) {
  Canvas cv{640, 340, {}};
  const double left = 70, right = 30, top = 30, bottom = 60;
  double lo = 0, hi = 0;
  for (const auto& b : bins) {
    lo = std::min(lo, b.mean_dr_score);
    hi = std::max(hi, b.mean_dr_score);
  }
  const Scale sy{lo, hi, cv.height - bottom, top};
  const double bw = bins.empty() ? 0 : (cv.width - left - right) / static_cast<double>(bins.size());
  cv.text(left, 18, title);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double x = left + bw * static_cast<double>(k);
    const double y0 = sy(0), y1 = sy(bins[k].mean_dr_score);
    cv.rect(x + 2, std::min(y0, y1), bw - 4, std::abs(y1 - y0), "#4c72b0");
    cv.text(x + bw / 2, cv.height - bottom + 14, fixed(bins[k].lo, 2), "middle");
  }
  cv.line(left, sy(0), cv.width - right, sy(0));
  cv.text(0.5 * (left + cv.width - right), cv.height - 20,
          "bins of the unshuffled variable (lower edge); bars = mean doubly robust score", "middle");
  return cv.finish();
}

}  // namespace cfaudit::report
