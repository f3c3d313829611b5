#pragma once

#include "heatlab/semigroup.hpp"

namespace heatlab {

enum class PlotKind { margins, li_yau, doubling, entropy };

inline const char* to_string(PlotKind k) {
  switch (k) {
    case PlotKind::margins: return "margins";
    case PlotKind::li_yau: return "li_yau";
    case PlotKind::doubling: return "doubling";
    case PlotKind::entropy: return "entropy";
  }
  return "unknown";
}

inline PlotKind parse_plot_kind(const std::string& s) {
  for (auto k : {PlotKind::margins, PlotKind::li_yau, PlotKind::doubling, PlotKind::entropy})
    if (s == to_string(k)) return k;
  throw Error(ErrorKind::config, "unknown plot kind '" + s + "' (margins, li_yau, doubling, entropy)");
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct PlotData {
  std::string csv;
  std::string svg;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

// Line chart with a frame, axis extremes and one polyline per series.
inline std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  const double W = 480, H = 320, L = 60, R = 20, T = 30, B = 40;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << svg_escape(title)
     << "</text>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 6 << "\" text-anchor=\"middle\" font-size=\"11\">"
     << svg_escape(xlabel) << "</text>\n";
  os << "<text x=\"12\" y=\"" << H / 2 << "\" font-size=\"11\" transform=\"rotate(-90 12 " << H / 2 << ")\">"
     << svg_escape(ylabel) << "</text>\n";
  os << "<text x=\"" << L << "\" y=\"" << H - B + 14 << "\" font-size=\"10\">" << x0 << "</text>\n";
  os << "<text x=\"" << W - R << "\" y=\"" << H - B + 14 << "\" font-size=\"10\" text-anchor=\"end\">" << x1
     << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" font-size=\"10\" text-anchor=\"end\">" << y0 << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << T + 8 << "\" font-size=\"10\" text-anchor=\"end\">" << y1 << "</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<polyline fill=\"none\" stroke=\"" << colours[k % 6] << "\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"><title>" << svg_escape(s.label) << "</title></polyline>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline const MarginReport* find_report(const MarginReport& r, const std::string& id) {
  if (r.check_id == id) return &r;
  for (const auto& p : r.parts)
    if (auto* f = find_report(p, id)) return f;
  return nullptr;
}

inline void group_by(std::map<double, Series>& groups, double key, const std::string& label, double x, double y) {
  auto& s = groups[key];
  s.label = label;
  s.x.push_back(x);
  s.y.push_back(y);
}

}  // namespace detail

inline bool plot_applies(const MarginReport& r, PlotKind k) {
  switch (k) {
    case PlotKind::margins: return true;
    case PlotKind::li_yau: return r.check_id.rfind("li_yau_", 0) == 0 && r.check_id != "li_yau_saturation";
    case PlotKind::doubling: return r.check_id == "doubling";
    case PlotKind::entropy: return detail::find_report(r, "entropy_decay") != nullptr;
  }
  return false;
}

// CSV series plus a small SVG for one report. Kinds:
//   margins   every sample, margin against sample index
//   li_yau    (t, node, lhs, rhs, margin), margin against t
//   doubling  (centre, r, ratio) sorted by r within each centre
//   entropy   (field, t, log_entropy) with the fitted slopes in the header
inline PlotData plot_data(const MarginReport& r, PlotKind kind) {
  require(plot_applies(r, kind), ErrorKind::config,
          std::string("plot kind '") + to_string(kind) + "' does not apply to report '" + r.check_id + "'");
  PlotData out;
  std::ostringstream csv;
  std::map<double, Series> groups;
  const std::string title = r.check_id + " on " + r.model_id;
  switch (kind) {
    case PlotKind::margins: {
      csv << to_csv(r);
      Series s{"margin", {}, {}};
      for (size_t i = 0; i < r.samples.size(); ++i) {
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(r.samples[i].margin);
      }
      out.svg = detail::render_svg(title, "sample", "margin", {s});
      break;
    }
    case PlotKind::li_yau: {
      csv << "t,node,field,lhs,rhs,margin\n";
      std::vector<const Sample*> rows;
      for (const auto& s : r.samples) rows.push_back(&s);
      std::stable_sort(rows.begin(), rows.end(),
                       [](const Sample* a, const Sample* b) { return a->param("t") < b->param("t"); });
      for (const auto* s : rows) {
        csv << format_double(s->param("t")) << ',' << format_double(s->param("node")) << ','
            << format_double(s->param("field")) << ',' << format_double(s->lhs) << ',' << format_double(s->rhs)
            << ',' << format_double(s->margin) << '\n';
        double f = s->param("field");
        detail::group_by(groups, f, "field " + format_double(f), s->param("t"), s->margin);
      }
      std::vector<Series> ser;
      for (auto& [k, s] : groups) ser.push_back(s);
      out.svg = detail::render_svg(title, "t", "margin", ser);
      break;
    }
    case PlotKind::doubling: {
      csv << "centre,r,ratio\n";
      std::vector<const Sample*> rows;
      for (const auto& s : r.samples)
        if (!std::isnan(s.param("ratio"))) rows.push_back(&s);
      std::stable_sort(rows.begin(), rows.end(), [](const Sample* a, const Sample* b) {
        return std::make_pair(a->param("centre"), a->param("r")) < std::make_pair(b->param("centre"), b->param("r"));
      });
      for (const auto* s : rows) {
        csv << format_double(s->param("centre")) << ',' << format_double(s->param("r")) << ','
            << format_double(s->param("ratio")) << '\n';
        double c = s->param("centre");
        detail::group_by(groups, c, "centre " + format_double(c), s->param("r"), s->param("ratio"));
      }
      std::vector<Series> ser;
      for (auto& [k, s] : groups) ser.push_back(s);
      out.svg = detail::render_svg(title, "r", "mu(B(2r)) / mu(B(r))", ser);
      break;
    }
    case PlotKind::entropy: {
      const auto* dec = detail::find_report(r, "entropy_decay");
      const auto* slope = detail::find_report(r, "entropy_slope");
      if (slope)
        for (const auto& s : slope->samples)
          csv << "# slope field=" << format_double(s.param("field")) << " " << format_double(s.lhs) << '\n';
      csv << "field,t,log_entropy\n";
      for (const auto& s : dec->samples) {
        if (!(s.lhs > 0)) continue;
        double f = s.param("field");
        csv << format_double(f) << ',' << format_double(s.param("t")) << ',' << format_double(std::log(s.lhs)) << '\n';
        detail::group_by(groups, f, "field " + format_double(f), s.param("t"), std::log(s.lhs));
      }
      std::vector<Series> ser;
      for (auto& [k, s] : groups) ser.push_back(s);
      out.svg = detail::render_svg(title, "t", "log entropy", ser);
      break;
    }
  }
  out.csv = csv.str();
  return out;
}

// Writes <stem>.<kind>.csv/.svg for every kind that applies, plus a margins
// file for each part.
inline void emit_all_plots(const MarginReport& r, const std::filesystem::path& dir, const std::string& stem) {
  for (auto k : {PlotKind::margins, PlotKind::li_yau, PlotKind::doubling, PlotKind::entropy}) {
    if (!plot_applies(r, k)) continue;
    auto pd = plot_data(r, k);
    write_file_atomic(dir / (stem + "." + to_string(k) + ".csv"), pd.csv);
    write_file_atomic(dir / (stem + "." + to_string(k) + ".svg"), pd.svg);
  }
  for (const auto& p : r.parts) {
    auto pd = plot_data(p, PlotKind::margins);
    write_file_atomic(dir / (stem + "." + p.check_id + ".csv"), pd.csv);
  }
}

}  // namespace heatlab
