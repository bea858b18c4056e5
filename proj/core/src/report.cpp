#include "solarlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "solarlab/errors.hpp"

namespace solarlab {

namespace {

// fixed-precision pixel coordinates so the bytes never wobble
std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

constexpr double kWidth = 840.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 30.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 60.0;

const char* kSeriesColors[] = {"#3b6ea5", "#d1862c", "#5a9e57", "#a05195"};

struct Frame {
  double lo = 0.0, hi = 1.0;

  double y_of(double v) const {
    double span = hi - lo;
    if (span <= 0.0) span = 1.0;
    return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - lo) / span);
  }
};

Frame frame_for(const std::vector<double>& values) {
  Frame f;
  if (values.empty()) return f;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (hi == lo) hi = lo + 1.0;
  double pad = 0.08 * (hi - lo);
  f.lo = lo == 0.0 ? 0.0 : lo - pad;
  f.hi = hi + pad;
  return f;
}

void open_svg(std::ostringstream& os, const std::string& title,
              const std::vector<std::string>& metadata) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
     << kHeight << "\">\n";
  for (const std::string& m : metadata)
    os << "<!-- " << xml_escape(m) << " -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << px(kWidth / 2.0)
     << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"17\" fill=\"#222\">"
     << xml_escape(title) << "</text>\n";
}

void axis_and_ticks(std::ostringstream& os, const Frame& f) {
  double x0 = kLeft, x1 = kWidth - kRight;
  double y0 = f.y_of(f.lo), y1 = f.y_of(f.hi);
  os << "<line x1=\"" << px(x0) << "\" y1=\"" << px(y0) << "\" x2=\"" << px(x0)
     << "\" y2=\"" << px(y1) << "\" stroke=\"#444\"/>\n";
  os << "<line x1=\"" << px(x0) << "\" y1=\"" << px(f.y_of(0.0)) << "\" x2=\""
     << px(x1) << "\" y2=\"" << px(f.y_of(0.0)) << "\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double v = f.lo + (f.hi - f.lo) * static_cast<double>(i) / 4.0;
    double y = f.y_of(v);
    os << "<line x1=\"" << px(x0 - 4) << "\" y1=\"" << px(y) << "\" x2=\""
       << px(x0) << "\" y2=\"" << px(y) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << px(x0 - 8) << "\" y=\"" << px(y + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
          "fill=\"#333\">"
       << short_num(v) << "</text>\n";
  }
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << body;
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace

void write_csv_file(const std::string& path,
                    const std::vector<std::string>& metadata,
                    const std::string& header,
                    const std::vector<std::string>& rows) {
  std::ostringstream os;
  for (const std::string& m : metadata) os << "# " << m << "\n";
  os << header << "\n";
  for (const std::string& r : rows) os << r << "\n";
  write_file(path, os.str());
}

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values,
                         const std::vector<std::string>& metadata) {
  write_grouped_bar_chart_svg(path, title, labels, {""}, {values}, metadata);
}

void write_grouped_bar_chart_svg(const std::string& path,
                                 const std::string& title,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::string>& series_names,
                                 const std::vector<std::vector<double>>& series,
                                 const std::vector<std::string>& metadata) {
  if (series.empty() || labels.empty())
    throw ContractError("chart needs at least one series and one label");
  for (const auto& s : series)
    if (s.size() != labels.size())
      throw ContractError("series length does not match label count");
  if (series_names.size() != series.size())
    throw ContractError("series name count does not match series count");

  std::vector<double> all;
  for (const auto& s : series) all.insert(all.end(), s.begin(), s.end());
  Frame f = frame_for(all);

  std::ostringstream os;
  open_svg(os, title, metadata);
  axis_and_ticks(os, f);

  double span = kWidth - kLeft - kRight;
  double slot = span / static_cast<double>(labels.size());
  double group_w = slot * 0.72;
  double bar_w = group_w / static_cast<double>(series.size());
  double base_y = f.y_of(0.0);

  for (size_t i = 0; i < labels.size(); ++i) {
    double gx = kLeft + slot * (static_cast<double>(i) + 0.14);
    for (size_t s = 0; s < series.size(); ++s) {
      double v = series[s][i];
      double y = f.y_of(v);
      double top = std::min(y, base_y);
      double h = std::abs(base_y - y);
      os << "<rect x=\"" << px(gx + bar_w * static_cast<double>(s)) << "\" y=\""
         << px(top) << "\" width=\"" << px(bar_w * 0.92) << "\" height=\""
         << px(h) << "\" fill=\""
         << kSeriesColors[s % 4] << "\"/>\n";
      os << "<text x=\""
         << px(gx + bar_w * (static_cast<double>(s) + 0.46))
         << "\" y=\"" << px(top - 4)
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            "font-size=\"10\" fill=\"#333\">"
         << short_num(v) << "</text>\n";
    }
    os << "<text x=\"" << px(kLeft + slot * (static_cast<double>(i) + 0.5))
       << "\" y=\"" << px(kHeight - kBottom + 22)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"12\" fill=\"#222\">"
       << xml_escape(labels[i]) << "</text>\n";
  }

  if (series.size() > 1) {
    double lx = kLeft + 8;
    for (size_t s = 0; s < series.size(); ++s) {
      double ly = kTop + 6 + 18.0 * static_cast<double>(s);
      os << "<rect x=\"" << px(lx) << "\" y=\"" << px(ly)
         << "\" width=\"12\" height=\"12\" fill=\"" << kSeriesColors[s % 4]
         << "\"/>\n";
      os << "<text x=\"" << px(lx + 18) << "\" y=\"" << px(ly + 10)
         << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">"
         << xml_escape(series_names[s]) << "</text>\n";
    }
  }
  os << "</svg>\n";
  write_file(path, os.str());
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<double>& xs,
                          const std::vector<double>& ys,
                          const std::vector<std::string>& metadata) {
  if (xs.size() != ys.size()) throw ContractError("x/y length mismatch");
  if (xs.empty()) throw ContractError("chart needs at least one point");
  Frame f = frame_for(ys);
  double xlo = *std::min_element(xs.begin(), xs.end());
  double xhi = *std::max_element(xs.begin(), xs.end());
  if (xhi == xlo) xhi = xlo + 1.0;

  auto x_of = [&](double v) {
    return kLeft + (kWidth - kLeft - kRight) * (v - xlo) / (xhi - xlo);
  };

  std::ostringstream os;
  open_svg(os, title, metadata);
  axis_and_ticks(os, f);

  os << "<polyline fill=\"none\" stroke=\"#3b6ea5\" stroke-width=\"1.6\" "
        "points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) os << " ";
    os << px(x_of(xs[i])) << "," << px(f.y_of(ys[i]));
  }
  os << "\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    double v = xlo + (xhi - xlo) * static_cast<double>(i) / 4.0;
    os << "<text x=\"" << px(x_of(v)) << "\" y=\"" << px(kHeight - kBottom + 22)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\" fill=\"#333\">"
       << short_num(v) << "</text>\n";
  }
  os << "<text x=\"" << px(kWidth / 2.0) << "\" y=\""
     << px(kHeight - 14)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        "fill=\"#222\">"
     << xml_escape(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << px(kHeight / 2.0)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        "fill=\"#222\" transform=\"rotate(-90 18 "
     << px(kHeight / 2.0) << ")\">" << xml_escape(y_label) << "</text>\n";
  os << "</svg>\n";
  write_file(path, os.str());
}

}  // namespace solarlab
