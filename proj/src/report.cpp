#include "inkmark/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "inkmark/error.hpp"

namespace inkmark {

namespace {

std::string num(double x, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
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

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string canonical_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string pools_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "pool,avg_entropy_bits,avg_spike_entropy,fpr,fpr_ci_lower,fpr_ci_upper,fnr,fnr_ci_lower,fnr_ci_upper,"
         "n_texts,text_len\n";
  for (const auto& p : report.pools) {
    out << csv_field(p.name) << ',' << num(p.avg_entropy_bits) << ',' << num(p.avg_spike_entropy) << ','
        << num(p.fpr) << ',' << num(p.fpr_ci.lower) << ',' << num(p.fpr_ci.upper) << ',' << num(p.fnr) << ','
        << num(p.fnr_ci.lower) << ',' << num(p.fnr_ci.upper) << ',' << p.n_texts << ',' << p.text_len << '\n';
  }
  return out.str();
}

std::string roc_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "pool,threshold,fpr,fnr\n";
  for (const auto& p : report.pools) {
    for (const auto& pt : p.roc) {
      out << csv_field(p.name) << ',' << num(pt.threshold) << ',' << num(pt.fpr) << ',' << num(pt.fnr) << '\n';
    }
  }
  return out.str();
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<SvgSeries>& series) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };
  const char* f = "%.2f";

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
    << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << num(kW / 2, f) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n"
    << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    const double yv = y0 + (y1 - y0) * i / 5.0;
    o << "<line x1=\"" << num(sx(xv), f) << "\" y1=\"" << num(kTop + ph, f) << "\" x2=\"" << num(sx(xv), f)
      << "\" y2=\"" << num(kTop + ph + 5, f) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(sx(xv), f) << "\" y=\"" << num(kTop + ph + 18, f) << "\" text-anchor=\"middle\">"
      << num(xv, "%.3g") << "</text>\n"
      << "<line x1=\"" << num(kLeft - 5, f) << "\" y1=\"" << num(sy(yv), f) << "\" x2=\"" << kLeft << "\" y2=\""
      << num(sy(yv), f) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(kLeft - 8, f) << "\" y=\"" << num(sy(yv) + 4, f) << "\" text-anchor=\"end\">"
      << num(yv, "%.3g") << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2, f) << "\" y=\"" << num(kH - 15, f) << "\" text-anchor=\"middle\">"
    << xml_escape(x_label) << "</text>\n"
    << "<text x=\"18\" y=\"" << num(kTop + ph / 2, f) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << num(kTop + ph / 2, f) << ")\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) o << ' ';
      o << num(sx(s.points[i].first), f) << ',' << num(sy(s.points[i].second), f);
    }
    o << "\"/>\n";
    for (const auto& [x, y] : s.points) {
      o << "<circle cx=\"" << num(sx(x), f) << "\" cy=\"" << num(sy(y), f) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
    const double ly = kTop + 12 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << num(kW - kRight + 15, f) << "\" y1=\"" << num(ly, f) << "\" x2=\""
      << num(kW - kRight + 35, f) << "\" y2=\"" << num(ly, f) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << num(kW - kRight + 40, f) << "\" y=\"" << num(ly + 4, f) << "\">" << xml_escape(s.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string fnr_vs_entropy_svg(const ExperimentReport& report) {
  SvgSeries s{"FNR at global threshold", {}};
  for (const auto& p : report.pools) s.points.emplace_back(p.avg_entropy_bits, p.fnr);
  std::sort(s.points.begin(), s.points.end());
  return svg_line_chart("FNR vs average entropy", "average entropy (bits/token)", "false negative rate", {s});
}

std::string roc_svg(const ExperimentReport& report) {
  std::vector<SvgSeries> series;
  for (const auto& p : report.pools) {
    SvgSeries s{p.name, {}};
    for (const auto& pt : p.roc) s.points.emplace_back(pt.fpr, 1.0 - pt.fnr);
    std::sort(s.points.begin(), s.points.end());
    series.push_back(std::move(s));
  }
  return svg_line_chart("ROC per pool", "false positive rate", "true positive rate", series);
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  const std::vector<std::pair<std::string, std::string>> files{
      {"report.json", canonical_json(report.to_json())},
      {"pools.csv", pools_csv(report)},
      {"roc.csv", roc_csv(report)},
      {"fnr_vs_entropy.svg", fnr_vs_entropy_svg(report)},
      {"roc.svg", roc_svg(report)},
  };
  std::vector<std::filesystem::path> written;
  for (const auto& [name, body] : files) {
    write_file(dir / name, body);
    written.push_back(dir / name);
  }
  return written;
}

}  // namespace inkmark
