#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "nacu/error.hpp"
#include "nacu/harness.hpp"
#include "text_io.hpp"

namespace nacu {
namespace {

std::string num(double v) { return std::isnan(v) ? "nan" : text_io::decimal(v); }

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
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

// Grouped bar chart: one group per dataset, one bar per method, CI whiskers.
void write_svg(const std::vector<const ReportRow*>& rows, Study study, std::ostream& out) {
  std::vector<std::string> datasets, methods;
  for (const auto* r : rows) {
    if (std::find(datasets.begin(), datasets.end(), r->dataset) == datasets.end()) datasets.push_back(r->dataset);
    if (std::find(methods.begin(), methods.end(), r->method) == methods.end()) methods.push_back(r->method);
  }
  const double bar = 18.0, gap = 24.0, left = 60.0, top = 40.0, plot_h = 240.0;
  const double group_w = bar * static_cast<double>(std::max<std::size_t>(methods.size(), 1)) + gap;
  const double width = left + group_w * static_cast<double>(std::max<std::size_t>(datasets.size(), 1)) + 140.0;
  const double height = top + plot_h + 70.0;
  const auto y_of = [&](double rho) { return top + (1.0 - (std::clamp(rho, -1.0, 1.0) + 1.0) / 2.0) * plot_h; };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">Correlation of uncertainty with "
      << (study == Study::ood ? "OoD label" : "per-sample squared error") << " (95% CI)</text>\n";
  for (double t : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    out << "<line x1=\"" << left << "\" x2=\"" << width - 140.0 << "\" y1=\"" << y_of(t) << "\" y2=\"" << y_of(t)
        << "\" stroke=\"" << (t == 0.0 ? "#000" : "#ddd") << "\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << y_of(t) + 4 << "\" text-anchor=\"end\">" << short_num(t)
        << "</text>\n";
  }
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const double gx = left + gap / 2.0 + group_w * static_cast<double>(d);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const ReportRow* r) { return r->dataset == datasets[d] && r->method == methods[m]; });
      if (it == rows.end() || std::isnan((*it)->rho_mean)) continue;
      const auto& r = **it;
      const double x = gx + bar * static_cast<double>(m);
      const double y0 = y_of(0.0), y1 = y_of(r.rho_mean);
      out << "<rect x=\"" << x << "\" y=\"" << std::min(y0, y1) << "\" width=\"" << bar - 2 << "\" height=\""
          << std::abs(y1 - y0) << "\" fill=\"" << kColors[m % 6] << "\"/>\n";
      if (!std::isnan(r.ci_low) && !std::isnan(r.ci_high)) {
        const double cx = x + (bar - 2) / 2.0;
        out << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y_of(r.ci_low) << "\" y2=\"" << y_of(r.ci_high)
            << "\" stroke=\"#000\"/>\n";
      }
    }
    out << "<text x=\"" << gx + (group_w - gap) / 2.0 << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\">" << xml_escape(datasets[d]) << "</text>\n";
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const double ly = top + 14.0 * static_cast<double>(m);
    out << "<rect x=\"" << width - 130.0 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
        << kColors[m % 6] << "\"/>\n";
    out << "<text x=\"" << width - 115.0 << "\" y=\"" << ly + 9 << "\">" << xml_escape(methods[m]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> emit_plot_data(const ExperimentReport& report, const std::filesystem::path& dir,
                                                  bool svg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), ErrorKind::io_error,
          "cannot create directory '" + dir.string() + "'");
  std::vector<std::filesystem::path> written;
  for (auto study : {Study::ood, Study::mse}) {
    std::vector<const ReportRow*> rows;
    for (const auto& r : report.rows)
      if (r.study == study) rows.push_back(&r);

    const auto csv_path = dir / (std::string(to_string(study)) + "_plot.csv");
    std::ofstream out(csv_path);
    require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + csv_path.string() + "'");
    out << "dataset,method,rho_mean,ci_low,ci_high\n";
    for (const auto* r : rows)
      out << r->dataset << ',' << r->method << ',' << num(r->rho_mean) << ',' << num(r->ci_low) << ','
          << num(r->ci_high) << '\n';
    written.push_back(csv_path);

    if (svg) {
      const auto svg_path = dir / (std::string(to_string(study)) + "_plot.svg");
      std::ofstream s(svg_path);
      require(static_cast<bool>(s), ErrorKind::io_error, "cannot write '" + svg_path.string() + "'");
      write_svg(rows, study, s);
      written.push_back(svg_path);
    }
  }
  return written;
}

}  // namespace nacu
