#include <fstream>
#include <sstream>

#include "riskgate/error.hpp"
#include "riskgate/metrics.hpp"

namespace riskgate {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve) {
  auto out = open_out(path);
  out << "coverage,risk\n";
  for (const auto& p : curve) out << format_double(p.coverage) << ',' << format_double(p.risk) << '\n';
}

void write_curve_svg(const std::filesystem::path& path, std::span<const CurvePoint> curve,
                     const std::string& title) {
  constexpr int kWidth = 480, kHeight = 360;
  constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  constexpr int kPlotW = kWidth - kLeft - kRight, kPlotH = kHeight - kTop - kBottom;
  auto px = [&](double coverage) { return kLeft + coverage * kPlotW; };
  auto py = [&](double risk) { return kTop + (1.0 - risk) * kPlotH; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\">" << escape_xml(title)
      << "</text>\n";
  // Axes with ticks every 0.2.
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << kLeft + kPlotW
      << "\" y2=\"" << kTop + kPlotH << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + kPlotH << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = i / 5.0;
    const std::string label = format_double(t);
    svg << "<text x=\"" << px(t) << "\" y=\"" << kTop + kPlotH + 16
        << "\" text-anchor=\"middle\">" << label << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">"
        << label << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">coverage</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + kPlotH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + kPlotH / 2 << ")\">risk</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (i) svg << ' ';
    svg << px(curve[i].coverage) << ',' << py(curve[i].risk);
  }
  svg << "\"/>\n</svg>\n";

  auto out = open_out(path);
  out << svg.str();
}

}  // namespace riskgate
