#include "incast/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace incast {

namespace {
constexpr double kW = 720, kH = 420;
constexpr double kLeft = 60, kRight = 15, kTop = 30, kBottom = 40;
}  // namespace

void write_fan_chart(const std::string& path, const std::string& title,
                     const std::vector<double>& mean,
                     const std::vector<double>& lo,
                     const std::vector<double>& hi,
                     const std::vector<double>& observed) {
  const size_t n = mean.size();
  if (lo.size() != n || hi.size() != n || n == 0)
    throw std::invalid_argument("write_fan_chart: inconsistent series");

  double ymax = 1.0;
  for (size_t i = 0; i < n; ++i) ymax = std::max(ymax, hi[i]);
  for (double v : observed) ymax = std::max(ymax, v);
  ymax *= 1.05;

  auto px = [&](double week) {
    return kLeft + (week - 1.0) / (static_cast<double>(n) - 1.0) *
                       (kW - kLeft - kRight);
  };
  auto py = [&](double v) {
    return kH - kBottom - v / ymax * (kH - kTop - kBottom);
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(6);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW
      << "' height='" << kH << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kW / 2 << "' y='18' text-anchor='middle' "
      << "font-family='sans-serif' font-size='13'>" << title << "</text>\n";

  // Quantile band.
  out << "<polygon fill='#9ecae1' fill-opacity='0.55' stroke='none' points='";
  for (size_t i = 0; i < n; ++i)
    out << px(i + 1.0) << ',' << py(hi[i]) << ' ';
  for (size_t i = n; i-- > 0;)
    out << px(i + 1.0) << ',' << py(lo[i]) << ' ';
  out << "'/>\n";

  out << "<polyline fill='none' stroke='#08519c' stroke-width='1.5' points='";
  for (size_t i = 0; i < n; ++i)
    out << px(i + 1.0) << ',' << py(mean[i]) << ' ';
  out << "'/>\n";

  for (size_t i = 0; i < observed.size() && i < n; ++i)
    out << "<circle cx='" << px(i + 1.0) << "' cy='" << py(observed[i])
        << "' r='2.5' fill='black'/>\n";

  // Axes with a few ticks.
  out << "<line x1='" << kLeft << "' y1='" << kH - kBottom << "' x2='"
      << kW - kRight << "' y2='" << kH - kBottom
      << "' stroke='black' stroke-width='1'/>\n";
  out << "<line x1='" << kLeft << "' y1='" << kTop << "' x2='" << kLeft
      << "' y2='" << kH - kBottom << "' stroke='black' stroke-width='1'/>\n";
  for (int w = 1; w <= static_cast<int>(n); w += 13) {
    out << "<text x='" << px(w) << "' y='" << kH - kBottom + 16
        << "' text-anchor='middle' font-family='sans-serif' "
           "font-size='11'>" << w << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4.0;
    out << "<text x='" << kLeft - 6 << "' y='" << py(v) + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
        << static_cast<long>(std::lround(v)) << "</text>\n";
  }
  out << "<text x='" << (kLeft + kW - kRight) / 2 << "' y='" << kH - 8
      << "' text-anchor='middle' font-family='sans-serif' "
         "font-size='12'>season week</text>\n";
  out << "</svg>\n";
}

}  // namespace incast
