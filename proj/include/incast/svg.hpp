#pragma once

#include <string>
#include <vector>

namespace incast {

/// Standalone SVG fan chart: shaded quantile band, mean line, and observed
/// points, on a week axis.
void write_fan_chart(const std::string& path, const std::string& title,
                     const std::vector<double>& mean,
                     const std::vector<double>& lo,
                     const std::vector<double>& hi,
                     const std::vector<double>& observed);

}  // namespace incast
