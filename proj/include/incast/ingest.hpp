#pragma once

#include <optional>
#include <string>
#include <vector>

namespace incast {

inline constexpr int kSeasonWeeks = 52;

/// Column names expected in an incidence file; overridable from the CLI so
/// differently-spelled flat files load without editing.
struct IncidenceColumns {
  std::string season = "season";
  std::string week = "season_week";
  std::string cases = "total_cases";
};

/**
 * One locale's weekly incidence partitioned into 52-week seasons, kept on
 * both the raw count scale and the transformed scale. Seasons are stored in
 * chronological file order; a week-53 row is folded into week 52 by addition
 * so season totals are preserved.
 */
struct SeasonSeries {
  std::string locale;
  std::vector<std::string> season_labels;
  std::vector<std::vector<double>> counts;       // [season][week 0..51], raw
  std::vector<std::vector<double>> transformed;  // parallel, transformed scale

  size_t n_seasons() const { return season_labels.size(); }
};

/// Named weekly covariate columns aligned with the incidence weeks.
/// Missing entries are kept as explicit markers.
struct CovariateFrame {
  std::vector<std::string> names;
  std::vector<std::vector<std::optional<double>>> columns;

  size_t n_weeks() const { return columns.empty() ? 0 : columns[0].size(); }
  int column(const std::string& name) const;
  const std::vector<std::optional<double>>& at(const std::string& name) const;
};

SeasonSeries load_incidence(const std::string& path, const std::string& locale,
                            const IncidenceColumns& cols = {});

/// Columns listed in `interpolate` (yearly anchors such as population) are
/// expanded to weekly values by linear interpolation between anchors.
CovariateFrame load_covariates(
    const std::string& path,
    const std::vector<std::string>& interpolate = {"population"});

/// Replaces missing entries of one column with the predictive mean of a 1-D
/// GP over the week index (uncertainty discarded). Requires >= 10 observed
/// values; throws on an all-missing column.
CovariateFrame impute_missing(const CovariateFrame& frame,
                              const std::string& column,
                              double lengthscale_weeks = 8.0);

/// Canonical re-serialization: season,season_week,total_cases rows.
void save_incidence(const SeasonSeries& series, const std::string& path);

/// Canonical re-serialization: week column plus covariates in name order,
/// missing values written as NA.
void save_covariates(const CovariateFrame& frame, const std::string& path);

}  // namespace incast
