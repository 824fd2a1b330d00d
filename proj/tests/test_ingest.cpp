#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "incast/ingest.hpp"

using namespace incast;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << body;
  return p;
}

std::string two_season_csv(bool with_week53 = false) {
  std::string body = "season,season_week,total_cases\n";
  for (int s = 0; s < 2; ++s) {
    const std::string label =
        std::to_string(1990 + s) + "/" + std::to_string(1991 + s);
    for (int w = 1; w <= 52; ++w)
      body += label + "," + std::to_string(w) + "," +
              std::to_string(10 + w % 5 + s) + "\n";
    if (with_week53 && s == 0) body += label + ",53,7\n";
  }
  return body;
}

}  // namespace

TEST_CASE("two complete seasons load with the expected shape") {
  const auto p = write_temp("ingest_basic.csv", two_season_csv());
  const SeasonSeries s = load_incidence(p.string(), "test");
  CHECK(s.n_seasons() == 2);
  CHECK(s.counts[0].size() == 52);
  CHECK(s.transformed[1].size() == 52);
  CHECK(s.season_labels[0] == "1990/1991");
}

TEST_CASE("week 53 folds into week 52 and conserves the total") {
  const auto p52 = write_temp("ingest_52.csv", two_season_csv(false));
  const auto p53 = write_temp("ingest_53.csv", two_season_csv(true));
  const SeasonSeries a = load_incidence(p52.string(), "test");
  const SeasonSeries b = load_incidence(p53.string(), "test");
  CHECK(b.counts[0][51] == a.counts[0][51] + 7);
  const double total_a =
      std::accumulate(a.counts[0].begin(), a.counts[0].end(), 0.0);
  const double total_b =
      std::accumulate(b.counts[0].begin(), b.counts[0].end(), 0.0);
  CHECK(total_b == total_a + 7);
}

TEST_CASE("negative counts name the offending row") {
  std::string body = two_season_csv();
  body += "1992/1993,5,-2\n";
  const auto p = write_temp("ingest_neg.csv", body);
  CHECK_THROWS_WITH_AS(load_incidence(p.string(), "test"),
                       doctest::Contains("negative"), std::runtime_error);
}

TEST_CASE("duplicate weeks are rejected") {
  std::string body = two_season_csv();
  body += "1991/1992,10,3\n";
  const auto p = write_temp("ingest_dup.csv", body);
  CHECK_THROWS_WITH_AS(load_incidence(p.string(), "test"),
                       doctest::Contains("duplicate"), std::runtime_error);
}

TEST_CASE("missing required columns are rejected") {
  const auto p = write_temp("ingest_cols.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(load_incidence(p.string(), "test"), std::runtime_error);
}

TEST_CASE("re-serialization round trip is idempotent") {
  const auto p = write_temp("ingest_rt.csv", two_season_csv(true));
  const SeasonSeries a = load_incidence(p.string(), "test");
  const auto p2 = fs::temp_directory_path() / "ingest_rt2.csv";
  save_incidence(a, p2.string());
  const SeasonSeries b = load_incidence(p2.string(), "test");
  CHECK(a.season_labels == b.season_labels);
  CHECK(a.counts == b.counts);
}

TEST_CASE("covariates keep missing markers and validate the week index") {
  const auto p = write_temp("cov_basic.csv",
                            "week,precipitation\n1,1.5\n2,NA\n3,2.5\n");
  const CovariateFrame f = load_covariates(p.string());
  CHECK(f.names.size() == 1);
  CHECK(f.n_weeks() == 3);
  CHECK(!f.at("precipitation")[1].has_value());
  CHECK(*f.at("precipitation")[2] == 2.5);

  const auto bad = write_temp("cov_bad.csv", "week,x\n1,1\n3,2\n");
  CHECK_THROWS_WITH_AS(load_covariates(bad.string()),
                       doctest::Contains("misaligned"), std::runtime_error);
}

TEST_CASE("yearly population anchors interpolate linearly") {
  std::string body = "population\n100\n";
  for (int i = 0; i < 51; ++i) body += "NA\n";
  body += "204\n";
  for (int i = 0; i < 51; ++i) body += "NA\n";
  const auto p = write_temp("cov_pop.csv", body);
  const CovariateFrame f = load_covariates(p.string());
  const auto& pop = f.at("population");
  CHECK(*pop[0] == 100.0);
  CHECK(*pop[52] == 204.0);
  CHECK(*pop[26] == doctest::Approx(152.0));
  // Trailing weeks extrapolate from the last anchor pair.
  CHECK(*pop[53] == doctest::Approx(206.0));
}

TEST_CASE("covariate re-serialization orders columns by name") {
  const auto p = write_temp("cov_save.csv",
                            "zeta,alpha\n1.5,NA\n2.5,0.25\n3.125,9\n");
  const CovariateFrame f = load_covariates(p.string(), {});
  const auto p2 = fs::temp_directory_path() / "cov_save2.csv";
  save_covariates(f, p2.string());
  {
    std::ifstream in(p2);
    std::string header;
    std::getline(in, header);
    CHECK(header == "week,alpha,zeta");
    std::string row;
    std::getline(in, row);
    CHECK(row == "1,NA,1.5");
  }
  const CovariateFrame g = load_covariates(p2.string(), {});
  CHECK(g.at("zeta") == f.at("zeta"));
  CHECK(g.at("alpha") == f.at("alpha"));
}

TEST_CASE("GP infill leaves complete columns alone") {
  const auto p = write_temp("cov_full.csv", "x\n1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n");
  const CovariateFrame f = load_covariates(p.string());
  const CovariateFrame g = impute_missing(f, "x");
  for (size_t i = 0; i < 10; ++i) CHECK(*g.at("x")[i] == *f.at("x")[i]);
}

TEST_CASE("GP infill of a symmetric gap matches the neighbors") {
  std::string body = "x\n";
  for (int i = 0; i < 21; ++i) body += i == 10 ? "NA\n" : "5\n";
  const auto p = write_temp("cov_gap.csv", body);
  const CovariateFrame f = load_covariates(p.string(), {});
  const CovariateFrame g = impute_missing(f, "x");
  CHECK(std::abs(*g.at("x")[10] - 5.0) <= 1e-6 * 5.0);
}

TEST_CASE("GP infill extrapolates finitely at the series end") {
  std::string body = "x\n";
  for (int i = 0; i < 30; ++i) body += std::to_string(i % 7) + "\n";
  body += "NA\nNA\nNA\n";
  const auto p = write_temp("cov_end.csv", body);
  const CovariateFrame g = impute_missing(load_covariates(p.string(), {}), "x");
  for (int i = 30; i < 33; ++i) CHECK(std::isfinite(*g.at("x")[i]));
}

TEST_CASE("infill preconditions") {
  const auto p = write_temp("cov_few.csv", "x\n1\nNA\n2\n");
  CHECK_THROWS_AS(impute_missing(load_covariates(p.string(), {}), "x"),
                  std::runtime_error);
  const auto p2 = write_temp("cov_none.csv", "x\nNA\nNA\nNA\n");
  CHECK_THROWS_AS(impute_missing(load_covariates(p2.string(), {}), "x"),
                  std::runtime_error);
}
