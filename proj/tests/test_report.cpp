#include <string>

#include "doctest.h"
#include "solarlab/errors.hpp"
#include "solarlab/report.hpp"
#include "support.hpp"

using namespace solarlab;
using testsupport::TempDir;

TEST_CASE("csv writer produces exactly the requested bytes") {
  TempDir td("csv");
  std::string p = td.path("t.csv");
  write_csv_file(p, {"config_hash=abc", "seed=7"}, "a,b",
                 {"1,2", "3,4"});
  CHECK(testsupport::read_file(p) ==
        "# config_hash=abc\n# seed=7\na,b\n1,2\n3,4\n");

  write_csv_file(p, {}, "only,header", {});
  CHECK(testsupport::read_file(p) == "only,header\n");

  CHECK_THROWS_AS(
      write_csv_file(td.path("no/such/dir/x.csv"), {}, "a", {}), IoError);
}

TEST_CASE("bar charts are svg with escaped labels and metadata") {
  TempDir td("bars");
  std::string p = td.path("b.svg");
  write_grouped_bar_chart_svg(p, "totals <check> & more", {"A&B", "C"},
                              {"this run", "reference"},
                              {{1.0, 2.0}, {1.5, 2.5}},
                              {"config_hash=abc"});
  std::string svg = testsupport::read_file(p);
  CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<!-- config_hash=abc -->") != std::string::npos);
  CHECK(svg.find("totals &lt;check&gt; &amp; more") != std::string::npos);
  CHECK(svg.find("A&amp;B") != std::string::npos);
  CHECK(svg.find("this run") != std::string::npos);
  CHECK(svg.find("reference") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);

  // deterministic bytes for identical inputs
  std::string p2 = td.path("b2.svg");
  write_grouped_bar_chart_svg(p2, "totals <check> & more", {"A&B", "C"},
                              {"this run", "reference"},
                              {{1.0, 2.0}, {1.5, 2.5}},
                              {"config_hash=abc"});
  CHECK(testsupport::read_file(p2) == svg);

  CHECK_THROWS_AS(
      write_grouped_bar_chart_svg(p, "t", {"A"}, {"s"}, {{1.0, 2.0}}, {}),
      ContractError);
  CHECK_THROWS_AS(
      write_grouped_bar_chart_svg(p, "t", {"A"}, {"s", "extra"}, {{1.0}}, {}),
      ContractError);
  CHECK_THROWS_AS(write_grouped_bar_chart_svg(p, "t", {}, {}, {}, {}),
                  ContractError);
}

TEST_CASE("single-series bar chart works through the simple entry point") {
  TempDir td("bar1");
  std::string p = td.path("one.svg");
  write_bar_chart_svg(p, "just one", {"x", "y", "z"}, {3.0, -1.0, 2.0}, {});
  std::string svg = testsupport::read_file(p);
  CHECK(svg.find("<rect") != std::string::npos);
  CHECK(svg.find("just one") != std::string::npos);
}

TEST_CASE("line charts render a polyline with axis labels") {
  TempDir td("line");
  std::string p = td.path("l.svg");
  write_line_chart_svg(p, "curve", "epoch", "total", {0.0, 1.0, 2.0},
                       {10.0, 12.0, 11.0}, {"seed=42"});
  std::string svg = testsupport::read_file(p);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("epoch") != std::string::npos);
  CHECK(svg.find("total") != std::string::npos);
  CHECK(svg.find("<!-- seed=42 -->") != std::string::npos);

  CHECK_THROWS_AS(write_line_chart_svg(p, "t", "x", "y", {1.0}, {1.0, 2.0}, {}),
                  ContractError);
  CHECK_THROWS_AS(write_line_chart_svg(p, "t", "x", "y", {}, {}, {}),
                  ContractError);

  // single point still renders (degenerate x span widens itself)
  CHECK_NOTHROW(
      write_line_chart_svg(p, "t", "x", "y", {5.0}, {1.0}, {}));
}
