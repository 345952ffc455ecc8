#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "transport/errors.hpp"

using namespace transport;
using namespace testing_support;

namespace {

StudyDataset parse(const std::string& text, const CovariateSchema& schema = binary_w()) {
  std::istringstream in(text);
  return read_dataset(in, schema);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

CovariateSchema mixed_schema() {
  return CovariateSchema({Covariate{"age", CovariateKind::continuous, {}}, Covariate{"sex", CovariateKind::binary, {}},
                          Covariate{"site", CovariateKind::categorical, {"north", "south", "west"}}});
}

}  // namespace

TEST_CASE("four-row file loads with two trial and two target records") {
  TempDir dir("data");
  {
    std::ofstream f(dir / "four.csv");
    f << "w,s,a,z,y\n1,1,t,1,1\n0,1,c,0,0\n1,0,,,\n0,0,,,\n";
  }
  const auto ds = load_dataset(dir / "four.csv", binary_w());
  CHECK(ds.n1() == 2);
  CHECK(ds.n0() == 2);
  CHECK(ds.size() == 4);
  CHECK(ds.arms() == std::vector<std::string>{"c", "t"});
  CHECK(ds[0].trial);
  CHECK(ds[0].w[0] == 1.0);
  CHECK_FALSE(ds[3].trial);
}

TEST_CASE("trial row without outcome is rejected") {
  CHECK(error_of("w,s,a,z,y\n1,1,t,1,\n0,0,,,\n").find("trial record lacks outcome") != std::string::npos);
}

TEST_CASE("target row with an adherence value is rejected") {
  CHECK(error_of("w,s,a,z,y\n1,1,t,1,1\n0,0,,1,\n").find("target record carries trial-only field") !=
        std::string::npos);
}

TEST_CASE("ingestion errors") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv", binary_w()), DataError);
  CHECK(error_of("w,s,a,z\n1,1,t,1\n").find("header mismatch") != std::string::npos);
  CHECK(error_of("w,s,a,z,y,extra\n1,1,t,1,1,3\n").find("header mismatch") != std::string::npos);
  CHECK(error_of("w,s,a,z,y\n2,1,t,1,1\n0,0,,,\n").find("outside declared levels") != std::string::npos);
  CHECK(error_of("w,s,a,z,y\n1,1,t,1,1.5\n0,0,,,\n").find("outcome outside [0,1]") != std::string::npos);
  CHECK(error_of("w,s,a,z,y\n,1,t,1,1\n0,0,,,\n").find("missing value") != std::string::npos);
  CHECK(error_of("w,s,a,z,y\n1,1,t,1,1\n").find("n0 = 0") != std::string::npos);
  CHECK(error_of("w,s,a,z,y\n1,0,,,\n").find("n1 = 0") != std::string::npos);
  // Row errors name the offending line.
  CHECK(error_of("w,s,a,z,y\n1,1,t,1,1\n0,1,t,1,\n").find("line 3") != std::string::npos);
}

TEST_CASE("fractional outcomes in [0,1] are accepted") {
  const auto ds = parse("w,s,a,z,y\n1,1,t,1,0.25\n0,0,,,\n");
  CHECK(*ds[0].y == doctest::Approx(0.25));
}

TEST_CASE("columns may appear in any order and tabs are supported") {
  std::istringstream in("y\ts\tz\tw\ta\n1\t1\t0\t1\tt\n\t0\t\t0\t\n");
  const auto ds = read_dataset(in, binary_w(), '\t');
  CHECK(ds[0].arm == std::optional<std::string>("t"));
  CHECK(*ds[0].z == 0);
  CHECK(ds[1].w[0] == 0.0);
}

TEST_CASE("an arm missing an adherence stratum loads with a warning") {
  const auto ds = parse("w,s,a,z,y\n1,1,t,1,1\n0,1,t,1,0\n0,0,,,\n");
  REQUIRE(ds.warnings().size() == 1);
  CHECK(ds.warnings()[0].find("'t'") != std::string::npos);
}

TEST_CASE("schema invariants") {
  CHECK_THROWS_AS(CovariateSchema({Covariate{"", CovariateKind::binary, {}}}), ConfigError);
  CHECK_THROWS_AS(CovariateSchema({Covariate{"x", CovariateKind::binary, {}}, Covariate{"x", CovariateKind::continuous, {}}}),
                  ConfigError);
  CHECK_THROWS_AS(CovariateSchema({Covariate{"c", CovariateKind::categorical, {"only"}}}), ConfigError);
  CHECK_THROWS_AS(CovariateSchema({Covariate{"y", CovariateKind::binary, {}}}), ConfigError);
}

TEST_CASE("design matrix for one binary covariate") {
  const auto ds = parse("w,s,a,z,y\n1,1,t,1,1\n0,1,t,0,0\n1,0,,,\n");
  const auto dm = design_matrix(ds, [](std::size_t) { return true; });
  REQUIRE(dm.x.rows() == 3);
  REQUIRE(dm.x.cols() == 2);
  CHECK(dm.x.col(0).isOnes());
  CHECK(dm.x(0, 1) == 1.0);
  CHECK(dm.x(1, 1) == 0.0);
  CHECK(dm.columns == std::vector<std::string>{"(intercept)", "w"});
}

TEST_CASE("categorical covariates are reference coded") {
  const auto schema = CovariateSchema({Covariate{"site", CovariateKind::categorical, {"a", "b", "c"}}});
  const auto ds = parse("site,s,a,z,y\nc,1,t,1,1\na,1,t,0,0\nb,0,,,\n", schema);
  const auto dm = design_matrix(ds, [](std::size_t) { return true; });
  REQUIRE(dm.x.cols() == 3);
  CHECK(dm.columns == std::vector<std::string>{"(intercept)", "site=b", "site=c"});
  CHECK(dm.x.row(0).transpose() == Eigen::Vector3d(1, 0, 1));
  CHECK(dm.x.row(1).transpose() == Eigen::Vector3d(1, 0, 0));
  CHECK(dm.x.row(2).transpose() == Eigen::Vector3d(1, 1, 0));
}

TEST_CASE("design width counts intercept, numeric columns and levels minus one") {
  const auto schema = mixed_schema();
  CHECK(design_width(schema, std::nullopt) == 1 + 1 + 1 + 2);
  CHECK(design_width(schema, std::vector<std::size_t>{2}) == 3);
  CHECK(design_width(schema, std::vector<std::size_t>{}) == 1);
}

TEST_CASE("empty design subset is an error") {
  const auto ds = parse("w,s,a,z,y\n1,1,t,1,1\n0,0,,,\n");
  CHECK_THROWS_AS(design_matrix(ds, [](std::size_t) { return false; }), DataError);
}

TEST_CASE("write then read reproduces the dataset") {
  const auto schema = mixed_schema();
  const auto ds = parse(
      "age,sex,site,s,a,z,y\n"
      "31.5,1,south,1,bup,1,1\n"
      "0.1,0,north,1,ntx,0,0.3333333333333333\n"
      "47,1,west,0,,,\n",
      schema);
  std::ostringstream out;
  write_dataset(ds, out);
  std::istringstream in(out.str());
  const auto again = read_dataset(in, schema);
  CHECK(again == ds);

  const auto toy = toy_sample(300, 200, 5);
  std::ostringstream out2;
  write_dataset(toy, out2);
  std::istringstream in2(out2.str());
  CHECK(read_dataset(in2, toy.schema()) == toy);
}

TEST_CASE("row order is preserved") {
  const auto ds = parse("w,s,a,z,y\n0,0,,,\n1,1,t,1,1\n1,0,,,\n");
  CHECK_FALSE(ds[0].trial);
  CHECK(ds[1].trial);
  CHECK(ds.arm_index(0) == -1);
  CHECK(ds.arm_index(1) == 0);
}
