#include "support.hpp"
#include "wdro/error.hpp"
#include "wdro/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wdro;
using nlohmann::json;

namespace {

std::string dump(const json& j) {
  std::ostringstream s;
  write_json(s, j);
  return s.str();
}

const json kInline = {{"loss", "quadratic-tracking"},
                      {"measure", {{"atoms", {-1.0, 0.5, 2.0}}, {"weights", {0.2, 0.5, 0.3}}}}};

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("number formatting round-trips") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_double(std::nan("")) == "nan");
  }

  TEST_CASE("json output is deterministic") {
    json a = {{"b", 1.5}, {"a", {1, 2, 3}}, {"c", {{"z", 0.1}, {"y", "s"}}}};
    json b;
    b["c"]["y"] = "s";
    b["c"]["z"] = 0.1;
    b["a"] = {1, 2, 3};
    b["b"] = 1.5;
    CHECK(dump(a) == dump(b));
    CHECK(dump(a).find("\"a\"") < dump(a).find("\"b\""));
    CHECK(dump({{"v", std::numeric_limits<double>::infinity()}}).find("\"inf\"") != std::string::npos);
  }

  TEST_CASE("delta lists") {
    const auto d = parse_delta_list("0.04, 0.02,0.01");
    REQUIRE(d.size() == 3);
    CHECK(d[1] == 0.02);
    CHECK_THROWS_AS(parse_delta_list(""), ValidationError);
    CHECK_THROWS_AS(parse_delta_list("0.1,abc"), ValidationError);
    CHECK_THROWS_AS(parse_delta_list("0.1,-0.2"), ValidationError);
    CHECK_THROWS_AS(parse_delta_list("0"), ValidationError);
    CHECK_THROWS_AS(parse_delta_list("inf"), ValidationError);
    CHECK_THROWS_AS(parse_delta_list("0.1x"), ValidationError);
  }

  TEST_CASE("problem spec parsing") {
    const auto spec = parse_problem_spec(kInline, ".");
    CHECK(spec.loss.name() == "quadratic-tracking");
    CHECK(spec.mu.size() == 3);
    CHECK(spec.norm.p() == 2.0);
    CHECK(spec.constraints.empty());
    CHECK(spec.a0.size() == 1);

    json j = kInline;
    j["p"] = 3;
    j["norm"] = {{"s", 1}};
    j["support"] = {{"lower", {-5.0}}, {"upper", {5.0}}};
    j["constraints"] = json::array({{{"type", "martingale"}}});
    j["action"] = {0.3};
    const auto full = parse_problem_spec(j, ".");
    CHECK(full.norm.p() == 3.0);
    CHECK(full.norm.s() == 1.0);
    CHECK(full.support.bounded());
    CHECK(full.constraints.size() == 1);
    REQUIRE(full.action.has_value());
    CHECK((*full.action)[0] == 0.3);
    CHECK(parse_problem_spec(j, ".", 1.5).norm.p() == 1.5);
  }

  TEST_CASE("problem spec errors") {
    auto bad = [](auto mutate) {
      json j = kInline;
      mutate(j);
      return j;
    };
    CHECK_THROWS_AS(parse_problem_spec(json::array(), "."), ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j.erase("loss"); }), "."), ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j.erase("measure"); }), "."), ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["loss"] = "no-such-loss"; }), "."), ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["measure"] = {{"atoms", {{1.0, 2.0}, {3.0, 4.0}}}}; }), "."),
                    ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["norm"] = {{"active", json::array()}}; }), "."),
                    ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["support"] = {{"lower", {0.0, 1.0}}, {"upper", {1.0, 2.0}}}; }), "."),
                    ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["constraints"] = json::array({{{"type", "fancy"}}}); }), "."),
                    ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["action"] = {1.0, 2.0}; }), "."), ValidationError);
    CHECK_THROWS_AS(parse_problem_spec(bad([](json& j) { j["measure"] = "missing.csv"; }), "."), ValidationError);
    CHECK_THROWS_AS(load_problem_spec("/nonexistent/spec.json"), ValidationError);
  }

  TEST_CASE("spec files resolve measures relative to the spec") {
    const auto dir = std::filesystem::temp_directory_path() / "wdro_io_test";
    std::filesystem::create_directories(dir);
    {
      std::ofstream m(dir / "m.csv");
      m << "x,weight\n0.8,0.5\n1.4,0.5\n";
      std::ofstream s(dir / "spec.json");
      s << R"({"loss": {"id": "call", "params": {"S0": 1.0, "K": 1.1}}, "measure": "m.csv"})";
      std::ofstream broken(dir / "broken.json");
      broken << "{ not json";
    }
    const auto spec = load_problem_spec((dir / "spec.json").string());
    CHECK(spec.mu.size() == 2);
    CHECK(spec.mu.atom(1)[0] == 1.4);
    CHECK_THROWS_AS(load_problem_spec((dir / "broken.json").string()), ValidationError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("csv writer") {
    const auto path = (std::filesystem::temp_directory_path() / "wdro_io_test.csv").string();
    write_csv_file(path, {"a", "b"}, {{1.0, 0.5}, {2.0, -1.0}});
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    CHECK(s.str() == "a,b\n1,0.5\n2,-1\n");
    std::filesystem::remove(path);
  }
}
