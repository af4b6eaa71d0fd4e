#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "phasebal/netfile.hpp"

using namespace phasebal;

namespace {

const char* kSample =
    "[nodes]\n"
    "1 3 exterior\n"
    "2 3 interior\n"
    "3 1 exterior\n"
    "\n"
    "[branches]\n"
    "2 1 YgD 5 ratio=t1\n"
    "3 2 Single 2.5 phase=b\n"
    "\n"
    "[converters]\n"
    "1 PositiveSequenceDroop md=0.05 tau=0.1\n"
    "3 SinglePhaseDroop md=0.04 tau=0.2\n"
    "\n"
    "[loads]\n"
    "2 t=0.5 dP=0.1,0,0.1 dQ=0.03,0,0.03\n"
    "\n"
    "[analysis]\n"
    "t_end 2\n"
    "dt 0.001\n"
    "measure_bus 2\n";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("canonical text survives a parse-serialize round trip") {
  const Document doc = parse(kSample);
  CHECK(serialize(doc) == kSample);

  const Document again = parse(serialize(doc));
  REQUIRE(again.model.nodes.size() == 3);
  REQUIRE(again.model.branches.size() == 2);
  CHECK(again.model.nodes[1].role == NodeRole::Interior);
  CHECK(again.model.branches[0].kind == BranchKind::YgD);
  CHECK(again.model.branches[0].b == 5.0);
  CHECK(again.model.branches[0].ratio_tag == "t1");
  REQUIRE(again.model.branches[1].phase.has_value());
  CHECK(*again.model.branches[1].phase == Phase::B);
  REQUIRE(again.converters.size() == 2);
  CHECK(again.converters[0].law == ControlLaw::PositiveSequenceDroop);
  CHECK(again.converters[1].m_d == 0.04);
  CHECK(again.converters[1].tau == 0.2);
  REQUIRE(again.loads.size() == 1);
  CHECK(again.loads[0].t_start == 0.5);
  CHECK(again.loads[0].dP(2) == 0.1);
  CHECK(again.loads[0].dQ(0) == 0.03);
  CHECK(again.analysis.t_end == 2.0);
  CHECK(again.analysis.dt == 0.001);
  REQUIRE(again.analysis.measure_bus.has_value());
  CHECK(*again.analysis.measure_bus == 2);
}

TEST_CASE("shipped network files are in canonical form") {
  const char* names[] = {"five_bus_radial.net", "ygd_dd_loop.net",
                         "mismatched_loop.net", "ygd_chain.net",
                         "two_feeders.net",     "sweep_small.net",
                         "sweep_twin.net"};
  for (const char* name : names) {
    CAPTURE(name);
    const std::string path = std::string(PB_NETS_DIR) + "/" + name;
    const std::string bytes = slurp(path);
    const Document doc = parse_file(path);
    CHECK(serialize(doc) == bytes);
    CHECK(!doc.model.nodes.empty());
  }
}

TEST_CASE("omitted fields fall back to defaults") {
  const Document doc = parse(
      "[nodes]\n"
      "1 3 exterior\n"
      "[converters]\n"
      "1 GeneralizedDroop\n"
      "[loads]\n"
      "1 dP=0.1,0.2,0.3\n");
  REQUIRE(doc.converters.size() == 1);
  CHECK(doc.converters[0].m_d == 0.05);
  CHECK(doc.converters[0].tau == 0.1);
  CHECK(doc.converters[0].k_bal == 0.0);
  REQUIRE(doc.loads.size() == 1);
  CHECK(doc.loads[0].t_start == 0.0);
  REQUIRE(doc.loads[0].dQ.size() == 3);
  CHECK(doc.loads[0].dQ.norm() == 0.0);
  CHECK(doc.analysis.t_end == 2.0);
  CHECK(doc.analysis.dt == 1e-3);
  CHECK(!doc.analysis.measure_bus.has_value());
  CHECK(doc.analysis.tol_rank == 1e-8);
  CHECK(doc.analysis.tol_zero == 1e-9);
}

TEST_CASE("comments and blank lines are ignored") {
  const Document doc = parse(
      "# a network\n"
      "[nodes]  # node table\n"
      "\n"
      "1 3 exterior # the converter bus\n"
      "2 3 interior\n"
      "[branches]\n"
      "2 1 YgYg 4 # plain coupling\n");
  CHECK(doc.model.nodes.size() == 2);
  REQUIRE(doc.model.branches.size() == 1);
  CHECK(doc.model.branches[0].b == 4.0);
}

TEST_CASE("unknown sections and keys: strict rejects, lenient warns") {
  const std::string text =
      "[nodes]\n"
      "1 3 exterior\n"
      "[future]\n"
      "stuff 1 2\n";
  CHECK_THROWS_AS(parse(text), ParseError);

  std::vector<std::string> warnings;
  const Document doc = parse(text, false, &warnings);
  CHECK(doc.model.nodes.size() == 1);
  CHECK(!warnings.empty());

  const std::string oddkey =
      "[nodes]\n"
      "1 3 exterior\n"
      "2 3 interior\n"
      "[branches]\n"
      "2 1 YgYg 4 color=red\n";
  CHECK_THROWS_AS(parse(oddkey), ParseError);
  warnings.clear();
  const Document doc2 = parse(oddkey, false, &warnings);
  CHECK(doc2.model.branches.size() == 1);
  CHECK(!warnings.empty());
}

TEST_CASE("parse errors carry line and column") {
  auto expect_at = [](const std::string& text, int line, int col) {
    try {
      parse(text);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line == line);
      CHECK(e.col == col);
    }
  };

  SUBCASE("unknown branch kind") {
    expect_at(
        "[nodes]\n1 3 exterior\n2 3 interior\n\n[branches]\n2 1 XX 5\n", 6, 5);
  }
  SUBCASE("malformed number") {
    expect_at(
        "[nodes]\n1 3 exterior\n2 3 interior\n\n[branches]\n2 1 YgYg abc\n", 6,
        10);
  }
  SUBCASE("content before any section") { expect_at("1 3 exterior\n", 1, 1); }
  SUBCASE("duplicate node id") {
    expect_at("[nodes]\n1 3 exterior\n1 3 interior\n", 3, 1);
  }
}

TEST_CASE("malformed tables are rejected") {
  CHECK_THROWS_AS(parse("[nodes]\n1 2 exterior\n"), ParseError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 middle\n"), ParseError);
  CHECK_THROWS_AS(
      parse("[nodes]\n1 3 exterior\n2 3 interior\n[branches]\n2 1 YgYg 0\n"),
      ParseError);
  CHECK_THROWS_AS(
      parse("[nodes]\n1 3 exterior\n2 3 interior\n[branches]\n2 1 YgYg -3\n"),
      ParseError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n2 3 interior\n[branches]\n"
                        "2 1 YgYg 4 phase=b\n"),
                  ParseError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[loads]\n1 dP=0.1,0.2\n"
                        "[analysis]\ndt 0.001\ndt 0.002\n"),
                  ParseError);
  CHECK_THROWS_AS(
      parse("[nodes]\n1 3 exterior\n[loads]\n1 dP=0.1,0,0 dQ=0.1\n"),
      ParseError);
  CHECK_THROWS_AS(
      parse("[nodes]\n1 3 exterior\n[loads]\n1 t=-0.5 dP=0.1,0,0\n"),
      ParseError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[converters]\n"
                        "1 PositiveSequenceDroop kbal=2\n"),
                  ParseError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[converters]\n"
                        "1 PositiveSequenceDroop md=0.05 mp=0.05 mq=0.005\n"),
                  ParseError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[converters]\n"
                        "1 PositiveSequenceDroop mp=0.05\n"),
                  ParseError);
}

TEST_CASE("per-channel gains must agree with the droop slope") {
  const Document ok = parse(
      "[nodes]\n1 3 exterior\n[converters]\n"
      "1 PositiveSequenceDroop mp=0.02 mq=0.002 tau=0.1\n");
  REQUIRE(ok.converters.size() == 1);
  CHECK(ok.converters[0].m_d == doctest::Approx(0.02).epsilon(1e-12));

  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[converters]\n"
                        "1 PositiveSequenceDroop mp=0.02 mq=0.01 tau=0.1\n"),
                  NonConformingGains);
}

TEST_CASE("references are checked after parsing") {
  CHECK_THROWS_AS(parse(""), SemanticError);
  CHECK_THROWS_AS(parse("[analysis]\nt_end 2\n"), SemanticError);
  CHECK_THROWS_AS(
      parse("[nodes]\n1 3 exterior\n[branches]\n1 9 YgYg 4\n"), SemanticError);
  CHECK_THROWS_AS(
      parse("[nodes]\n1 3 exterior\n[converters]\n9 GeneralizedDroop\n"),
      SemanticError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[loads]\n9 dP=0.1,0,0\n"),
                  SemanticError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[loads]\n1 dP=0.1\n"),
                  SemanticError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[analysis]\nsweep_bus 9\n"),
                  SemanticError);
  CHECK_THROWS_AS(parse("[nodes]\n1 3 exterior\n[analysis]\nmeasure_bus 9\n"),
                  SemanticError);

  // a transformer to a three-phase secondary needs its phase selected
  CHECK_THROWS_AS(parse("[nodes]\n1 1 exterior\n2 3 interior\n[branches]\n"
                        "1 2 Single 4\n"),
                  SemanticError);
  CHECK_THROWS_AS(parse("[nodes]\n1 1 exterior\n2 1 interior\n[branches]\n"
                        "1 2 Single 4 phase=b\n"),
                  SemanticError);
}

TEST_CASE("unreadable paths are reported") {
  CHECK_THROWS_AS(parse_file("/nonexistent/net/file.net"), SemanticError);
}
