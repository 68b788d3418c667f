#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "twoway/converse.hpp"
#include "twoway/protocol.hpp"

using namespace twoway;

namespace {

std::vector<int> make_table(const std::vector<int>& radices, const std::function<int(const std::vector<int>&)>& f) {
  std::size_t cells = 1;
  for (int r : radices) cells *= static_cast<std::size_t>(r);
  std::vector<int> table(cells);
  std::vector<int> digits(radices.size());
  for (std::size_t i = 0; i < cells; ++i) {
    unpack_digits(i, radices, digits);
    table[i] = f(digits);
  }
  return table;
}

struct CheckedCaps {
  double c1, c2;
};

CheckedCaps caps(const Dmc& ch1, const Dmc& ch2) { return {capacity(ch1, 1e-9).capacity, capacity(ch2, 1e-9).capacity}; }

}  // namespace

TEST_CASE("q=2 random binary staggered codes satisfy every check") {
  Rng rng(101);
  Dmc ch = Dmc::bsc(0.1);
  auto [C1, C2] = caps(ch, ch);
  JointSource src = JointSource::doubly_symmetric_binary(0.25);
  for (int trial = 0; trial < 20; ++trial) {
    StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1}, rng);
    Pmf joint = exact_joint(code, src, ch, ch);
    ConverseReport rep = full_converse_report(joint, code.round_lengths, C1, C2);
    CHECK(rep.all_hold);
    CHECK(rep.checks.size() == 8);  // 4 bounds + 2 identities + 2 markov for q=2
  }
}

TEST_CASE("q=4 random codes with longer rounds satisfy every check") {
  Rng rng(103);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.2);
  auto [C1, C2] = caps(ch1, ch2);
  JointSource src = JointSource::doubly_symmetric_binary(0.3);
  CodeDims dims;
  dims.n = 2;
  for (int trial = 0; trial < 5; ++trial) {
    StaggeredCode code = random_staggered_code(dims, {1, 2, 2, 1}, rng);
    Pmf joint = exact_joint(code, src, ch1, ch2);
    ConverseReport rep = full_converse_report(joint, code.round_lengths, C1, C2);
    CHECK(rep.all_hold);
    CHECK(rep.checks.size() == 16);
    for (const auto& c : rep.checks) {
      INFO(c.label, " lhs=", c.lhs, " rhs=", c.rhs);
      CHECK(c.holds);
    }
  }
}

TEST_CASE("deterministic encoders over noiseless channels: tight accounting") {
  // user 1 relays its bit; round 2 is a constant reply
  StaggeredCode code;
  code.dims = CodeDims{};
  code.round_lengths = {1, 1};
  code.round_tables.push_back(make_table({2}, [](const std::vector<int>& d) { return d[0]; }));
  code.round_tables.push_back(make_table({2, 2}, [](const std::vector<int>&) { return 0; }));
  code.dec1_table = make_table({2, 2, 2}, [](const std::vector<int>&) { return 0; });
  code.dec2_table = make_table({2, 2, 2}, [](const std::vector<int>& d) { return d[1]; });
  code.validate();

  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  Pmf joint = exact_joint(code, src, Dmc::identity(2), Dmc::identity(2));
  ConverseReport rep = check_round_bounds(joint, code.round_lengths, 1.0, 1.0);
  CHECK(rep.all_hold);
  // lhs of the first bound is n1 * C1 = 1; rhs is I(X1; V1, V2 | X2) = H(X1|X2)
  CHECK(rep.checks[0].lhs == doctest::Approx(1.0));
  double h02 = -0.2 * std::log2(0.2) - 0.8 * std::log2(0.8);
  CHECK(rep.checks[0].rhs == doctest::Approx(h02).epsilon(1e-9));
  CHECK(rep.checks[0].slack >= 0.0);
}

TEST_CASE("constant user-1 transmission carries no information: slacks equal lhs") {
  Rng rng(107);
  StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1}, rng);
  // overwrite round 1 with a constant transmission
  code.round_tables[0] = make_table({2}, [](const std::vector<int>&) { return 1; });
  JointSource src = JointSource::doubly_symmetric_binary(0.25);
  Dmc ch = Dmc::bsc(0.1);
  auto [C1, C2] = caps(ch, ch);
  Pmf joint = exact_joint(code, src, ch, ch);
  ConverseReport rep = check_round_bounds(joint, code.round_lengths, C1, C2);
  for (const auto& c : rep.checks) {
    if (c.label == "p1.cum.c1" || c.label == "p1.bound.c1") {
      CHECK(std::fabs(c.rhs) < 1e-10);  // I(X1; V1, V2 | X2) = 0
      CHECK(c.slack == doctest::Approx(c.lhs));
    }
  }
}

TEST_CASE("identity lemmas hold as exact equalities on random codes") {
  Rng rng(109);
  Dmc ch1 = Dmc::bsc(0.15), ch2 = Dmc::bsc(0.05);
  JointSource src = JointSource::doubly_symmetric_binary(0.35);
  for (int trial = 0; trial < 10; ++trial) {
    StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1, 1, 1}, rng);
    Pmf joint = exact_joint(code, src, ch1, ch2);
    for (const auto& c : check_identity_lemmas(joint)) {
      INFO(c.label);
      CHECK(std::fabs(c.slack) < 1e-9);
    }
  }
}

TEST_CASE("independent sources with a user-1-only code: identity sides vanish") {
  // X1 independent of X2 and V1 independent of X2: both sides of the first
  // identity are zero
  StaggeredCode code;
  code.dims = CodeDims{};
  code.round_lengths = {1, 1};
  code.round_tables.push_back(make_table({2}, [](const std::vector<int>& d) { return d[0]; }));
  code.round_tables.push_back(make_table({2, 2}, [](const std::vector<int>&) { return 0; }));
  code.dec1_table = make_table({2, 2, 2}, [](const std::vector<int>&) { return 0; });
  code.dec2_table = make_table({2, 2, 2}, [](const std::vector<int>& d) { return d[1]; });
  JointSource src = JointSource::independent({0.5, 0.5}, {0.5, 0.5});
  Pmf joint = exact_joint(code, src, Dmc::bsc(0.1), Dmc::bsc(0.1));
  auto checks = check_identity_lemmas(joint);
  CHECK(std::fabs(checks[0].lhs) < 1e-10);
  CHECK(std::fabs(checks[0].rhs) < 1e-10);
}

TEST_CASE("markov structure: vanishing conditional MI for executed codes") {
  Rng rng(113);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.3);

  SUBCASE("q = 2") {
    for (int trial = 0; trial < 10; ++trial) {
      StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1}, rng);
      Pmf joint = exact_joint(code, src, ch1, ch2);
      for (const auto& c : check_markov_structure(joint)) CHECK(c.lhs <= 1e-10);
    }
  }

  SUBCASE("q = 4 includes the late-round structure") {
    StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1, 1, 1}, rng);
    Pmf joint = exact_joint(code, src, ch1, ch2);
    auto checks = check_markov_structure(joint);
    REQUIRE(checks.size() == 4);
    // p2.markov.reply is I(X1, V2; V4 | X2, V1, V3)
    CHECK(checks[3].label == "p2.markov.reply");
    CHECK(checks[3].lhs <= 1e-10);
  }

  SUBCASE("noiseless deterministic code on a dyadic source gives exactly zero") {
    StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1}, rng);
    JointSource dyadic(2, 2, {0.25, 0.25, 0.25, 0.25});
    Pmf joint = exact_joint(code, dyadic, Dmc::identity(2), Dmc::identity(2));
    for (const auto& c : check_markov_structure(joint)) CHECK(c.lhs == 0.0);
  }
}

TEST_CASE("verifier reports are reproducible bit for bit") {
  Rng rng_a(127), rng_b(127);
  StaggeredCode a = random_staggered_code(CodeDims{}, {1, 1}, rng_a);
  StaggeredCode b = random_staggered_code(CodeDims{}, {1, 1}, rng_b);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  Dmc ch = Dmc::bsc(0.1);
  auto [C1, C2] = caps(ch, ch);
  ConverseReport ra = full_converse_report(exact_joint(a, src, ch, ch), a.round_lengths, C1, C2);
  ConverseReport rb = full_converse_report(exact_joint(b, src, ch, ch), b.round_lengths, C1, C2);
  REQUIRE(ra.checks.size() == rb.checks.size());
  for (std::size_t i = 0; i < ra.checks.size(); ++i) {
    CHECK(ra.checks[i].lhs == rb.checks[i].lhs);    // bitwise equality expected
    CHECK(ra.checks[i].slack == rb.checks[i].slack);
  }
}

TEST_CASE("missing variables are reported by name") {
  Pmf p = uniform_bits(2);
  CHECK_THROWS_WITH_AS(check_round_bounds(p, {1, 1}, 1.0, 1.0), doctest::Contains("X1"), std::invalid_argument);
}

TEST_CASE("the check catalog covers every emitted label") {
  Rng rng(131);
  StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1, 1, 1}, rng);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  Dmc ch = Dmc::bsc(0.1);
  ConverseReport rep = full_converse_report(exact_joint(code, src, ch, ch), code.round_lengths, 0.531, 0.531);

  std::ifstream doc(std::string(TWOWAY_DOCS_DIR) + "/verifier_checks.md");
  REQUIRE(doc.good());
  std::stringstream ss;
  ss << doc.rdbuf();
  std::string text = ss.str();

  for (const auto& c : rep.checks) {
    // generic form: replace the pair number with the documented {p} pattern
    std::string generic = c.label;
    std::size_t dot = generic.find('.');
    REQUIRE(dot != std::string::npos);
    generic = "p{p}" + generic.substr(dot);
    INFO("label ", c.label, " (documented as ", generic, ")");
    CHECK(text.find(generic) != std::string::npos);
  }
}
