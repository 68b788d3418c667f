#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "twoway/pmf.hpp"

using namespace twoway;

namespace {

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

}  // namespace

TEST_CASE("marginalize: independent bits") {
  Pmf p({{"A", 2}, {"B", 2}}, {0.25, 0.25, 0.25, 0.25});
  Pmf m = p.marginalize({"A"});
  REQUIRE(m.variables().size() == 1);
  CHECK(m.mass()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.mass()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("marginalize: keeping all variables is the identity") {
  Pmf p({{"A", 2}, {"B", 3}}, {0.1, 0.2, 0.05, 0.25, 0.15, 0.25});
  Pmf m = p.marginalize({"A", "B"});
  REQUIRE(m.size() == p.size());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(m.mass()[i] == doctest::Approx(p.mass()[i]).epsilon(1e-15));
}

TEST_CASE("marginalize: perfectly correlated bits") {
  Pmf p({{"X", 2}, {"Y", 2}}, {0.5, 0.0, 0.0, 0.5});
  Pmf m = p.marginalize({"X"});
  CHECK(m.mass()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.mass()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("marginalize: unknown variable is an error naming it") {
  Pmf p = uniform_bits(2);
  CHECK_THROWS_WITH_AS(p.marginalize({"Z"}), doctest::Contains("Z"), std::invalid_argument);
}

TEST_CASE("entropy: uniform bit, point mass, biased bit") {
  Pmf u({{"A", 2}}, {0.5, 0.5});
  CHECK(u.entropy({"A"}) == doctest::Approx(1.0).epsilon(1e-12));
  Pmf pt({{"A", 3}}, {0.0, 1.0, 0.0});
  CHECK(pt.entropy({"A"}) == doctest::Approx(0.0).epsilon(1e-12));
  Pmf biased({{"A", 2}}, {0.9, 0.1});
  CHECK(biased.entropy({"A"}) == doctest::Approx(binary_entropy(0.1)).epsilon(1e-12));
  CHECK(biased.entropy({"A"}) == doctest::Approx(0.468996).epsilon(1e-5));
}

TEST_CASE("entropy: empty variable set is an error") {
  Pmf p = uniform_bits(1);
  CHECK_THROWS_AS(p.entropy({}), std::invalid_argument);
}

TEST_CASE("entropy of k uniform bits is exactly k") {
  for (int k = 1; k <= 4; ++k) {
    Pmf p = uniform_bits(k);
    std::vector<std::string> names;
    for (const auto& v : p.variables()) names.push_back(v.name);
    CHECK(std::fabs(p.entropy(names) - k) < 1e-12);
  }
}

TEST_CASE("mutual information: independence and copy") {
  Pmf ind = uniform_bits(2);
  CHECK(ind.mutual_information({{"B0"}, {"B1"}, {}}) == doctest::Approx(0.0).epsilon(1e-12));
  Pmf copy({{"A", 2}, {"B", 2}}, {0.5, 0.0, 0.0, 0.5});
  CHECK(copy.mutual_information({{"A"}, {"B"}, {}}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mutual information: overlapping sets rejected") {
  Pmf p = uniform_bits(3);
  CHECK_THROWS_AS(p.mutual_information({{"B0"}, {"B0"}, {}}), std::invalid_argument);
  CHECK_THROWS_AS(p.mutual_information({{"B0"}, {"B1"}, {"B1"}}), std::invalid_argument);
}

TEST_CASE("markov chain built by factorization has vanishing conditional MI") {
  // p(a) p(c|a) p(b|c): A - C - B
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int na = 2, nc = 3, nb = 2;
    std::vector<double> pa(na), pc_a(na * nc), pb_c(nc * nb);
    auto fill_rows = [&](std::vector<double>& m, int rows, int cols) {
      for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
          m[r * cols + c] = 0.05 + rng.next_unit();
          s += m[r * cols + c];
        }
        for (int c = 0; c < cols; ++c) m[r * cols + c] /= s;
      }
    };
    fill_rows(pa, 1, na);
    fill_rows(pc_a, na, nc);
    fill_rows(pb_c, nc, nb);
    std::vector<double> mass(na * nc * nb);
    for (int a = 0; a < na; ++a)
      for (int c = 0; c < nc; ++c)
        for (int b = 0; b < nb; ++b) mass[(a * nc + c) * nb + b] = pa[a] * pc_a[a * nc + c] * pb_c[c * nb + b];
    // fix rounding drift so the constructor's sum check passes exactly
    long double tot = 0.0L;
    for (double v : mass) tot += v;
    for (auto& v : mass) v = static_cast<double>(v / tot);
    Pmf p({{"A", na}, {"C", nc}, {"B", nb}}, mass);
    double mi = p.mutual_information({{"A"}, {"B"}, {"C"}});
    CHECK(mi <= 1e-10);
    CHECK(mi >= -1e-10);
  }
}

TEST_CASE("property: chain rule I(A,B;C) = I(A;C) + I(B;C|A)") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    Rng sub = rng.split();
    Pmf p = random_pmf({{"A", 2}, {"B", 3}, {"C", 2}}, sub);
    double lhs = p.mutual_information({{"A", "B"}, {"C"}, {}});
    double rhs = p.mutual_information({{"A"}, {"C"}, {}}) + p.mutual_information({{"B"}, {"C"}, {"A"}});
    CHECK(std::fabs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("property: symmetry and nonnegativity of conditional MI") {
  Rng rng(501);
  for (int trial = 0; trial < 25; ++trial) {
    Rng sub = rng.split();
    Pmf p = random_pmf({{"A", 2}, {"B", 2}, {"C", 3}}, sub);
    double ab = p.mutual_information({{"A"}, {"B"}, {"C"}});
    double ba = p.mutual_information({{"B"}, {"A"}, {"C"}});
    CHECK(std::fabs(ab - ba) < 1e-12);
    CHECK(ab >= -1e-10);
    CHECK(p.mutual_information({{"A"}, {"B"}, {}}) >= -1e-10);
  }
}

TEST_CASE("pmf validation: negative mass, wrong size, bad sum, cell ceiling") {
  CHECK_THROWS_AS(Pmf({{"A", 2}}, {0.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(Pmf({{"A", 2}}, {0.5, 0.25, 0.25}), std::invalid_argument);
  CHECK_THROWS_AS(Pmf({{"A", 2}}, {0.6, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(Pmf({{"A", 2}, {"A", 2}}, {0.25, 0.25, 0.25, 0.25}), std::invalid_argument);
  std::vector<Variable> huge;
  for (int i = 0; i < 25; ++i) huge.push_back({"V" + std::to_string(i), 2});
  Rng rng(1);
  CHECK_THROWS_WITH_AS(random_pmf(huge, rng), doctest::Contains("ceiling"), std::invalid_argument);
}

TEST_CASE("pack/unpack digits round trip, first digit most significant") {
  std::vector<int> radices = {3, 2, 4};
  std::vector<int> digits = {2, 1, 3};
  std::size_t idx = pack_digits(digits, radices);
  CHECK(idx == 2 * 8 + 1 * 4 + 3);
  std::vector<int> back(3);
  unpack_digits(idx, radices, back);
  CHECK(back == digits);
}
