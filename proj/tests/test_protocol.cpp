#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

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

// Binary one-round-each relay: user 1 sends its bit, user 2 sends its bit,
// both sides reconstruct from the received symbol. Lossless over noiseless
// channels.
StaggeredCode identity_relay() {
  StaggeredCode code;
  code.dims = CodeDims{};  // all binary, n = 1
  code.round_lengths = {1, 1};
  code.round_tables.push_back(make_table({2}, [](const std::vector<int>& d) { return d[0]; }));            // u1 = x1
  code.round_tables.push_back(make_table({2, 2}, [](const std::vector<int>& d) { return d[0]; }));         // u2 = x2
  code.dec1_table = make_table({2, 2, 2}, [](const std::vector<int>& d) { return d[2]; });                 // xh2 = v2
  code.dec2_table = make_table({2, 2, 2}, [](const std::vector<int>& d) { return d[1]; });                 // xh1 = v1
  return code;
}

StaggeredCode constant_decoder_code() {
  StaggeredCode code;
  code.dims = CodeDims{};
  code.round_lengths = {1, 1};
  code.round_tables.push_back(make_table({2}, [](const std::vector<int>& d) { return d[0]; }));
  code.round_tables.push_back(make_table({2, 2}, [](const std::vector<int>& d) { return d[0]; }));
  code.dec1_table = make_table({2, 2, 2}, [](const std::vector<int>&) { return 0; });
  code.dec2_table = make_table({2, 2, 2}, [](const std::vector<int>&) { return 0; });
  return code;
}

JointSource uniform_pair() { return JointSource(2, 2, {0.25, 0.25, 0.25, 0.25}); }

}  // namespace

TEST_CASE("rates: staggered and general bookkeeping") {
  CodeDims dims;
  dims.n = 2;
  Rng rng(9);
  StaggeredCode s = random_staggered_code(dims, {2, 2}, rng);
  auto [r1, r2] = rates(s);
  CHECK(r1 == doctest::Approx(1.0));
  CHECK(r2 == doctest::Approx(1.0));

  StaggeredCode s2 = random_staggered_code(dims, {1, 2, 3, 2}, rng);
  auto [p1, p2] = rates(s2);
  CHECK(p1 == doctest::Approx(2.0));
  CHECK(p2 == doctest::Approx(2.0));

  Schedule sched;
  sched.c1 = {1, 1, 0};
  sched.c2 = {0, 1, 1};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  auto [g1, g2] = rates(g);
  CHECK(g1 == doctest::Approx(2.0));
  CHECK(g2 == doctest::Approx(2.0));
}

TEST_CASE("execute: identity relay over noiseless channels is lossless") {
  StaggeredCode code = identity_relay();
  Rng rng(4);
  auto res = execute_monte_carlo(code, uniform_pair(), DistortionMeasure::hamming(2), DistortionMeasure::hamming(2), Dmc::identity(2),
                                 Dmc::identity(2), 2000, rng);
  CHECK(res.dhat1 == doctest::Approx(0.0));
  CHECK(res.dhat2 == doctest::Approx(0.0));
}

TEST_CASE("execute: constant decoders on uniform bits give distortion one half") {
  StaggeredCode code = constant_decoder_code();
  Rng rng(5);
  auto res = execute_monte_carlo(code, uniform_pair(), DistortionMeasure::hamming(2), DistortionMeasure::hamming(2), Dmc::bsc(0.1),
                                 Dmc::bsc(0.1), 100000, rng);
  CHECK(std::fabs(res.dhat1 - 0.5) < 0.01);
  CHECK(std::fabs(res.dhat2 - 0.5) < 0.01);
}

TEST_CASE("execute: zero trials is an error") {
  StaggeredCode code = identity_relay();
  Rng rng(6);
  CHECK_THROWS_AS(execute_monte_carlo(code, uniform_pair(), DistortionMeasure::hamming(2), DistortionMeasure::hamming(2), Dmc::identity(2),
                                      Dmc::identity(2), 0, rng),
                  std::invalid_argument);
}

TEST_CASE("exact_joint: deterministic code is supported on |X1|^n |X2|^n points") {
  StaggeredCode code = identity_relay();
  Pmf joint = exact_joint(code, uniform_pair(), Dmc::identity(2), Dmc::identity(2));
  int support = 0;
  for (double p : joint.mass())
    if (p > 0.0) ++support;
  CHECK(support == 4);
}

TEST_CASE("exact_joint: round-one output is conditionally independent of X2 given X1") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1}, rng);
    Pmf joint = exact_joint(code, JointSource::doubly_symmetric_binary(0.2), Dmc::bsc(0.1), Dmc::bsc(0.2));
    CHECK(joint.mutual_information({{"X2"}, {"V1"}, {"X1"}}) <= 1e-10);
  }
}

TEST_CASE("exact_joint: source marginal equals the block product law") {
  CodeDims dims;
  dims.n = 2;
  Rng rng(23);
  StaggeredCode code = random_staggered_code(dims, {1, 2}, rng);
  JointSource src = JointSource::doubly_symmetric_binary(0.3);
  Pmf joint = exact_joint(code, src, Dmc::bsc(0.1), Dmc::bsc(0.05));
  Pmf marg = joint.marginalize({"X1", "X2"});
  // X1 and X2 are packed blocks of two letters each
  std::vector<int> xr = {2, 2};
  std::vector<int> d1(2), d2(2);
  for (int a = 0; a < 4; ++a) {
    unpack_digits(static_cast<std::size_t>(a), xr, d1);
    for (int b = 0; b < 4; ++b) {
      unpack_digits(static_cast<std::size_t>(b), xr, d2);
      double expect = src.p(d1[0], d2[0]) * src.p(d1[1], d2[1]);
      CHECK(std::fabs(marg.mass()[static_cast<std::size_t>(a * 4 + b)] - expect) < 1e-12);
    }
  }
}

TEST_CASE("exact distortions match Monte-Carlo within three standard errors") {
  Rng rng(31);
  StaggeredCode code = random_staggered_code(CodeDims{}, {1, 1}, rng);
  JointSource src = JointSource::doubly_symmetric_binary(0.25);
  DistortionMeasure h = DistortionMeasure::hamming(2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.15);
  auto [e1, e2] = exact_distortions(code, src, h, h, ch1, ch2);
  Rng mc(32);
  auto res = execute_monte_carlo(code, src, h, h, ch1, ch2, 100000, mc);
  CHECK(std::fabs(res.dhat1 - e1) <= 3.0 * std::max(res.stderr1, 1e-4));
  CHECK(std::fabs(res.dhat2 - e2) <= 3.0 * std::max(res.stderr2, 1e-4));
}

TEST_CASE("stagger_transform: already staggered code passes through unchanged") {
  Rng rng(41);
  Schedule sched;
  sched.c1 = {1, 0};
  sched.c2 = {0, 1};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode t = stagger_transform(g);
  CHECK(t.sched.c1 == g.sched.c1);
  CHECK(t.sched.c2 == g.sched.c2);
  CHECK(t.enc1[0] == g.enc1[0]);  // same objects, not rewrapped
  CHECK(t.dec1 == g.dec1);
}

TEST_CASE("stagger_transform: one simultaneous slot becomes two staggered slots") {
  Rng rng(43);
  Schedule sched;
  sched.c1 = {1};
  sched.c2 = {1};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode t = stagger_transform(g);
  REQUIRE(t.sched.horizon() == 2);
  CHECK(t.sched.c1 == std::vector<std::uint8_t>{1, 0});
  CHECK(t.sched.c2 == std::vector<std::uint8_t>{0, 1});
}

TEST_CASE("stagger_transform: exact distortions and rates preserved on random simultaneous codes") {
  Rng rng(47);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  DistortionMeasure h = DistortionMeasure::hamming(2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.2);
  for (int trial = 0; trial < 10; ++trial) {
    RandomScheduleOptions opts;
    opts.require_simultaneous = true;
    opts.boundary = BoundaryStyle::ForceOk;
    Schedule sched = random_schedule(2, rng, opts);
    GeneralCode g = random_general_code(CodeDims{}, sched, rng);
    GeneralCode t = stagger_transform(g);
    CHECK(t.sched.one_direction_per_slot());
    auto [a1, a2] = exact_distortions(g, src, h, h, ch1, ch2);
    auto [b1, b2] = exact_distortions(t, src, h, h, ch1, ch2);
    CHECK(std::fabs(a1 - b1) < 1e-12);
    CHECK(std::fabs(a2 - b2) < 1e-12);
    auto [r1, r2] = rates(g);
    auto [s1, s2] = rates(t);
    CHECK(r1 == doctest::Approx(s1));
    CHECK(r2 == doctest::Approx(s2));
  }
}

TEST_CASE("stagger_transform: boundary precondition error points to the padding ops") {
  Rng rng(53);
  Schedule sched;
  sched.c1 = {0, 1};
  sched.c2 = {1, 1};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  CHECK_THROWS_WITH_AS(stagger_transform(g), doctest::Contains("boundary_pad"), std::invalid_argument);
}

TEST_CASE("boundary_pad: no-op when the boundary is already right") {
  Rng rng(59);
  Schedule sched;
  sched.c1 = {1, 1};
  sched.c2 = {1, 1};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode p = boundary_pad(g);
  CHECK(p.sched.horizon() == 2);
  CHECK(p.enc1[0] == g.enc1[0]);
}

TEST_CASE("boundary_pad: violated boundary gets spurious slots and keeps distortions") {
  Rng rng(61);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  DistortionMeasure h = DistortionMeasure::hamming(2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.2);
  Schedule sched;
  sched.c1 = {0, 1};
  sched.c2 = {1, 0};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode p = boundary_pad(g);
  REQUIRE(p.sched.horizon() == 4);  // prepended and appended
  CHECK(p.sched.c1.front() == 1);
  CHECK(p.sched.c2.back() == 1);
  auto [a1, a2] = exact_distortions(g, src, h, h, ch1, ch2);
  auto [b1, b2] = exact_distortions(p, src, h, h, ch1, ch2);
  CHECK(std::fabs(a1 - b1) < 1e-12);
  CHECK(std::fabs(a2 - b2) < 1e-12);
  auto [r1, r2] = rates(g);
  auto [s1, s2] = rates(p);
  CHECK(s1 - r1 == doctest::Approx(1.0));  // one added slot per direction, n = 1
  CHECK(s2 - r2 == doctest::Approx(1.0));
}

TEST_CASE("repetition_lift: H=1 is the identity; rates are exactly preserved") {
  Rng rng(67);
  Schedule sched;
  sched.c1 = {1, 1};
  sched.c2 = {1, 0};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode same = repetition_lift(g, 1);
  CHECK(same.enc1[0] == g.enc1[0]);
  GeneralCode lifted = repetition_lift(g, 3);
  CHECK(lifted.dims.n == 3);
  CHECK(lifted.sched.horizon() == 6);
  auto [r1, r2] = rates(g);
  auto [l1, l2] = rates(lifted);
  CHECK(std::fabs(r1 - l1) < 1e-12);
  CHECK(std::fabs(r2 - l2) < 1e-12);
}

TEST_CASE("repetition_lift: exact distortions preserved (H=2, enumerated)") {
  Rng rng(71);
  JointSource src = JointSource::doubly_symmetric_binary(0.3);
  DistortionMeasure h = DistortionMeasure::hamming(2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.2);
  Schedule sched;
  sched.c1 = {1, 1};
  sched.c2 = {1, 1};
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode lifted = repetition_lift(g, 2);
  auto [a1, a2] = exact_distortions(g, src, h, h, ch1, ch2);
  auto [b1, b2] = exact_distortions(lifted, src, h, h, ch1, ch2);
  CHECK(std::fabs(a1 - b1) < 1e-12);
  CHECK(std::fabs(a2 - b2) < 1e-12);
}

TEST_CASE("pipeline: lift + pad + stagger reaches a staggered code with vanishing rate excess") {
  Rng rng(73);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  DistortionMeasure h = DistortionMeasure::hamming(2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.2);
  RandomScheduleOptions opts;
  opts.require_simultaneous = true;
  opts.boundary = BoundaryStyle::ForceViolated;
  for (int trial = 0; trial < 5; ++trial) {
    Schedule sched = random_schedule(2, rng, opts);
    GeneralCode g = random_general_code(CodeDims{}, sched, rng);
    auto [r1, r2] = rates(g);
    auto [d1, d2] = exact_distortions(g, src, h, h, ch1, ch2);
    double prev_excess = 1e9;
    for (int H : {1, 2, 4}) {
      GeneralCode t = stagger_transform(boundary_pad(repetition_lift(g, H)));
      CHECK(t.sched.one_direction_per_slot());
      CHECK(t.sched.boundary_ok());
      auto [s1, s2] = rates(t);
      double delta = 2.0 / (g.dims.n * H);
      CHECK(s1 <= r1 + delta + 1e-12);
      CHECK(s2 <= r2 + delta + 1e-12);
      double excess = std::max(s1 - r1, s2 - r2);
      CHECK(excess <= prev_excess + 1e-12);
      prev_excess = excess;
      if (H <= 2) {
        auto [t1, t2] = exact_distortions(t, src, h, h, ch1, ch2);
        CHECK(std::fabs(t1 - d1) < 1e-12);
        CHECK(std::fabs(t2 - d2) < 1e-12);
      }
    }
  }
}

TEST_CASE("to_staggered: round form reproduces the staggered-shaped general code") {
  Rng rng(79);
  JointSource src = JointSource::doubly_symmetric_binary(0.2);
  DistortionMeasure h = DistortionMeasure::hamming(2);
  Dmc ch1 = Dmc::bsc(0.1), ch2 = Dmc::bsc(0.2);
  RandomScheduleOptions opts;
  opts.require_simultaneous = true;
  opts.boundary = BoundaryStyle::ForceOk;
  Schedule sched = random_schedule(3, rng, opts);
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  GeneralCode t = stagger_transform(boundary_pad(g));
  StaggeredCode s = to_staggered(t);
  auto [a1, a2] = exact_distortions(t, src, h, h, ch1, ch2);
  auto [b1, b2] = exact_distortions(s, src, h, h, ch1, ch2);
  CHECK(std::fabs(a1 - b1) < 1e-12);
  CHECK(std::fabs(a2 - b2) < 1e-12);
  auto [r1, r2] = rates(t);
  auto [q1, q2] = rates(s);
  CHECK(r1 == doctest::Approx(q1));
  CHECK(r2 == doctest::Approx(q2));
}

TEST_CASE("causality: mutating future channel noise never changes past encoder outputs") {
  Rng rng(83);
  RandomScheduleOptions opts;
  opts.require_simultaneous = true;
  Schedule sched = random_schedule(4, rng, opts);
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  JointSource src = uniform_pair();
  auto [x1, x2] = src.sample_block(g.dims.n, rng);

  int uses = 0;
  for (int i = 0; i < sched.horizon(); ++i) uses += sched.c1[static_cast<std::size_t>(i)] + sched.c2[static_cast<std::size_t>(i)];
  std::vector<double> tape(static_cast<std::size_t>(uses));
  for (auto& u : tape) u = rng.next_unit();

  Dmc ch1 = Dmc::bsc(0.3), ch2 = Dmc::bsc(0.3);
  ExecutionTrace base = run_general(g, x1, x2, ch1, ch2, detail::UniformFeed{nullptr, tape, 0});

  // uses consumed per slot, in slot order (direction 1 before direction 2)
  std::vector<int> uses_before(static_cast<std::size_t>(sched.horizon() + 1), 0);
  for (int i = 0; i < sched.horizon(); ++i)
    uses_before[static_cast<std::size_t>(i + 1)] =
        uses_before[static_cast<std::size_t>(i)] + sched.c1[static_cast<std::size_t>(i)] + sched.c2[static_cast<std::size_t>(i)];

  for (int cut = 0; cut < sched.horizon(); ++cut) {
    std::vector<double> mutated = tape;
    for (std::size_t k = static_cast<std::size_t>(uses_before[static_cast<std::size_t>(cut)]); k < mutated.size(); ++k)
      mutated[k] = 1.0 - mutated[k] * 0.999;
    ExecutionTrace alt = run_general(g, x1, x2, ch1, ch2, detail::UniformFeed{nullptr, mutated, 0});
    for (int i = 0; i <= cut; ++i) {
      CHECK(alt.u1[static_cast<std::size_t>(i)] == base.u1[static_cast<std::size_t>(i)]);
      CHECK(alt.u2[static_cast<std::size_t>(i)] == base.u2[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("idle consistency: trace symbols are idle exactly where the schedule is silent") {
  Rng rng(89);
  Schedule sched = random_schedule(5, rng);
  GeneralCode g = random_general_code(CodeDims{}, sched, rng);
  Rng mc(90);
  auto res = execute_monte_carlo(g, uniform_pair(), DistortionMeasure::hamming(2), DistortionMeasure::hamming(2), Dmc::bsc(0.2), Dmc::bsc(0.2),
                                 16, mc, 16);
  for (const auto& tr : res.traces) {
    for (int i = 0; i < sched.horizon(); ++i) {
      CHECK((tr.u1[static_cast<std::size_t>(i)] == -1) == (sched.c1[static_cast<std::size_t>(i)] == 0));
      CHECK((tr.v1[static_cast<std::size_t>(i)] == -1) == (sched.c1[static_cast<std::size_t>(i)] == 0));
      CHECK((tr.u2[static_cast<std::size_t>(i)] == -1) == (sched.c2[static_cast<std::size_t>(i)] == 0));
      CHECK((tr.v2[static_cast<std::size_t>(i)] == -1) == (sched.c2[static_cast<std::size_t>(i)] == 0));
    }
  }
}

TEST_CASE("general and staggered execution agree for an identity relay expressed both ways") {
  // general form of the identity relay
  GeneralCode g;
  g.dims = CodeDims{};
  g.sched.c1 = {1, 0};
  g.sched.c2 = {0, 1};
  g.enc1 = {std::make_shared<TableEncoder>(std::vector<int>{2}, std::vector<int>{0, 1}), nullptr};
  g.enc2 = {nullptr, std::make_shared<TableEncoder>(std::vector<int>{2, 2}, std::vector<int>{0, 0, 1, 1})};
  // dec1 history: (x1, u1@0, v2@1) -> xh2 = v2 ; dec2 history: (x2, v1@0, u2@1) -> xh1 = v1
  g.dec1 = std::make_shared<TableDecoder>(std::vector<int>{2, 2, 2}, 1, 2, make_table({2, 2, 2}, [](const std::vector<int>& d) { return d[2]; }));
  g.dec2 = std::make_shared<TableDecoder>(std::vector<int>{2, 2, 2}, 1, 2, make_table({2, 2, 2}, [](const std::vector<int>& d) { return d[1]; }));
  g.validate();

  JointSource src = uniform_pair();
  DistortionMeasure h = DistortionMeasure::hamming(2);
  auto [a1, a2] = exact_distortions(g, src, h, h, Dmc::identity(2), Dmc::identity(2));
  CHECK(a1 == doctest::Approx(0.0));
  CHECK(a2 == doctest::Approx(0.0));
  auto [b1, b2] = exact_distortions(identity_relay(), src, h, h, Dmc::identity(2), Dmc::identity(2));
  CHECK(b1 == doctest::Approx(0.0));
  CHECK(b2 == doctest::Approx(0.0));
}
