#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoway/pmf.hpp"

namespace twoway {

/// One verified relation on an exactly-computed joint law. For bound checks
/// `holds` means slack >= -1e-9; identity checks require |slack| <= 1e-9 and
/// structural (Markov) checks require lhs <= 1e-10. The kind is part of the
/// label; see docs/verifier_checks.md for the catalog.
struct InequalityCheck {
  std::string label;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // lhs - rhs
  bool holds = false;
};

inline constexpr double kBoundTol = 1e-9;
inline constexpr double kIdentityTol = 1e-9;
inline constexpr double kMarkovTol = 1e-10;

/// Full verification record for one executed staggered code.
struct ConverseReport {
  int q = 0;
  double rate1 = 0.0, rate2 = 0.0;      // channel uses per source symbol
  double capacity1 = 0.0, capacity2 = 0.0;
  std::vector<InequalityCheck> checks;
  bool all_hold = true;

  void add(InequalityCheck c) {
    all_hold = all_hold && c.holds;
    checks.push_back(std::move(c));
  }
};

namespace detail {

// Left/right/conditioning variable sets of the per-pair information bounds.
// Pair p (1-based) covers rounds 2p-1 (user 1 sends) and 2p (user 2 sends):
//   side1(p) = {X1, V2, V4, ..., V_{2p-2}}   what user 1 holds entering the pair
//   side2(p) = {X2, V1, V3, ..., V_{2p-3}}   what user 2 held before round 2p-1
inline std::vector<std::string> side1_vars(int p) {
  std::vector<std::string> v = {"X1"};
  for (int k = 2; k <= 2 * p - 2; k += 2) v.push_back("V" + std::to_string(k));
  return v;
}

inline std::vector<std::string> side2_vars(int p) {
  std::vector<std::string> v = {"X2"};
  for (int k = 1; k <= 2 * p - 3; k += 2) v.push_back("V" + std::to_string(k));
  return v;
}

inline std::vector<std::string> all_v_through(int k_max) {
  std::vector<std::string> v;
  for (int k = 1; k <= k_max; ++k) v.push_back("V" + std::to_string(k));
  return v;
}

inline std::vector<std::string> with(std::vector<std::string> base, const std::string& extra) {
  base.push_back(extra);
  return base;
}

}  // namespace detail

/// Number of round-output variables V1..Vq present in a joint law.
inline int infer_rounds(const Pmf& joint) {
  int q = 0;
  while (joint.has_variable("V" + std::to_string(q + 1))) ++q;
  return q;
}

/// Verifies that the joint law carries the variables the verifier consumes.
inline void require_converse_variables(const Pmf& joint, int q) {
  std::vector<std::string> missing;
  for (const std::string& name : {std::string("X1"), std::string("X2")})
    if (!joint.has_variable(name)) missing.push_back(name);
  for (int k = 1; k <= q; ++k)
    if (!joint.has_variable("V" + std::to_string(k))) missing.push_back("V" + std::to_string(k));
  if (!missing.empty()) {
    std::ostringstream os;
    os << "converse: joint law is missing variable(s):";
    for (const auto& m : missing) os << " " << m;
    throw std::invalid_argument(os.str());
  }
}

/// The per-pair and cumulative information bounds of the converse chain,
/// evaluated numerically on the exact joint law of an executed staggered
/// code. For every pair p the report contains
///   n_{2p-1} C1 >= I(side1; V_{2p-1}, V_{2p} | side2)
///   n_{2p}   C2 >= I(side2; V_{2p-1}, V_{2p} | side1)
/// and the cumulative bounds through pair p,
///   (n_1 + n_3 + ... + n_{2p-1}) C1 >= I(X1; V1..V_{2p} | X2)
///   (n_2 + n_4 + ... + n_{2p})   C2 >= I(X2; V1..V_{2p} | X1);
/// the entries for the final pair are the chain's end result.
inline ConverseReport check_round_bounds(const Pmf& joint, const std::vector<int>& round_lengths, double C1, double C2) {
  const int q = static_cast<int>(round_lengths.size());
  if (q < 2 || q % 2 != 0) throw std::invalid_argument("check_round_bounds: round count must be even and >= 2");
  require_converse_variables(joint, q);

  // Drop reconstruction variables early; every query below ignores them.
  std::vector<std::string> keep = {"X1", "X2"};
  for (int k = 1; k <= q; ++k) keep.push_back("V" + std::to_string(k));
  Pmf law = joint.marginalize(keep);

  ConverseReport report;
  report.q = q;
  report.capacity1 = C1;
  report.capacity2 = C2;

  double uses1 = 0, uses2 = 0;
  for (int k = 1; k <= q; ++k) ((k % 2 == 1) ? uses1 : uses2) += round_lengths[static_cast<std::size_t>(k - 1)];

  double cum1 = 0, cum2 = 0;
  for (int p = 1; p <= q / 2; ++p) {
    const std::string v_send = "V" + std::to_string(2 * p - 1);
    const std::string v_reply = "V" + std::to_string(2 * p);
    const auto side1 = detail::side1_vars(p);
    const auto side2 = detail::side2_vars(p);
    const double n_send = round_lengths[static_cast<std::size_t>(2 * p - 2)];
    const double n_reply = round_lengths[static_cast<std::size_t>(2 * p - 1)];
    cum1 += n_send;
    cum2 += n_reply;

    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".bound.c1";
      c.lhs = n_send * C1;
      c.rhs = law.mutual_information({side1, {v_send, v_reply}, side2});
      c.slack = c.lhs - c.rhs;
      c.holds = c.slack >= -kBoundTol;
      report.add(std::move(c));
    }
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".bound.c2";
      c.lhs = n_reply * C2;
      c.rhs = law.mutual_information({side2, {v_send, v_reply}, side1});
      c.slack = c.lhs - c.rhs;
      c.holds = c.slack >= -kBoundTol;
      report.add(std::move(c));
    }
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".cum.c1";
      c.lhs = cum1 * C1;
      c.rhs = law.mutual_information({{"X1"}, detail::all_v_through(2 * p), {"X2"}});
      c.slack = c.lhs - c.rhs;
      c.holds = c.slack >= -kBoundTol;
      report.add(std::move(c));
    }
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".cum.c2";
      c.lhs = cum2 * C2;
      c.rhs = law.mutual_information({{"X2"}, detail::all_v_through(2 * p), {"X1"}});
      c.slack = c.lhs - c.rhs;
      c.holds = c.slack >= -kBoundTol;
      report.add(std::move(c));
    }
  }
  return report;
}

/// The two proof identities behind the per-pair bounds, checked as exact
/// equalities of mutual-information arithmetic (they hold for any joint law;
/// a violation indicates a defect in the information engine). Pair p uses
/// A = side1(p), B = side2(p), Vs = V_{2p-1}, Vr = V_{2p}:
///   c1: [I(A;Vs) + I(B;Vs|A) + I(A;Vr|B,Vs)] - I(A;Vs,Vr|B) = I(B;Vs)
///   c2: [I(B,Vs;Vr) + I(A;Vr|B,Vs) + I(B;Vs|A)] - I(B;Vs,Vr|A) = I(Vr;A,Vs)
inline std::vector<InequalityCheck> check_identity_lemmas(const Pmf& joint, int q) {
  if (q < 2 || q % 2 != 0) throw std::invalid_argument("check_identity_lemmas: round count must be even and >= 2");
  require_converse_variables(joint, q);
  std::vector<std::string> keep = {"X1", "X2"};
  for (int k = 1; k <= q; ++k) keep.push_back("V" + std::to_string(k));
  Pmf law = joint.marginalize(keep);

  std::vector<InequalityCheck> checks;
  for (int p = 1; p <= q / 2; ++p) {
    const std::string vs = "V" + std::to_string(2 * p - 1);
    const std::string vr = "V" + std::to_string(2 * p);
    const auto A = detail::side1_vars(p);
    const auto B = detail::side2_vars(p);
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".identity.c1";
      c.lhs = law.mutual_information({A, {vs}, {}}) + law.mutual_information({B, {vs}, A}) +
              law.mutual_information({A, {vr}, detail::with(B, vs)}) - law.mutual_information({A, {vs, vr}, B});
      c.rhs = law.mutual_information({B, {vs}, {}});
      c.slack = c.lhs - c.rhs;
      c.holds = std::fabs(c.slack) <= kIdentityTol;
      checks.push_back(std::move(c));
    }
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".identity.c2";
      c.lhs = law.mutual_information({detail::with(B, vs), {vr}, {}}) + law.mutual_information({A, {vr}, detail::with(B, vs)}) +
              law.mutual_information({B, {vs}, A}) - law.mutual_information({B, {vs, vr}, A});
      c.rhs = law.mutual_information({{vr}, detail::with(A, vs), {}});
      c.slack = c.lhs - c.rhs;
      c.holds = std::fabs(c.slack) <= kIdentityTol;
      checks.push_back(std::move(c));
    }
  }
  return checks;
}

/// The conditional independences created by the execution order: the output
/// of a round is conditionally independent of what the other user holds,
/// given everything its sender used. Pair p checks
///   send:  I(B; V_{2p-1} | A)        (B = side2(p), A = side1(p))
///   reply: I(A; V_{2p}   | B, V_{2p-1})
/// both of which must vanish for every executed staggered code.
inline std::vector<InequalityCheck> check_markov_structure(const Pmf& joint, int q) {
  if (q < 2 || q % 2 != 0) throw std::invalid_argument("check_markov_structure: round count must be even and >= 2");
  require_converse_variables(joint, q);
  std::vector<std::string> keep = {"X1", "X2"};
  for (int k = 1; k <= q; ++k) keep.push_back("V" + std::to_string(k));
  Pmf law = joint.marginalize(keep);

  std::vector<InequalityCheck> checks;
  for (int p = 1; p <= q / 2; ++p) {
    const std::string vs = "V" + std::to_string(2 * p - 1);
    const std::string vr = "V" + std::to_string(2 * p);
    const auto A = detail::side1_vars(p);
    const auto B = detail::side2_vars(p);
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".markov.send";
      c.lhs = law.mutual_information({B, {vs}, A});
      c.rhs = 0.0;
      c.slack = c.lhs;
      c.holds = c.lhs <= kMarkovTol && c.lhs >= -kMarkovTol;
      checks.push_back(std::move(c));
    }
    {
      InequalityCheck c;
      c.label = "p" + std::to_string(p) + ".markov.reply";
      c.lhs = law.mutual_information({A, {vr}, detail::with(B, vs)});
      c.rhs = 0.0;
      c.slack = c.lhs;
      c.holds = c.lhs <= kMarkovTol && c.lhs >= -kMarkovTol;
      checks.push_back(std::move(c));
    }
  }
  return checks;
}

inline std::vector<InequalityCheck> check_identity_lemmas(const Pmf& joint) { return check_identity_lemmas(joint, infer_rounds(joint)); }

inline std::vector<InequalityCheck> check_markov_structure(const Pmf& joint) { return check_markov_structure(joint, infer_rounds(joint)); }

/// Convenience: all three check families on one joint law.
inline ConverseReport full_converse_report(const Pmf& joint, const std::vector<int>& round_lengths, double C1, double C2) {
  ConverseReport report = check_round_bounds(joint, round_lengths, C1, C2);
  for (auto& c : check_identity_lemmas(joint, report.q)) report.add(std::move(c));
  for (auto& c : check_markov_structure(joint, report.q)) report.add(std::move(c));
  return report;
}

}  // namespace twoway
