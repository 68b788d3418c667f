#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoway/rng.hpp"

namespace twoway {

// Hard cap on dense-table size; everything in the library that enumerates a
// joint state space checks against it and fails loudly instead of thrashing.
inline constexpr std::size_t kMaxCells = std::size_t{1} << 24;

inline constexpr double kSumTol = 1e-12;

/// A named finite-alphabet coordinate of a joint distribution.
struct Variable {
  std::string name;
  int alphabet_size = 0;
};

/// Mixed-radix packing with the first digit most significant. Used everywhere
/// a tuple of symbols becomes a flat table index.
inline std::size_t pack_digits(std::span<const int> digits, std::span<const int> radices) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) idx = idx * static_cast<std::size_t>(radices[i]) + static_cast<std::size_t>(digits[i]);
  return idx;
}

inline void unpack_digits(std::size_t idx, std::span<const int> radices, std::span<int> out) {
  for (std::size_t i = radices.size(); i-- > 0;) {
    out[i] = static_cast<int>(idx % static_cast<std::size_t>(radices[i]));
    idx /= static_cast<std::size_t>(radices[i]);
  }
}

inline std::size_t checked_cell_count(std::span<const int> radices, const char* what) {
  std::size_t cells = 1;
  for (int r : radices) {
    if (r < 1) throw std::invalid_argument(std::string(what) + ": alphabet size must be >= 1");
    if (cells > kMaxCells / static_cast<std::size_t>(r)) {
      std::ostringstream os;
      os << what << ": state space exceeds cell ceiling " << kMaxCells << " (needs >" << cells << "x" << r << " cells)";
      throw std::invalid_argument(os.str());
    }
    cells *= static_cast<std::size_t>(r);
  }
  return cells;
}

/// A conditional/unconditional mutual information query I(left; right | given).
struct MiQuery {
  std::vector<std::string> left;
  std::vector<std::string> right;
  std::vector<std::string> given;
};

/// Dense joint pmf over named finite variables. The universal substrate for
/// the entropy and mutual-information arithmetic in this library.
///
/// Invariants enforced at construction: all entries nonnegative, the table
/// size matches the alphabet product, and the mass sums to 1 within 1e-12.
class Pmf {
 public:
  Pmf(std::vector<Variable> vars, std::vector<double> mass) : vars_(std::move(vars)), mass_(std::move(mass)) {
    std::vector<int> radices;
    radices.reserve(vars_.size());
    for (const auto& v : vars_) {
      if (v.name.empty()) throw std::invalid_argument("Pmf: variable names must be nonempty");
      radices.push_back(v.alphabet_size);
    }
    for (std::size_t i = 0; i < vars_.size(); ++i)
      for (std::size_t j = i + 1; j < vars_.size(); ++j)
        if (vars_[i].name == vars_[j].name) throw std::invalid_argument("Pmf: duplicate variable name '" + vars_[i].name + "'");
    const std::size_t cells = checked_cell_count(radices, "Pmf");
    if (mass_.size() != cells) {
      std::ostringstream os;
      os << "Pmf: table has " << mass_.size() << " entries, expected " << cells;
      throw std::invalid_argument(os.str());
    }
    long double sum = 0.0L;
    for (double p : mass_) {
      if (!(p >= 0.0)) throw std::invalid_argument("Pmf: negative or NaN mass entry");
      sum += p;
    }
    if (std::fabs(static_cast<double>(sum) - 1.0) > kSumTol) {
      std::ostringstream os;
      os << "Pmf: mass sums to " << static_cast<double>(sum) << ", not 1 within " << kSumTol;
      throw std::invalid_argument(os.str());
    }
  }

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<double>& mass() const { return mass_; }
  std::size_t size() const { return mass_.size(); }

  int variable_index(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  bool has_variable(const std::string& name) const { return variable_index(name) >= 0; }

  double at(std::span<const int> digits) const {
    std::vector<int> radices = radices_of(vars_);
    return mass_[pack_digits(digits, radices)];
  }

  /// Sum out everything not in `keep` (original variable order preserved).
  Pmf marginalize(const std::vector<std::string>& keep) const {
    std::vector<bool> kept(vars_.size(), false);
    for (const auto& name : keep) {
      int idx = variable_index(name);
      if (idx < 0) throw std::invalid_argument("marginalize: unknown variable '" + name + "'");
      kept[static_cast<std::size_t>(idx)] = true;
    }
    std::vector<Variable> out_vars;
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (kept[i]) out_vars.push_back(vars_[i]);
    if (out_vars.size() != keep.size()) throw std::invalid_argument("marginalize: duplicate variable in keep set");

    // Per-variable additive contribution of each digit to the reduced index.
    std::vector<std::size_t> out_stride(vars_.size(), 0);
    {
      std::size_t stride = 1;
      for (std::size_t i = vars_.size(); i-- > 0;) {
        if (kept[i]) {
          out_stride[i] = stride;
          stride *= static_cast<std::size_t>(vars_[i].alphabet_size);
        }
      }
    }
    std::size_t out_cells = 1;
    for (const auto& v : out_vars) out_cells *= static_cast<std::size_t>(v.alphabet_size);
    std::vector<double> out_mass(out_cells, 0.0);

    std::vector<int> digits(vars_.size(), 0);
    std::size_t out_idx = 0;
    for (std::size_t idx = 0; idx < mass_.size(); ++idx) {
      out_mass[out_idx] += mass_[idx];
      // odometer increment, maintaining the reduced index incrementally
      for (std::size_t i = vars_.size(); i-- > 0;) {
        if (++digits[i] < vars_[i].alphabet_size) {
          out_idx += out_stride[i];
          break;
        }
        out_idx -= out_stride[i] * static_cast<std::size_t>(vars_[i].alphabet_size - 1);
        digits[i] = 0;
      }
    }
    return Pmf(std::move(out_vars), std::move(out_mass));
  }

  /// Shannon entropy (bits) of the marginal over `over`. 0 log 0 := 0.
  double entropy(const std::vector<std::string>& over) const {
    if (over.empty()) throw std::invalid_argument("entropy: variable set must be nonempty");
    return entropy_allow_empty(over);
  }

  /// I(left; right | given) in bits, always computed through entropies so a
  /// single code path serves conditional and unconditional queries.
  double mutual_information(const MiQuery& q) const {
    validate_query(q);
    std::vector<std::string> lg = concat(q.left, q.given);
    std::vector<std::string> rg = concat(q.right, q.given);
    std::vector<std::string> lrg = concat(concat(q.left, q.right), q.given);
    return entropy_allow_empty(lg) + entropy_allow_empty(rg) - entropy_allow_empty(lrg) - entropy_allow_empty(q.given);
  }

  static std::vector<int> radices_of(const std::vector<Variable>& vars) {
    std::vector<int> r;
    r.reserve(vars.size());
    for (const auto& v : vars) r.push_back(v.alphabet_size);
    return r;
  }

 private:
  double entropy_allow_empty(const std::vector<std::string>& over) const {
    if (over.empty()) return 0.0;
    Pmf m = marginalize(over);
    long double h = 0.0L;
    for (double p : m.mass_)
      if (p > 0.0) h -= static_cast<long double>(p) * std::log2(p);
    return static_cast<double>(h);
  }

  void validate_query(const MiQuery& q) const {
    auto check_names = [this](const std::vector<std::string>& names, const char* part) {
      for (const auto& n : names)
        if (!has_variable(n)) throw std::invalid_argument(std::string("mutual_information: unknown variable '") + n + "' in " + part);
    };
    check_names(q.left, "left");
    check_names(q.right, "right");
    check_names(q.given, "given");
    auto overlap = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
      for (const auto& x : a)
        for (const auto& y : b)
          if (x == y) return true;
      return false;
    };
    if (overlap(q.left, q.right) || overlap(q.left, q.given) || overlap(q.right, q.given))
      throw std::invalid_argument("mutual_information: left/right/given sets must be pairwise disjoint");
  }

  static std::vector<std::string> concat(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  std::vector<Variable> vars_;
  std::vector<double> mass_;
};

/// Product of k fair bits named name0..name{k-1}.
inline Pmf uniform_bits(int k, const std::string& prefix = "B") {
  std::vector<Variable> vars;
  for (int i = 0; i < k; ++i) vars.push_back({prefix + std::to_string(i), 2});
  std::vector<double> mass(std::size_t{1} << k, 1.0 / static_cast<double>(std::size_t{1} << k));
  return Pmf(std::move(vars), std::move(mass));
}

/// Random pmf with Exponential(1) weights, normalized. For property tests.
inline Pmf random_pmf(std::vector<Variable> vars, Rng& rng) {
  std::vector<int> radices = Pmf::radices_of(vars);
  std::size_t cells = checked_cell_count(radices, "random_pmf");
  std::vector<double> mass(cells);
  long double total = 0.0L;
  for (auto& p : mass) {
    p = -std::log(1.0 - rng.next_unit());
    total += p;
  }
  for (auto& p : mass) p = static_cast<double>(p / total);
  // push rounding slack into the largest entry so the sum is exactly 1-ish
  long double sum = 0.0L;
  for (double p : mass) sum += p;
  auto it = std::max_element(mass.begin(), mass.end());
  *it += static_cast<double>(1.0L - sum);
  return Pmf(std::move(vars), std::move(mass));
}

}  // namespace twoway
