#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "twoway/pmf.hpp"
#include "twoway/rng.hpp"

namespace twoway {

/// Discrete memoryless channel: a row-stochastic transition matrix W(y|x).
/// Rows are validated to sum to 1 within 1e-12 and then renormalized exactly,
/// so downstream exact enumerations stay within the pmf sum tolerance.
class Dmc {
 public:
  Dmc(int input_size, int output_size, std::vector<double> row_major)
      : in_(input_size), out_(output_size), w_(std::move(row_major)) {
    if (in_ < 1 || out_ < 1) throw std::invalid_argument("Dmc: alphabet sizes must be >= 1");
    if (w_.size() != static_cast<std::size_t>(in_) * static_cast<std::size_t>(out_))
      throw std::invalid_argument("Dmc: matrix size does not match input_size x output_size");
    for (int x = 0; x < in_; ++x) {
      long double s = 0.0L;
      for (int y = 0; y < out_; ++y) {
        double v = w_[idx(x, y)];
        if (!(v >= 0.0)) throw std::invalid_argument("Dmc: negative or NaN transition probability");
        s += v;
      }
      if (std::fabs(static_cast<double>(s) - 1.0) > kSumTol) {
        std::ostringstream os;
        os << "Dmc: row " << x << " sums to " << static_cast<double>(s) << ", not 1 within " << kSumTol;
        throw std::invalid_argument(os.str());
      }
      for (int y = 0; y < out_; ++y) w_[idx(x, y)] = static_cast<double>(w_[idx(x, y)] / s);
    }
  }

  static Dmc bsc(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("Dmc::bsc: p must be in [0,1]");
    return Dmc(2, 2, {1.0 - p, p, p, 1.0 - p});
  }

  static Dmc identity(int k) {
    std::vector<double> w(static_cast<std::size_t>(k) * k, 0.0);
    for (int x = 0; x < k; ++x) w[static_cast<std::size_t>(x) * k + x] = 1.0;
    return Dmc(k, k, std::move(w));
  }

  int input_size() const { return in_; }
  int output_size() const { return out_; }
  double w(int x, int y) const { return w_[idx(x, y)]; }
  std::span<const double> row(int x) const { return {w_.data() + idx(x, 0), static_cast<std::size_t>(out_)}; }

  /// One memoryless use on input symbol x.
  int sample(int x, Rng& rng) const {
    if (x < 0 || x >= in_) throw std::invalid_argument("Dmc::sample: input symbol out of range");
    return sample_categorical(row(x), rng);
  }

  /// n-fold memoryless extension; symbols are length-n words packed with the
  /// first letter most significant.
  Dmc extend(int n) const {
    if (n < 1) throw std::invalid_argument("Dmc::extend: n must be >= 1");
    std::size_t in_n = 1, out_n = 1;
    for (int i = 0; i < n; ++i) {
      if (in_n > kMaxCells / static_cast<std::size_t>(in_) || out_n > kMaxCells / static_cast<std::size_t>(out_))
        throw std::invalid_argument("Dmc::extend: extension exceeds cell ceiling");
      in_n *= static_cast<std::size_t>(in_);
      out_n *= static_cast<std::size_t>(out_);
    }
    if (in_n > kMaxCells / out_n) {
      std::ostringstream os;
      os << "Dmc::extend: extension needs " << in_n << "x" << out_n << " cells, above ceiling " << kMaxCells;
      throw std::invalid_argument(os.str());
    }
    std::vector<double> w(in_n * out_n);
    std::vector<int> xd(static_cast<std::size_t>(n)), yd(static_cast<std::size_t>(n));
    std::vector<int> in_rad(static_cast<std::size_t>(n), in_), out_rad(static_cast<std::size_t>(n), out_);
    for (std::size_t xi = 0; xi < in_n; ++xi) {
      unpack_digits(xi, in_rad, xd);
      for (std::size_t yi = 0; yi < out_n; ++yi) {
        unpack_digits(yi, out_rad, yd);
        double p = 1.0;
        for (int t = 0; t < n; ++t) p *= this->w(xd[static_cast<std::size_t>(t)], yd[static_cast<std::size_t>(t)]);
        w[xi * out_n + yi] = p;
      }
    }
    return Dmc(static_cast<int>(in_n), static_cast<int>(out_n), std::move(w));
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(x) * static_cast<std::size_t>(out_) + static_cast<std::size_t>(y); }

  int in_, out_;
  std::vector<double> w_;
};

struct CapacityResult {
  double capacity = 0.0;             // bits per channel use
  std::vector<double> optimal_input; // argmax input distribution
  int iterations = 0;
  double gap = 0.0;                  // certified upper - lower bound at stop
};

/// Shannon capacity via Blahut-Arimoto with the certified sandwich
///   log2 sum_x p(x) 2^{D_x}  <=  C  <=  max_x D_x,
/// where D_x = D(W(.|x) || q) in bits. The lower bound is nondecreasing in
/// the iteration count; we stop when the sandwich width drops below tol and
/// report the midpoint, so the result is within tol of the true capacity.
inline CapacityResult capacity(const Dmc& ch, double tol, std::vector<double>* lower_bound_trace = nullptr) {
  if (!(tol > 0.0)) throw std::invalid_argument("capacity: tol must be positive");
  const int in = ch.input_size(), out = ch.output_size();
  std::vector<double> p(static_cast<std::size_t>(in), 1.0 / in);
  std::vector<double> q(static_cast<std::size_t>(out));
  std::vector<double> d(static_cast<std::size_t>(in));
  constexpr int kMaxIter = 100000;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    std::fill(q.begin(), q.end(), 0.0);
    for (int x = 0; x < in; ++x)
      for (int y = 0; y < out; ++y) q[static_cast<std::size_t>(y)] += p[static_cast<std::size_t>(x)] * ch.w(x, y);
    double ub = -1.0;
    for (int x = 0; x < in; ++x) {
      long double dx = 0.0L;
      for (int y = 0; y < out; ++y) {
        double wxy = ch.w(x, y);
        if (wxy > 0.0) dx += static_cast<long double>(wxy) * std::log2(wxy / q[static_cast<std::size_t>(y)]);
      }
      d[static_cast<std::size_t>(x)] = static_cast<double>(dx);
      ub = std::max(ub, d[static_cast<std::size_t>(x)]);
    }
    long double z = 0.0L;
    for (int x = 0; x < in; ++x) z += static_cast<long double>(p[static_cast<std::size_t>(x)]) * std::exp2(d[static_cast<std::size_t>(x)]);
    const double lb = static_cast<double>(std::log2(static_cast<double>(z)));
    if (lower_bound_trace) lower_bound_trace->push_back(lb);
    if (ub - lb < tol) {
      CapacityResult res;
      res.capacity = std::max(0.0, 0.5 * (ub + lb));
      res.optimal_input = p;
      res.iterations = iter;
      res.gap = ub - lb;
      return res;
    }
    for (int x = 0; x < in; ++x) p[static_cast<std::size_t>(x)] = static_cast<double>(p[static_cast<std::size_t>(x)] * std::exp2(d[static_cast<std::size_t>(x)]) / z);
  }
  throw std::runtime_error("capacity: Blahut-Arimoto did not certify the requested tolerance within 100000 iterations");
}

}  // namespace twoway
