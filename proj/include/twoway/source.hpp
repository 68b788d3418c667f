#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "twoway/pmf.hpp"
#include "twoway/rng.hpp"

namespace twoway {

/// A pair of correlated i.i.d. sources given by their per-letter joint law.
class JointSource {
 public:
  JointSource(int alphabet1, int alphabet2, std::vector<double> joint_row_major)
      : a1_(alphabet1), a2_(alphabet2), joint_(std::move(joint_row_major)) {
    if (a1_ < 1 || a2_ < 1) throw std::invalid_argument("JointSource: alphabet sizes must be >= 1");
    if (joint_.size() != static_cast<std::size_t>(a1_) * static_cast<std::size_t>(a2_))
      throw std::invalid_argument("JointSource: joint size does not match alphabets");
    long double s = 0.0L;
    for (double p : joint_) {
      if (!(p >= 0.0)) throw std::invalid_argument("JointSource: negative or NaN probability");
      s += p;
    }
    if (std::fabs(static_cast<double>(s) - 1.0) > kSumTol) {
      std::ostringstream os;
      os << "JointSource: joint sums to " << static_cast<double>(s) << ", not 1 within " << kSumTol;
      throw std::invalid_argument(os.str());
    }
    for (auto& p : joint_) p = static_cast<double>(p / s);
  }

  /// X2 = X1 + Bern(crossover) flip on bits, X1 uniform.
  static JointSource doubly_symmetric_binary(double crossover) {
    double a = 0.5 * (1.0 - crossover), b = 0.5 * crossover;
    return JointSource(2, 2, {a, b, b, a});
  }

  static JointSource independent(const std::vector<double>& p1, const std::vector<double>& p2) {
    std::vector<double> joint;
    joint.reserve(p1.size() * p2.size());
    for (double a : p1)
      for (double b : p2) joint.push_back(a * b);
    return JointSource(static_cast<int>(p1.size()), static_cast<int>(p2.size()), std::move(joint));
  }

  int alphabet1() const { return a1_; }
  int alphabet2() const { return a2_; }
  double p(int x1, int x2) const { return joint_[static_cast<std::size_t>(x1) * a2_ + static_cast<std::size_t>(x2)]; }
  const std::vector<double>& joint() const { return joint_; }

  std::vector<double> marginal1() const {
    std::vector<double> m(static_cast<std::size_t>(a1_), 0.0);
    for (int x1 = 0; x1 < a1_; ++x1)
      for (int x2 = 0; x2 < a2_; ++x2) m[static_cast<std::size_t>(x1)] += p(x1, x2);
    return m;
  }

  std::vector<double> marginal2() const {
    std::vector<double> m(static_cast<std::size_t>(a2_), 0.0);
    for (int x1 = 0; x1 < a1_; ++x1)
      for (int x2 = 0; x2 < a2_; ++x2) m[static_cast<std::size_t>(x2)] += p(x1, x2);
    return m;
  }

  std::pair<int, int> sample_pair(Rng& rng) const {
    int idx = sample_categorical(joint_, rng);
    return {idx / a2_, idx % a2_};
  }

  /// n i.i.d. draws; returns the two length-n symbol sequences.
  std::pair<std::vector<int>, std::vector<int>> sample_block(int n, Rng& rng) const {
    if (n < 1) throw std::invalid_argument("sample_block: n must be >= 1");
    std::vector<int> x1(static_cast<std::size_t>(n)), x2(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      auto [a, b] = sample_pair(rng);
      x1[static_cast<std::size_t>(t)] = a;
      x2[static_cast<std::size_t>(t)] = b;
    }
    return {std::move(x1), std::move(x2)};
  }

 private:
  int a1_, a2_;
  std::vector<double> joint_;
};

/// Per-letter distortion matrix d(x, xhat) >= 0.
class DistortionMeasure {
 public:
  DistortionMeasure(int source_size, int recon_size, std::vector<double> d_row_major)
      : src_(source_size), rec_(recon_size), d_(std::move(d_row_major)) {
    if (src_ < 1 || rec_ < 1) throw std::invalid_argument("DistortionMeasure: alphabet sizes must be >= 1");
    if (d_.size() != static_cast<std::size_t>(src_) * static_cast<std::size_t>(rec_))
      throw std::invalid_argument("DistortionMeasure: matrix size does not match alphabets");
    for (double v : d_)
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("DistortionMeasure: entries must be finite and >= 0");
  }

  static DistortionMeasure hamming(int k) {
    std::vector<double> d(static_cast<std::size_t>(k) * k, 1.0);
    for (int x = 0; x < k; ++x) d[static_cast<std::size_t>(x) * k + x] = 0.0;
    return DistortionMeasure(k, k, std::move(d));
  }

  int source_size() const { return src_; }
  int recon_size() const { return rec_; }
  double operator()(int x, int xhat) const { return d_[static_cast<std::size_t>(x) * rec_ + static_cast<std::size_t>(xhat)]; }

  double max_entry() const {
    double m = 0.0;
    for (double v : d_) m = std::max(m, v);
    return m;
  }

 private:
  int src_, rec_;
  std::vector<double> d_;
};

/// Per-symbol average (1/n) sum d(x_t, xhat_t).
inline double avg_distortion(std::span<const int> x, std::span<const int> xhat, const DistortionMeasure& d) {
  if (x.size() != xhat.size()) throw std::invalid_argument("avg_distortion: sequence length mismatch");
  if (x.empty()) throw std::invalid_argument("avg_distortion: empty sequences");
  long double s = 0.0L;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t] < 0 || x[t] >= d.source_size() || xhat[t] < 0 || xhat[t] >= d.recon_size())
      throw std::invalid_argument("avg_distortion: symbol out of range");
    s += d(x[t], xhat[t]);
  }
  return static_cast<double>(s / static_cast<long double>(x.size()));
}

namespace detail {

// One Blahut-Arimoto pass family for R(D): at multiplier beta (bits scale),
// iterate the reproduction marginal to convergence and return the achieved
// (distortion, rate-in-bits) point on the R(D) curve.
struct RdPoint {
  double distortion = 0.0;
  double rate = 0.0;
};

inline RdPoint rd_fixed_multiplier(const std::vector<double>& px, const DistortionMeasure& d, double beta) {
  const int nx = static_cast<int>(px.size());
  const int nr = d.recon_size();
  std::vector<double> q(static_cast<std::size_t>(nr), 1.0 / nr);
  std::vector<double> cond(static_cast<std::size_t>(nx) * static_cast<std::size_t>(nr));
  std::vector<double> dmin(static_cast<std::size_t>(nx));
  for (int x = 0; x < nx; ++x) {
    double m = std::numeric_limits<double>::infinity();
    for (int r = 0; r < nr; ++r) m = std::min(m, d(x, r));
    dmin[static_cast<std::size_t>(x)] = m;
  }
  constexpr int kMaxIter = 200000;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    // conditional update rows, exponents shifted by the per-row minimum
    for (int x = 0; x < nx; ++x) {
      long double s = 0.0L;
      for (int r = 0; r < nr; ++r) {
        double v = q[static_cast<std::size_t>(r)] * std::exp2(-beta * (d(x, r) - dmin[static_cast<std::size_t>(x)]));
        cond[static_cast<std::size_t>(x) * nr + r] = v;
        s += v;
      }
      for (int r = 0; r < nr; ++r) cond[static_cast<std::size_t>(x) * nr + r] = static_cast<double>(cond[static_cast<std::size_t>(x) * nr + r] / s);
    }
    double delta = 0.0;
    for (int r = 0; r < nr; ++r) {
      long double s = 0.0L;
      for (int x = 0; x < nx; ++x) s += static_cast<long double>(px[static_cast<std::size_t>(x)]) * cond[static_cast<std::size_t>(x) * nr + r];
      delta = std::max(delta, std::fabs(static_cast<double>(s) - q[static_cast<std::size_t>(r)]));
      q[static_cast<std::size_t>(r)] = static_cast<double>(s);
    }
    if (delta < 1e-15 && iter > 2) break;
  }
  RdPoint pt;
  long double dist = 0.0L, rate = 0.0L;
  for (int x = 0; x < nx; ++x)
    for (int r = 0; r < nr; ++r) {
      double joint = px[static_cast<std::size_t>(x)] * cond[static_cast<std::size_t>(x) * nr + r];
      if (joint > 0.0) {
        dist += static_cast<long double>(joint) * d(x, r);
        rate += static_cast<long double>(joint) * std::log2(cond[static_cast<std::size_t>(x) * nr + r] / q[static_cast<std::size_t>(r)]);
      }
    }
  pt.distortion = static_cast<double>(dist);
  pt.rate = std::max(0.0, static_cast<double>(rate));
  return pt;
}

}  // namespace detail

/// Rate-distortion function R(D) in bits/symbol for a single source marginal,
/// solved by Blahut-Arimoto on the Lagrangian with bisection on the
/// multiplier. Certification: a converged multiplier-beta point (D_b, R_b)
/// lies on the curve, the curve is convex with slope -beta there, so for
/// D_b <= D the value R(D) is bracketed by the tangent and R_b; we bisect
/// until that bracket is narrower than tol.
inline double rate_distortion(const std::vector<double>& marginal, const DistortionMeasure& d, double D, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("rate_distortion: tol must be positive");
  if (static_cast<int>(marginal.size()) != d.source_size())
    throw std::invalid_argument("rate_distortion: marginal size does not match distortion matrix");
  long double msum = 0.0L;
  for (double p : marginal) {
    if (!(p >= 0.0)) throw std::invalid_argument("rate_distortion: negative probability");
    msum += p;
  }
  if (std::fabs(static_cast<double>(msum) - 1.0) > 1e-9) throw std::invalid_argument("rate_distortion: marginal does not sum to 1");

  // feasibility: D_min = E_x min_r d(x,r); zero-rate point D_max = min_r E d(X,r)
  long double dmin_acc = 0.0L;
  for (int x = 0; x < d.source_size(); ++x) {
    double m = std::numeric_limits<double>::infinity();
    for (int r = 0; r < d.recon_size(); ++r) m = std::min(m, d(x, r));
    dmin_acc += static_cast<long double>(marginal[static_cast<std::size_t>(x)]) * m;
  }
  const double d_min = static_cast<double>(dmin_acc);
  if (D < d_min - 1e-12) {
    std::ostringstream os;
    os << "rate_distortion: target D=" << D << " is infeasible; minimum achievable distortion is " << d_min;
    throw std::invalid_argument(os.str());
  }
  double d_max = std::numeric_limits<double>::infinity();
  for (int r = 0; r < d.recon_size(); ++r) {
    long double e = 0.0L;
    for (int x = 0; x < d.source_size(); ++x) e += static_cast<long double>(marginal[static_cast<std::size_t>(x)]) * d(x, r);
    d_max = std::min(d_max, static_cast<double>(e));
  }
  if (D >= d_max) return 0.0;

  // grow beta until the achieved distortion dips below the target
  double beta = 1.0;
  detail::RdPoint hi = detail::rd_fixed_multiplier(marginal, d, beta);
  double lo_beta = 0.0;
  while (hi.distortion > D) {
    lo_beta = beta;
    beta *= 2.0;
    if (beta > 1e9) break;
    hi = detail::rd_fixed_multiplier(marginal, d, beta);
  }
  // bisect on beta; keep the feasible (distortion <= D) side as the answer
  detail::RdPoint best = hi;
  double best_beta = beta;
  for (int it = 0; it < 200; ++it) {
    if (best.distortion <= D && best_beta * (D - best.distortion) < 0.5 * tol) break;
    double mid = 0.5 * (lo_beta + best_beta);
    detail::RdPoint pm = detail::rd_fixed_multiplier(marginal, d, mid);
    if (pm.distortion <= D) {
      best = pm;
      best_beta = mid;
    } else {
      lo_beta = mid;
    }
    if (best_beta - lo_beta < 1e-13 * std::max(1.0, best_beta)) break;
  }
  // midpoint of [tangent value at D, curve value at the feasible point]
  double tangent = best.rate + best_beta * (best.distortion - D);
  return std::max(0.0, 0.5 * (best.rate + std::max(0.0, tangent)));
}

/// Conditional rate-distortion R_{X|Y}(D): both encoder and decoder know Y.
/// Decomposes into per-y subproblems tied by a common multiplier.
inline double conditional_rate_distortion(const JointSource& s, const DistortionMeasure& d, double D, double tol, bool condition_on_second = true) {
  if (!(tol > 0.0)) throw std::invalid_argument("conditional_rate_distortion: tol must be positive");
  const int ny = condition_on_second ? s.alphabet2() : s.alphabet1();
  std::vector<double> py(static_cast<std::size_t>(ny));
  std::vector<std::vector<double>> px_given_y(static_cast<std::size_t>(ny));
  for (int y = 0; y < ny; ++y) {
    const int nx = condition_on_second ? s.alphabet1() : s.alphabet2();
    std::vector<double> row(static_cast<std::size_t>(nx));
    long double tot = 0.0L;
    for (int x = 0; x < nx; ++x) {
      double v = condition_on_second ? s.p(x, y) : s.p(y, x);
      row[static_cast<std::size_t>(x)] = v;
      tot += v;
    }
    py[static_cast<std::size_t>(y)] = static_cast<double>(tot);
    if (tot > 0.0)
      for (auto& v : row) v = static_cast<double>(v / tot);
    px_given_y[static_cast<std::size_t>(y)] = std::move(row);
  }
  auto eval = [&](double beta) {
    detail::RdPoint acc;
    for (int y = 0; y < ny; ++y) {
      if (py[static_cast<std::size_t>(y)] <= 0.0) continue;
      detail::RdPoint pt = detail::rd_fixed_multiplier(px_given_y[static_cast<std::size_t>(y)], d, beta);
      acc.distortion += py[static_cast<std::size_t>(y)] * pt.distortion;
      acc.rate += py[static_cast<std::size_t>(y)] * pt.rate;
    }
    return acc;
  };
  long double dmin_acc = 0.0L;
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < d.source_size(); ++x) {
      double m = std::numeric_limits<double>::infinity();
      for (int r = 0; r < d.recon_size(); ++r) m = std::min(m, d(x, r));
      dmin_acc += static_cast<long double>(py[static_cast<std::size_t>(y)]) * px_given_y[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] * m;
    }
  if (D < static_cast<double>(dmin_acc) - 1e-12) {
    std::ostringstream os;
    os << "conditional_rate_distortion: target D=" << D << " infeasible; minimum is " << static_cast<double>(dmin_acc);
    throw std::invalid_argument(os.str());
  }
  // zero-rate: best reconstruction map y -> xhat
  long double dmax_acc = 0.0L;
  for (int y = 0; y < ny; ++y) {
    double besty = std::numeric_limits<double>::infinity();
    for (int r = 0; r < d.recon_size(); ++r) {
      long double e = 0.0L;
      for (int x = 0; x < d.source_size(); ++x) e += static_cast<long double>(px_given_y[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]) * d(x, r);
      besty = std::min(besty, static_cast<double>(e));
    }
    dmax_acc += static_cast<long double>(py[static_cast<std::size_t>(y)]) * besty;
  }
  if (D >= static_cast<double>(dmax_acc)) return 0.0;

  double beta = 1.0, lo_beta = 0.0;
  detail::RdPoint best = eval(beta);
  while (best.distortion > D) {
    lo_beta = beta;
    beta *= 2.0;
    if (beta > 1e9) break;
    best = eval(beta);
  }
  double best_beta = beta;
  for (int it = 0; it < 200; ++it) {
    if (best.distortion <= D && best_beta * (D - best.distortion) < 0.5 * tol) break;
    double mid = 0.5 * (lo_beta + best_beta);
    detail::RdPoint pm = eval(mid);
    if (pm.distortion <= D) {
      best = pm;
      best_beta = mid;
    } else {
      lo_beta = mid;
    }
    if (best_beta - lo_beta < 1e-13 * std::max(1.0, best_beta)) break;
  }
  double tangent = best.rate + best_beta * (best.distortion - D);
  return std::max(0.0, 0.5 * (best.rate + std::max(0.0, tangent)));
}

}  // namespace twoway
