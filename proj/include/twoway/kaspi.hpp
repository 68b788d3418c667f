#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoway/pmf.hpp"
#include "twoway/rng.hpp"
#include "twoway/source.hpp"

namespace twoway {

/// An auxiliary-variable chain for q-round interactive source coding: per
/// round a conditional pmf (odd rounds condition on the x1 letter and the
/// past auxiliaries, even rounds on x2 and the past), plus deterministic
/// reconstruction maps from each user's source letter and all auxiliaries.
struct AuxChain {
  int q = 0;
  int x1_size = 0, x2_size = 0;
  int xh1_size = 0, xh2_size = 0;
  std::vector<int> aux_sizes;                     // |U_k|, k = 1..q
  std::vector<std::vector<double>> conditionals;  // [k-1]: context-major rows over U_k
  std::vector<int> recon1;                        // (x1, u^q) -> xh2 letter
  std::vector<int> recon2;                        // (x2, u^q) -> xh1 letter

  std::size_t u_cells() const {
    std::size_t c = 1;
    for (int m : aux_sizes) c *= static_cast<std::size_t>(m);
    return c;
  }

  // context of round k (1-based) = [side letter, u_1, ..., u_{k-1}]
  std::size_t context_cells(int k) const {
    std::size_t c = static_cast<std::size_t>((k % 2 == 1) ? x1_size : x2_size);
    for (int j = 0; j < k - 1; ++j) c *= static_cast<std::size_t>(aux_sizes[static_cast<std::size_t>(j)]);
    return c;
  }

  std::size_t context_index(int k, int side_letter, std::span<const int> u) const {
    std::size_t idx = static_cast<std::size_t>(side_letter);
    for (int j = 0; j < k - 1; ++j) idx = idx * static_cast<std::size_t>(aux_sizes[static_cast<std::size_t>(j)]) + static_cast<std::size_t>(u[static_cast<std::size_t>(j)]);
    return idx;
  }

  double w(int k, std::size_t ctx, int u_value) const {
    const int m = aux_sizes[static_cast<std::size_t>(k - 1)];
    return conditionals[static_cast<std::size_t>(k - 1)][ctx * static_cast<std::size_t>(m) + static_cast<std::size_t>(u_value)];
  }

  std::size_t pack_u(std::span<const int> u) const {
    std::size_t idx = 0;
    for (int k = 0; k < q; ++k) idx = idx * static_cast<std::size_t>(aux_sizes[static_cast<std::size_t>(k)]) + static_cast<std::size_t>(u[static_cast<std::size_t>(k)]);
    return idx;
  }

  void validate() const {
    if (q < 2 || q % 2 != 0) throw std::invalid_argument("AuxChain: q must be even and >= 2");
    if (x1_size < 1 || x2_size < 1 || xh1_size < 1 || xh2_size < 1) throw std::invalid_argument("AuxChain: alphabet sizes must be >= 1");
    if (static_cast<int>(aux_sizes.size()) != q || static_cast<int>(conditionals.size()) != q)
      throw std::invalid_argument("AuxChain: need one alphabet size and one conditional per round");
    for (int k = 1; k <= q; ++k) {
      const int m = aux_sizes[static_cast<std::size_t>(k - 1)];
      if (m < 1) throw std::invalid_argument("AuxChain: auxiliary alphabets must be nonempty");
      const auto& cond = conditionals[static_cast<std::size_t>(k - 1)];
      if (cond.size() != context_cells(k) * static_cast<std::size_t>(m))
        throw std::invalid_argument("AuxChain: conditional table size mismatch at round " + std::to_string(k));
      for (std::size_t ctx = 0; ctx < context_cells(k); ++ctx) {
        long double s = 0.0L;
        for (int u = 0; u < m; ++u) {
          double v = cond[ctx * static_cast<std::size_t>(m) + static_cast<std::size_t>(u)];
          if (!(v >= 0.0)) throw std::invalid_argument("AuxChain: negative conditional probability");
          s += v;
        }
        if (std::fabs(static_cast<double>(s) - 1.0) > 1e-9) throw std::invalid_argument("AuxChain: conditional row does not sum to 1");
      }
    }
    if (recon1.size() != static_cast<std::size_t>(x1_size) * u_cells() || recon2.size() != static_cast<std::size_t>(x2_size) * u_cells())
      throw std::invalid_argument("AuxChain: reconstruction map size mismatch");
  }
};

/// A point of the interactive rate-distortion region with its witness chain.
struct RegionPoint {
  double rho1 = 0.0, rho2 = 0.0;
  double d1 = 0.0, d2 = 0.0;
  std::vector<double> round_rates;  // per-round conditional MI, k = 1..q
  AuxChain witness;
  std::vector<double> sweep_objectives;  // optimizer trace; empty for plain evaluation
  int restarts_used = 0;
};

namespace detail {

// Joint law over (x1, x2, packed u); tiny dense array.
struct ChainLaw {
  std::vector<double> mass;
  std::size_t u_cells = 1;

  double& at(int x1, int x2, std::size_t ui, int x2_size) { return mass[(static_cast<std::size_t>(x1) * x2_size + static_cast<std::size_t>(x2)) * u_cells + ui]; }
  double at(int x1, int x2, std::size_t ui, int x2_size) const { return mass[(static_cast<std::size_t>(x1) * x2_size + static_cast<std::size_t>(x2)) * u_cells + ui]; }
};

inline ChainLaw chain_joint(const AuxChain& c, const JointSource& s) {
  ChainLaw law;
  law.u_cells = c.u_cells();
  law.mass.assign(static_cast<std::size_t>(c.x1_size) * static_cast<std::size_t>(c.x2_size) * law.u_cells, 0.0);
  std::vector<int> u(static_cast<std::size_t>(c.q));
  std::vector<int> urad(c.aux_sizes.begin(), c.aux_sizes.end());
  for (int x1 = 0; x1 < c.x1_size; ++x1)
    for (int x2 = 0; x2 < c.x2_size; ++x2) {
      double p0 = s.p(x1, x2);
      if (p0 == 0.0) continue;
      for (std::size_t ui = 0; ui < law.u_cells; ++ui) {
        unpack_digits(ui, urad, u);
        double p = p0;
        for (int k = 1; k <= c.q && p > 0.0; ++k) {
          std::size_t ctx = c.context_index(k, (k % 2 == 1) ? x1 : x2, u);
          p *= c.w(k, ctx, u[static_cast<std::size_t>(k - 1)]);
        }
        if (p > 0.0) law.at(x1, x2, ui, c.x2_size) = p;
      }
    }
  return law;
}

}  // namespace detail

/// Exact rates, distortions and per-round conditional MI of a witness chain.
inline RegionPoint evaluate(const AuxChain& chain, const JointSource& source, const DistortionMeasure& d1, const DistortionMeasure& d2) {
  chain.validate();
  if (chain.x1_size != source.alphabet1() || chain.x2_size != source.alphabet2())
    throw std::invalid_argument("evaluate: chain alphabets do not match the source");
  if (d1.source_size() != chain.x1_size || d1.recon_size() != chain.xh1_size || d2.source_size() != chain.x2_size || d2.recon_size() != chain.xh2_size)
    throw std::invalid_argument("evaluate: distortion alphabets do not match the chain");

  std::vector<Variable> vars = {{"X1", chain.x1_size}, {"X2", chain.x2_size}};
  for (int k = 1; k <= chain.q; ++k) vars.push_back({"U" + std::to_string(k), chain.aux_sizes[static_cast<std::size_t>(k - 1)]});
  detail::ChainLaw law = detail::chain_joint(chain, source);
  Pmf joint(vars, law.mass);

  RegionPoint pt;
  pt.witness = chain;
  std::vector<std::string> past;
  for (int k = 1; k <= chain.q; ++k) {
    const std::string uk = "U" + std::to_string(k);
    std::vector<std::string> given = past;
    given.push_back((k % 2 == 1) ? "X2" : "X1");
    double rate = std::max(0.0, joint.mutual_information({{(k % 2 == 1) ? "X1" : "X2"}, {uk}, given}));
    pt.round_rates.push_back(rate);
    ((k % 2 == 1) ? pt.rho1 : pt.rho2) += rate;
    past.push_back(uk);
  }

  long double e1 = 0.0L, e2 = 0.0L;
  for (int x1 = 0; x1 < chain.x1_size; ++x1)
    for (int x2 = 0; x2 < chain.x2_size; ++x2)
      for (std::size_t ui = 0; ui < law.u_cells; ++ui) {
        double p = law.at(x1, x2, ui, chain.x2_size);
        if (p == 0.0) continue;
        e1 += static_cast<long double>(p) * d1(x1, chain.recon2[static_cast<std::size_t>(x2) * law.u_cells + ui]);
        e2 += static_cast<long double>(p) * d2(x2, chain.recon1[static_cast<std::size_t>(x1) * law.u_cells + ui]);
      }
  pt.d1 = static_cast<double>(e1);
  pt.d2 = static_cast<double>(e2);
  return pt;
}

// ---------------------------------------------------------------------------
// Distortion landmarks.
// ---------------------------------------------------------------------------

/// Unlimited-rate floor: the other user learns the letter exactly.
inline double min_achievable_d1(const JointSource& s, const DistortionMeasure& d1) {
  std::vector<double> m = s.marginal1();
  long double total = 0.0L;
  for (int x = 0; x < s.alphabet1(); ++x) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < d1.recon_size(); ++r) best = std::min(best, d1(x, r));
    total += static_cast<long double>(m[static_cast<std::size_t>(x)]) * best;
  }
  return static_cast<double>(total);
}

inline double min_achievable_d2(const JointSource& s, const DistortionMeasure& d2) {
  std::vector<double> m = s.marginal2();
  long double total = 0.0L;
  for (int x = 0; x < s.alphabet2(); ++x) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < d2.recon_size(); ++r) best = std::min(best, d2(x, r));
    total += static_cast<long double>(m[static_cast<std::size_t>(x)]) * best;
  }
  return static_cast<double>(total);
}

/// Zero-rate ceiling: best reconstruction of X1 from the X2 letter alone.
inline double zero_rate_d1(const JointSource& s, const DistortionMeasure& d1) {
  long double total = 0.0L;
  for (int x2 = 0; x2 < s.alphabet2(); ++x2) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < d1.recon_size(); ++r) {
      long double e = 0.0L;
      for (int x1 = 0; x1 < s.alphabet1(); ++x1) e += static_cast<long double>(s.p(x1, x2)) * d1(x1, r);
      best = std::min(best, static_cast<double>(e));
    }
    total += best;
  }
  return static_cast<double>(total);
}

inline double zero_rate_d2(const JointSource& s, const DistortionMeasure& d2) {
  long double total = 0.0L;
  for (int x1 = 0; x1 < s.alphabet1(); ++x1) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < d2.recon_size(); ++r) {
      long double e = 0.0L;
      for (int x2 = 0; x2 < s.alphabet2(); ++x2) e += static_cast<long double>(s.p(x1, x2)) * d2(x2, r);
      best = std::min(best, static_cast<double>(e));
    }
    total += best;
  }
  return static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Chain construction helpers.
// ---------------------------------------------------------------------------

namespace detail {

inline void best_response_recons(AuxChain& chain, const JointSource& src, const DistortionMeasure& d1m, const DistortionMeasure& d2m) {
  ChainLaw law = chain_joint(chain, src);
  chain.recon1.assign(static_cast<std::size_t>(chain.x1_size) * law.u_cells, 0);
  chain.recon2.assign(static_cast<std::size_t>(chain.x2_size) * law.u_cells, 0);
  for (int x2 = 0; x2 < chain.x2_size; ++x2)
    for (std::size_t ui = 0; ui < law.u_cells; ++ui) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int r = 0; r < chain.xh1_size; ++r) {
        long double e = 0.0L;
        for (int x1 = 0; x1 < chain.x1_size; ++x1) e += static_cast<long double>(law.at(x1, x2, ui, chain.x2_size)) * d1m(x1, r);
        if (static_cast<double>(e) < best - 1e-15) {
          best = static_cast<double>(e);
          arg = r;
        }
      }
      chain.recon2[static_cast<std::size_t>(x2) * law.u_cells + ui] = arg;
    }
  for (int x1 = 0; x1 < chain.x1_size; ++x1)
    for (std::size_t ui = 0; ui < law.u_cells; ++ui) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int r = 0; r < chain.xh2_size; ++r) {
        long double e = 0.0L;
        for (int x2 = 0; x2 < chain.x2_size; ++x2) e += static_cast<long double>(law.at(x1, x2, ui, chain.x2_size)) * d2m(x2, r);
        if (static_cast<double>(e) < best - 1e-15) {
          best = static_cast<double>(e);
          arg = r;
        }
      }
      chain.recon1[static_cast<std::size_t>(x1) * law.u_cells + ui] = arg;
    }
}

}  // namespace detail

/// Zero-rate chain: every auxiliary alphabet is a single letter, so the only
/// information either side has about the other is its own source letter.
inline AuxChain constant_chain(const JointSource& src, const DistortionMeasure& d1m, const DistortionMeasure& d2m, int q) {
  AuxChain chain;
  chain.q = q;
  chain.x1_size = src.alphabet1();
  chain.x2_size = src.alphabet2();
  chain.xh1_size = d1m.recon_size();
  chain.xh2_size = d2m.recon_size();
  chain.aux_sizes.assign(static_cast<std::size_t>(q), 1);
  for (int k = 1; k <= q; ++k) chain.conditionals.push_back(std::vector<double>(chain.context_cells(k), 1.0));
  detail::best_response_recons(chain, src, d1m, d2m);
  return chain;
}

/// Random chain with Dirichlet(1) conditional rows and best-response recons.
inline AuxChain random_chain(const JointSource& src, const DistortionMeasure& d1m, const DistortionMeasure& d2m, int q,
                             const std::vector<int>& aux_sizes, Rng& rng) {
  AuxChain chain;
  chain.q = q;
  chain.x1_size = src.alphabet1();
  chain.x2_size = src.alphabet2();
  chain.xh1_size = d1m.recon_size();
  chain.xh2_size = d2m.recon_size();
  chain.aux_sizes = aux_sizes;
  for (int k = 1; k <= q; ++k) {
    const int m = aux_sizes[static_cast<std::size_t>(k - 1)];
    std::vector<double> cond(chain.context_cells(k) * static_cast<std::size_t>(m));
    for (std::size_t ctx = 0; ctx < chain.context_cells(k); ++ctx) {
      long double s = 0.0L;
      for (int u = 0; u < m; ++u) {
        double v = -std::log(1.0 - rng.next_unit());
        cond[ctx * static_cast<std::size_t>(m) + static_cast<std::size_t>(u)] = v;
        s += v;
      }
      for (int u = 0; u < m; ++u) cond[ctx * static_cast<std::size_t>(m) + static_cast<std::size_t>(u)] = static_cast<double>(cond[ctx * static_cast<std::size_t>(m) + static_cast<std::size_t>(u)] / s);
    }
    chain.conditionals.push_back(std::move(cond));
  }
  detail::best_response_recons(chain, src, d1m, d2m);
  return chain;
}

/// Extends a chain by two extra single-letter rounds: rates, distortions and
/// the induced law are unchanged. Used to warm-start deeper optimizations.
inline AuxChain extend_chain_two_rounds(const AuxChain& base, int aux_q1, int aux_q2, const JointSource& src, const DistortionMeasure& d1m,
                                        const DistortionMeasure& d2m) {
  AuxChain chain = base;
  chain.q = base.q + 2;
  chain.aux_sizes.push_back(aux_q1);
  chain.aux_sizes.push_back(aux_q2);
  for (int extra = 0; extra < 2; ++extra) {
    const int k = base.q + 1 + extra;
    const int m = chain.aux_sizes[static_cast<std::size_t>(k - 1)];
    std::vector<double> cond(chain.context_cells(k) * static_cast<std::size_t>(m), 0.0);
    for (std::size_t ctx = 0; ctx < chain.context_cells(k); ++ctx) cond[ctx * static_cast<std::size_t>(m)] = 1.0;  // point mass on letter 0
    chain.conditionals.push_back(std::move(cond));
  }
  detail::best_response_recons(chain, src, d1m, d2m);
  return chain;
}

// ---------------------------------------------------------------------------
// Alternating-minimization optimizer.
// ---------------------------------------------------------------------------

struct OptimizeOptions {
  int max_sweeps = 250;
  double sweep_tol = 1e-12;
  int lambda_iters = 48;
  double lambda_target_gap = 1e-5;  // admissible D shortfall below the target
  double feas_slack = 1e-6;
  bool nested_init = true;
};

namespace detail {

struct Objective {
  double j = 0.0;
  double rho1 = 0.0, rho2 = 0.0, d1 = 0.0, d2 = 0.0;
};

class ChainOptimizer {
 public:
  ChainOptimizer(const JointSource& src, const DistortionMeasure& d1m, const DistortionMeasure& d2m, AuxChain chain)
      : src_(src), d1m_(d1m), d2m_(d2m), chain_(std::move(chain)) {}

  AuxChain& chain() { return chain_; }
  const AuxChain& chain() const { return chain_; }

  void set_multipliers(double l1, double l2) {
    l1_ = l1;
    l2_ = l2;
  }

  Objective objective() const {
    ChainLaw law = chain_joint(chain_, src_);
    auto post = posteriors(law);
    std::vector<int> urad(chain_.aux_sizes.begin(), chain_.aux_sizes.end());
    std::vector<int> u(static_cast<std::size_t>(chain_.q));
    Objective obj;
    long double r1 = 0.0L, r2 = 0.0L, e1 = 0.0L, e2 = 0.0L;
    for (int x1 = 0; x1 < chain_.x1_size; ++x1)
      for (int x2 = 0; x2 < chain_.x2_size; ++x2)
        for (std::size_t ui = 0; ui < law.u_cells; ++ui) {
          double p = law.at(x1, x2, ui, chain_.x2_size);
          if (p == 0.0) continue;
          unpack_digits(ui, urad, u);
          for (int k = 1; k <= chain_.q; ++k) {
            const bool odd = (k % 2 == 1);
            std::size_t ctx = chain_.context_index(k, odd ? x1 : x2, u);
            std::size_t octx = chain_.context_index(k, odd ? x2 : x1, u);  // same digit layout, other side letter
            double wk = chain_.w(k, ctx, u[static_cast<std::size_t>(k - 1)]);
            double rk = post[static_cast<std::size_t>(k - 1)][octx * static_cast<std::size_t>(chain_.aux_sizes[static_cast<std::size_t>(k - 1)]) +
                                                              static_cast<std::size_t>(u[static_cast<std::size_t>(k - 1)])];
            if (wk > 0.0 && rk > 0.0) (odd ? r1 : r2) += static_cast<long double>(p) * std::log2(wk / rk);
          }
          e1 += static_cast<long double>(p) * d1m_(x1, chain_.recon2[static_cast<std::size_t>(x2) * law.u_cells + ui]);
          e2 += static_cast<long double>(p) * d2m_(x2, chain_.recon1[static_cast<std::size_t>(x1) * law.u_cells + ui]);
        }
    obj.rho1 = std::max(0.0, static_cast<double>(r1));
    obj.rho2 = std::max(0.0, static_cast<double>(r2));
    obj.d1 = static_cast<double>(e1);
    obj.d2 = static_cast<double>(e2);
    obj.j = obj.rho1 + obj.rho2 + l1_ * obj.d1 + l2_ * obj.d2;
    return obj;
  }

  /// Sweeps until the Lagrangian stalls; the recorded per-sweep objective is
  /// nonincreasing because every update is accepted only if it does not
  /// increase it.
  std::vector<double> converge(int max_sweeps, double tol) {
    std::vector<double> trace;
    update_recons();
    double prev = objective().j;
    trace.push_back(prev);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      for (int k = 1; k <= chain_.q; ++k) update_round(k);
      update_recons();
      double cur = objective().j;
      trace.push_back(cur);
      if (prev - cur < tol) break;
      prev = cur;
    }
    return trace;
  }

  void update_recons() { best_response_recons(chain_, src_, d1m_, d2m_); }

 private:
  // p(u_k | other side letter, u^{k-1}); same context layout as the sender's,
  // just keyed by the opposite source letter.
  std::vector<std::vector<double>> posteriors(const ChainLaw& law) const {
    std::vector<std::vector<double>> post(static_cast<std::size_t>(chain_.q));
    std::vector<int> urad(chain_.aux_sizes.begin(), chain_.aux_sizes.end());
    std::vector<int> u(static_cast<std::size_t>(chain_.q));
    for (int k = 1; k <= chain_.q; ++k) {
      const bool odd = (k % 2 == 1);
      const int m = chain_.aux_sizes[static_cast<std::size_t>(k - 1)];
      const int other_size = odd ? chain_.x2_size : chain_.x1_size;
      std::size_t cells = static_cast<std::size_t>(other_size);
      for (int j = 0; j < k - 1; ++j) cells *= static_cast<std::size_t>(chain_.aux_sizes[static_cast<std::size_t>(j)]);
      std::vector<double> num(cells * static_cast<std::size_t>(m), 0.0), den(cells, 0.0);
      for (int x1 = 0; x1 < chain_.x1_size; ++x1)
        for (int x2 = 0; x2 < chain_.x2_size; ++x2)
          for (std::size_t ui = 0; ui < law.u_cells; ++ui) {
            double p = law.at(x1, x2, ui, chain_.x2_size);
            if (p == 0.0) continue;
            unpack_digits(ui, urad, u);
            std::size_t octx = chain_.context_index(k, odd ? x2 : x1, u);
            num[octx * static_cast<std::size_t>(m) + static_cast<std::size_t>(u[static_cast<std::size_t>(k - 1)])] += p;
            den[octx] += p;
          }
      for (std::size_t c = 0; c < cells; ++c)
        if (den[c] > 0.0)
          for (int uu = 0; uu < m; ++uu) num[c * static_cast<std::size_t>(m) + static_cast<std::size_t>(uu)] /= den[c];
      post[static_cast<std::size_t>(k - 1)] = std::move(num);
    }
    return post;
  }

  // E[l1 d1 + l2 d2 + downstream rate terms | x1, x2, u^k] with the current
  // tail conditionals; u[0..k-1] fixed on entry.
  double tail_cost(int k, int x1, int x2, std::vector<int>& u, const std::vector<std::vector<double>>& post) const {
    if (k == chain_.q) {
      std::size_t ui = chain_.pack_u(u);
      return l1_ * d1m_(x1, chain_.recon2[static_cast<std::size_t>(x2) * chain_.u_cells() + ui]) +
             l2_ * d2m_(x2, chain_.recon1[static_cast<std::size_t>(x1) * chain_.u_cells() + ui]);
    }
    const int kk = k + 1;
    const bool odd = (kk % 2 == 1);
    const int m = chain_.aux_sizes[static_cast<std::size_t>(kk - 1)];
    std::size_t ctx = chain_.context_index(kk, odd ? x1 : x2, u);
    std::size_t octx = chain_.context_index(kk, odd ? x2 : x1, u);
    double acc = 0.0;
    for (int uu = 0; uu < m; ++uu) {
      double wk = chain_.w(kk, ctx, uu);
      if (wk == 0.0) continue;
      double rk = post[static_cast<std::size_t>(kk - 1)][octx * static_cast<std::size_t>(m) + static_cast<std::size_t>(uu)];
      double rate_term = (rk > 0.0) ? std::log2(wk / rk) : 0.0;
      u[static_cast<std::size_t>(kk - 1)] = uu;
      acc += wk * (rate_term + tail_cost(kk, x1, x2, u, post));
    }
    return acc;
  }

  void update_round(int k) {
    const bool odd = (k % 2 == 1);
    const int m = chain_.aux_sizes[static_cast<std::size_t>(k - 1)];
    if (m == 1) return;
    ChainLaw law = chain_joint(chain_, src_);
    auto post = posteriors(law);

    // prefix law p(x1, x2, u^{k-1})
    std::vector<int> urad(chain_.aux_sizes.begin(), chain_.aux_sizes.end());
    std::size_t prefix_cells = 1;
    for (int j = 0; j < k - 1; ++j) prefix_cells *= static_cast<std::size_t>(chain_.aux_sizes[static_cast<std::size_t>(j)]);
    std::vector<int> prad(chain_.aux_sizes.begin(), chain_.aux_sizes.begin() + (k - 1));
    std::vector<double> prefix(static_cast<std::size_t>(chain_.x1_size) * chain_.x2_size * prefix_cells, 0.0);
    std::vector<int> u(static_cast<std::size_t>(chain_.q), 0);
    for (int x1 = 0; x1 < chain_.x1_size; ++x1)
      for (int x2 = 0; x2 < chain_.x2_size; ++x2)
        for (std::size_t pi = 0; pi < prefix_cells; ++pi) {
          if (k > 1) unpack_digits(pi, prad, std::span<int>(u.data(), static_cast<std::size_t>(k - 1)));
          double p = src_.p(x1, x2);
          for (int j = 1; j < k && p > 0.0; ++j) p *= chain_.w(j, chain_.context_index(j, (j % 2 == 1) ? x1 : x2, u), u[static_cast<std::size_t>(j - 1)]);
          prefix[(static_cast<std::size_t>(x1) * chain_.x2_size + static_cast<std::size_t>(x2)) * prefix_cells + pi] = p;
        }

    // candidate rows: softmax of the expected score over the other side
    const int side_size = odd ? chain_.x1_size : chain_.x2_size;
    const int other_size = odd ? chain_.x2_size : chain_.x1_size;
    std::vector<double> cand = chain_.conditionals[static_cast<std::size_t>(k - 1)];
    for (int s = 0; s < side_size; ++s)
      for (std::size_t pi = 0; pi < prefix_cells; ++pi) {
        if (k > 1) unpack_digits(pi, prad, std::span<int>(u.data(), static_cast<std::size_t>(k - 1)));
        std::vector<double> pother(static_cast<std::size_t>(other_size));
        double tot = 0.0;
        for (int o = 0; o < other_size; ++o) {
          const int x1 = odd ? s : o;
          const int x2 = odd ? o : s;
          pother[static_cast<std::size_t>(o)] = prefix[(static_cast<std::size_t>(x1) * chain_.x2_size + static_cast<std::size_t>(x2)) * prefix_cells + pi];
          tot += pother[static_cast<std::size_t>(o)];
        }
        std::size_t ctx = static_cast<std::size_t>(s) * prefix_cells + pi;
        if (tot <= 0.0) continue;  // unreachable context: keep the old row
        for (auto& v : pother) v /= tot;
        std::vector<double> score(static_cast<std::size_t>(m), 0.0);
        for (int uu = 0; uu < m; ++uu) {
          double sc = 0.0;
          bool reachable = false;
          u[static_cast<std::size_t>(k - 1)] = uu;
          for (int o = 0; o < other_size; ++o) {
            double po = pother[static_cast<std::size_t>(o)];
            if (po == 0.0) continue;
            const int x1 = odd ? s : o;
            const int x2 = odd ? o : s;
            std::size_t octx = static_cast<std::size_t>(o) * prefix_cells + pi;
            double rk = post[static_cast<std::size_t>(k - 1)][octx * static_cast<std::size_t>(m) + static_cast<std::size_t>(uu)];
            if (rk > 0.0) {
              reachable = true;
              sc += po * (std::log2(rk) - tail_cost(k, x1, x2, u, post));
            } else {
              sc += po * (-1e6);  // letter currently unreachable from the other side
            }
          }
          score[static_cast<std::size_t>(uu)] = reachable ? sc : -1e9;
        }
        double mx = *std::max_element(score.begin(), score.end());
        long double z = 0.0L;
        for (int uu = 0; uu < m; ++uu) z += std::exp2(score[static_cast<std::size_t>(uu)] - mx);
        for (int uu = 0; uu < m; ++uu)
          cand[ctx * static_cast<std::size_t>(m) + static_cast<std::size_t>(uu)] = static_cast<double>(std::exp2(score[static_cast<std::size_t>(uu)] - mx) / z);
      }

    // damped acceptance against the true Lagrangian
    const double j_old = objective().j;
    std::vector<double> old_rows = chain_.conditionals[static_cast<std::size_t>(k - 1)];
    double t = 1.0;
    for (int step = 0; step < 12; ++step, t *= 0.5) {
      auto& rows = chain_.conditionals[static_cast<std::size_t>(k - 1)];
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = (1.0 - t) * old_rows[i] + t * cand[i];
      if (objective().j <= j_old) return;
    }
    chain_.conditionals[static_cast<std::size_t>(k - 1)] = std::move(old_rows);
  }

  const JointSource& src_;
  const DistortionMeasure& d1m_;
  const DistortionMeasure& d2m_;
  AuxChain chain_;
  double l1_ = 0.0, l2_ = 0.0;
};

}  // namespace detail

/// Best found weighted-sum-rate point meeting both distortion targets.
/// Alternating minimization over one round's conditional at a time with a
/// distortion Lagrangian, multipliers bisected per coordinate to land the
/// achieved distortions just under the targets; multi-start. This optimizer
/// is a heuristic: returned points are exact evaluations of their witness
/// (hence achievable), but global optimality is not certified.
inline RegionPoint optimize_point(const JointSource& source, const DistortionMeasure& d1m, const DistortionMeasure& d2m, double D1, double D2,
                                  int q, std::vector<int> aux_sizes, int restarts, Rng& rng, const OptimizeOptions& opts = {}) {
  if (q < 2 || q % 2 != 0) throw std::invalid_argument("optimize_point: q must be even and >= 2");
  if (static_cast<int>(aux_sizes.size()) == 0) aux_sizes.assign(static_cast<std::size_t>(q), std::max(source.alphabet1(), source.alphabet2()) + 2);
  if (static_cast<int>(aux_sizes.size()) != q) throw std::invalid_argument("optimize_point: need one auxiliary size per round");
  if (restarts < 1) throw std::invalid_argument("optimize_point: restarts must be >= 1");

  const double d1_min = min_achievable_d1(source, d1m);
  const double d2_min = min_achievable_d2(source, d2m);
  if (D1 < d1_min - 1e-12 || D2 < d2_min - 1e-12) {
    std::ostringstream os;
    os << "optimize_point: targets (" << D1 << ", " << D2 << ") are infeasible; minimal achievable distortions are (" << d1_min << ", " << d2_min
       << ")";
    throw std::invalid_argument(os.str());
  }

  // zero-rate corner
  if (D1 >= zero_rate_d1(source, d1m) - 1e-12 && D2 >= zero_rate_d2(source, d2m) - 1e-12) {
    AuxChain chain = constant_chain(source, d1m, d2m, q);
    RegionPoint pt = evaluate(chain, source, d1m, d2m);
    pt.restarts_used = 0;
    return pt;
  }

  auto solve_from = [&](AuxChain init, std::vector<double>* trace_out) -> RegionPoint {
    detail::ChainOptimizer opt(source, d1m, d2m, std::move(init));
    double l1 = 0.0, l2 = 0.0;
    auto converge = [&]() -> detail::Objective {
      opt.set_multipliers(l1, l2);
      std::vector<double> trace = opt.converge(opts.max_sweeps, opts.sweep_tol);
      if (trace_out) *trace_out = trace;
      return opt.objective();
    };
    detail::Objective cur = converge();

    for (int pass = 0; pass < 3; ++pass) {
      for (int coord = 0; coord < 2; ++coord) {
        const double target = (coord == 0) ? D1 : D2;
        auto achieved = [&](const detail::Objective& o) { return (coord == 0) ? o.d1 : o.d2; };
        double& l = (coord == 0) ? l1 : l2;
        if (achieved(cur) <= target) {
          // maybe the multiplier is needlessly high: try relaxing to zero
          double saved = l;
          l = 0.0;
          detail::Objective relaxed = converge();
          if (achieved(relaxed) <= target) {
            cur = relaxed;
            continue;
          }
          l = saved;
          cur = converge();
        }
        if (achieved(cur) <= target) continue;
        double lo = l, hi = std::max(1.0, 2.0 * l);
        detail::Objective obj_hi = cur;
        for (int grow = 0; grow < 40; ++grow) {
          l = hi;
          obj_hi = converge();
          if (achieved(obj_hi) <= target) break;
          lo = hi;
          hi *= 4.0;
          if (hi > 1e9) break;
        }
        cur = obj_hi;
        if (achieved(cur) > target) continue;  // cleanup below has one more chance
        for (int it = 0; it < opts.lambda_iters; ++it) {
          if (target - achieved(cur) <= opts.lambda_target_gap) break;
          double mid = 0.5 * (lo + hi);
          l = mid;
          detail::Objective obj_mid = converge();
          if (achieved(obj_mid) <= target) {
            hi = mid;
            cur = obj_mid;
          } else {
            lo = mid;
          }
          if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
        }
        l = hi;
        cur = converge();
      }
    }
    // feasibility cleanup
    for (int tries = 0; tries < 8 && (cur.d1 > D1 + opts.feas_slack || cur.d2 > D2 + opts.feas_slack); ++tries) {
      if (cur.d1 > D1 + opts.feas_slack) l1 = std::max(1.0, l1 * 2.0);
      if (cur.d2 > D2 + opts.feas_slack) l2 = std::max(1.0, l2 * 2.0);
      cur = converge();
    }
    RegionPoint pt = evaluate(opt.chain(), source, d1m, d2m);
    return pt;
  };

  RegionPoint best;
  bool have_best = false;
  int used = 0;
  for (int r = 0; r < restarts; ++r) {
    AuxChain init;
    if (r == 0 && q > 2 && opts.nested_init) {
      OptimizeOptions sub = opts;
      sub.nested_init = true;
      Rng sub_rng = rng.split();
      std::vector<int> sub_aux(aux_sizes.begin(), aux_sizes.end() - 2);
      RegionPoint nested = optimize_point(source, d1m, d2m, D1, D2, q - 2, sub_aux, std::max(1, restarts / 2), sub_rng, sub);
      init = extend_chain_two_rounds(nested.witness, aux_sizes[static_cast<std::size_t>(q - 2)], aux_sizes[static_cast<std::size_t>(q - 1)], source,
                                     d1m, d2m);
    } else {
      Rng sub = rng.split();
      init = random_chain(source, d1m, d2m, q, aux_sizes, sub);
    }
    std::vector<double> trace;
    RegionPoint pt = solve_from(std::move(init), &trace);
    ++used;
    const bool feasible = pt.d1 <= D1 + opts.feas_slack && pt.d2 <= D2 + opts.feas_slack;
    if (!feasible) continue;
    if (!have_best || pt.rho1 + pt.rho2 < best.rho1 + best.rho2 - 1e-12) {
      best = pt;
      best.sweep_objectives = trace;
      have_best = true;
    }
  }
  if (!have_best) throw std::runtime_error("optimize_point: no feasible chain found; targets may be too tight for the configured auxiliaries");
  best.restarts_used = used;
  return best;
}

/// Independent near-oracle for binary sources at q = 2: exhaustive 1/64-grid
/// search over the round-1 conditional with |U1| in {2, 3}, exact
/// best-response reconstructions, and a zero-rate round 2 (the reply budget
/// must already be satisfiable from the user-1 letter and U1). Deterministic.
inline RegionPoint exhaustive_q2(const JointSource& source, const DistortionMeasure& d1m, const DistortionMeasure& d2m, double D1, double D2,
                                 int grid = 64) {
  if (source.alphabet1() != 2) throw std::invalid_argument("exhaustive_q2: supported for binary first sources only");

  auto try_rows = [&](const std::vector<double>& row0, const std::vector<double>& row1, int m, double& best_rho, AuxChain& best_chain,
                      bool& found) {
    // joint t(x1, x2, u) = p(x1,x2) row_{x1}(u)
    const int nx2 = source.alphabet2();
    // distortion 1 with best recon from (x2, u)
    double d1_ach = 0.0;
    for (int x2 = 0; x2 < nx2; ++x2)
      for (int u = 0; u < m; ++u) {
        double w0 = source.p(0, x2) * row0[static_cast<std::size_t>(u)];
        double w1 = source.p(1, x2) * row1[static_cast<std::size_t>(u)];
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < d1m.recon_size(); ++r) best = std::min(best, w0 * d1m(0, r) + w1 * d1m(1, r));
        d1_ach += best;
      }
    if (d1_ach > D1 + 1e-12) return;
    // distortion 2 with best recon from (x1, u): zero-rate reply
    double d2_ach = 0.0;
    for (int x1 = 0; x1 < 2; ++x1) {
      const auto& row = (x1 == 0) ? row0 : row1;
      for (int u = 0; u < m; ++u) {
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < d2m.recon_size(); ++r) {
          double e = 0.0;
          for (int x2 = 0; x2 < nx2; ++x2) e += source.p(x1, x2) * row[static_cast<std::size_t>(u)] * d2m(x2, r);
          best = std::min(best, e);
        }
        d2_ach += best;
      }
    }
    if (d2_ach > D2 + 1e-12) return;
    // rho1 = I(X1; U | X2) = H(U|X2) - H(U|X1,X2)
    double h_u_x2 = 0.0, h_u_x12 = 0.0;
    for (int x2 = 0; x2 < nx2; ++x2) {
      double px2 = source.p(0, x2) + source.p(1, x2);
      if (px2 == 0.0) continue;
      for (int u = 0; u < m; ++u) {
        double pu = source.p(0, x2) * row0[static_cast<std::size_t>(u)] + source.p(1, x2) * row1[static_cast<std::size_t>(u)];
        if (pu > 0.0) h_u_x2 -= pu * std::log2(pu / px2);
      }
    }
    for (int x1 = 0; x1 < 2; ++x1) {
      const auto& row = (x1 == 0) ? row0 : row1;
      for (int x2 = 0; x2 < nx2; ++x2) {
        double pj = source.p(x1, x2);
        if (pj == 0.0) continue;
        for (int u = 0; u < m; ++u)
          if (row[static_cast<std::size_t>(u)] > 0.0) h_u_x12 -= pj * row[static_cast<std::size_t>(u)] * std::log2(row[static_cast<std::size_t>(u)]);
      }
    }
    double rho1 = std::max(0.0, h_u_x2 - h_u_x12);
    if (found && rho1 >= best_rho) return;
    AuxChain chain;
    chain.q = 2;
    chain.x1_size = 2;
    chain.x2_size = nx2;
    chain.xh1_size = d1m.recon_size();
    chain.xh2_size = d2m.recon_size();
    chain.aux_sizes = {m, 1};
    std::vector<double> cond1(2 * static_cast<std::size_t>(m));
    for (int u = 0; u < m; ++u) {
      cond1[static_cast<std::size_t>(u)] = row0[static_cast<std::size_t>(u)];
      cond1[static_cast<std::size_t>(m + u)] = row1[static_cast<std::size_t>(u)];
    }
    chain.conditionals = {cond1, std::vector<double>(chain.context_cells(2), 1.0)};
    detail::best_response_recons(chain, source, d1m, d2m);
    best_chain = chain;
    best_rho = rho1;
    found = true;
  };

  double best_rho = std::numeric_limits<double>::infinity();
  AuxChain best_chain;
  bool found = false;

  // |U| = 2
  for (int a = 0; a <= grid; ++a)
    for (int b = 0; b <= grid; ++b) {
      std::vector<double> row0 = {static_cast<double>(a) / grid, 1.0 - static_cast<double>(a) / grid};
      std::vector<double> row1 = {static_cast<double>(b) / grid, 1.0 - static_cast<double>(b) / grid};
      try_rows(row0, row1, 2, best_rho, best_chain, found);
    }
  // |U| = 3
  for (int a0 = 0; a0 <= grid; ++a0)
    for (int b0 = 0; a0 + b0 <= grid; ++b0) {
      std::vector<double> row0 = {static_cast<double>(a0) / grid, static_cast<double>(b0) / grid, 1.0 - static_cast<double>(a0 + b0) / grid};
      for (int a1 = 0; a1 <= grid; ++a1)
        for (int b1 = 0; a1 + b1 <= grid; ++b1) {
          std::vector<double> row1 = {static_cast<double>(a1) / grid, static_cast<double>(b1) / grid, 1.0 - static_cast<double>(a1 + b1) / grid};
          try_rows(row0, row1, 3, best_rho, best_chain, found);
        }
    }

  if (!found)
    throw std::invalid_argument("exhaustive_q2: no feasible grid point; the reply-direction target may need a nondegenerate second round");
  return evaluate(best_chain, source, d1m, d2m);
}

}  // namespace twoway
