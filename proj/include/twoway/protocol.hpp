#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "twoway/channel.hpp"
#include "twoway/pmf.hpp"
#include "twoway/rng.hpp"
#include "twoway/source.hpp"

namespace twoway {

/// Alphabet sizes shared by a code, its source pair, and its channels.
struct CodeDims {
  int n = 1;        // source block length
  int x1 = 2, x2 = 2;
  int i1 = 2, o1 = 2;  // channel 1 input/output
  int i2 = 2, o2 = 2;  // channel 2 input/output
  int xh1 = 2, xh2 = 2;

  void validate() const {
    for (int v : {n, x1, x2, i1, o1, i2, o2, xh1, xh2})
      if (v < 1) throw std::invalid_argument("CodeDims: all sizes must be >= 1");
  }
};

/// Per-slot direction flags. Every slot must use at least one direction.
struct Schedule {
  std::vector<std::uint8_t> c1, c2;

  int horizon() const { return static_cast<int>(c1.size()); }

  void validate() const {
    if (c1.size() != c2.size() || c1.empty()) throw std::invalid_argument("Schedule: c1 and c2 must be nonempty and equal length");
    for (std::size_t i = 0; i < c1.size(); ++i) {
      if (c1[i] > 1 || c2[i] > 1) throw std::invalid_argument("Schedule: flags must be 0 or 1");
      if (c1[i] + c2[i] < 1) throw std::invalid_argument("Schedule: at least one direction must be active per slot");
    }
  }

  bool one_direction_per_slot() const {
    for (std::size_t i = 0; i < c1.size(); ++i)
      if (c1[i] + c2[i] != 1) return false;
    return true;
  }

  bool boundary_ok() const { return !c1.empty() && c1.front() == 1 && c2.back() == 1; }
};

// ---------------------------------------------------------------------------
// Canonical history layouts.
//
// The history available to a user is the ordered concatenation of its source
// block, its own past channel inputs and its received channel outputs, slot
// by slot (own input before received output within a slot). Encoded as a
// digit vector this layout has the prefix property: the history at slot i is
// a prefix of the history at any later slot and of the terminal (decoder)
// history, so the simulator keeps one growing digit vector per user.
// ---------------------------------------------------------------------------

enum class CoordKind : std::uint8_t { Source, OwnInput, Received };

struct Coord {
  CoordKind kind;
  int idx;  // source position, or slot index

  bool operator<(const Coord& o) const { return std::tie(kind, idx) < std::tie(o.kind, o.idx); }
  bool operator==(const Coord& o) const { return kind == o.kind && idx == o.idx; }
};

inline int coord_radix(const CodeDims& d, int user, const Coord& c) {
  switch (c.kind) {
    case CoordKind::Source: return user == 1 ? d.x1 : d.x2;
    case CoordKind::OwnInput: return user == 1 ? d.i1 : d.i2;
    case CoordKind::Received: return user == 1 ? d.o2 : d.o1;
  }
  throw std::logic_error("coord_radix: bad kind");
}

/// History coordinates of `user` just before it encodes at `slot`
/// (slot == horizon gives the terminal/decoder history).
inline std::vector<Coord> history_coords(const Schedule& s, int user, int slot, int n) {
  std::vector<Coord> coords;
  for (int t = 0; t < n; ++t) coords.push_back({CoordKind::Source, t});
  const auto& own = (user == 1) ? s.c1 : s.c2;
  const auto& other = (user == 1) ? s.c2 : s.c1;
  for (int j = 0; j < slot; ++j) {
    if (own[static_cast<std::size_t>(j)]) coords.push_back({CoordKind::OwnInput, j});
    if (other[static_cast<std::size_t>(j)]) coords.push_back({CoordKind::Received, j});
  }
  return coords;
}

inline std::vector<int> coords_radices(const CodeDims& d, int user, const std::vector<Coord>& coords) {
  std::vector<int> r;
  r.reserve(coords.size());
  for (const auto& c : coords) r.push_back(coord_radix(d, user, c));
  return r;
}

// ---------------------------------------------------------------------------
// Encoders and decoders.
// ---------------------------------------------------------------------------

/// Maps a history digit vector to a channel input symbol.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int eval(std::span<const int> digits) const = 0;
  /// Flat table access for serialization; null for derived (wrapped) encoders.
  virtual const std::vector<int>* table() const { return nullptr; }
};

using EncoderPtr = std::shared_ptr<const Encoder>;

class TableEncoder final : public Encoder {
 public:
  TableEncoder(std::vector<int> radices, std::vector<int> table) : radices_(std::move(radices)), table_(std::move(table)) {
    std::size_t cells = checked_cell_count(radices_, "TableEncoder");
    if (table_.size() != cells) throw std::invalid_argument("TableEncoder: table size does not match history space");
  }

  int eval(std::span<const int> digits) const override {
    return table_[pack_digits(digits.first(radices_.size()), radices_)];
  }

  const std::vector<int>* table() const override { return &table_; }
  const std::vector<int>& radices() const { return radices_; }

 private:
  std::vector<int> radices_;
  std::vector<int> table_;
};

class ConstantEncoder final : public Encoder {
 public:
  explicit ConstantEncoder(int symbol) : symbol_(symbol) {}
  int eval(std::span<const int>) const override { return symbol_; }

 private:
  int symbol_;
};

/// Reads the base encoder's coordinates out of a larger history vector; the
/// mechanism behind all code transformations (the rewrapped encoder consumes
/// exactly the information set of the original one).
class RemapEncoder final : public Encoder {
 public:
  RemapEncoder(EncoderPtr base, std::vector<int> coord_map) : base_(std::move(base)), map_(std::move(coord_map)) {}

  int eval(std::span<const int> digits) const override {
    std::vector<int> gathered(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) gathered[i] = digits[static_cast<std::size_t>(map_[i])];
    return base_->eval(gathered);
  }

 private:
  EncoderPtr base_;
  std::vector<int> map_;
};

/// Maps a terminal history to a reconstruction block (one letter per source
/// position of the code it belongs to).
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual void eval(std::span<const int> digits, std::span<int> out_block) const = 0;
  virtual const std::vector<int>* table() const { return nullptr; }
};

using DecoderPtr = std::shared_ptr<const Decoder>;

class TableDecoder final : public Decoder {
 public:
  TableDecoder(std::vector<int> radices, int block_len, int letter_radix, std::vector<int> table)
      : radices_(std::move(radices)), block_len_(block_len), letter_radix_(letter_radix), table_(std::move(table)) {
    std::size_t cells = checked_cell_count(radices_, "TableDecoder");
    if (table_.size() != cells) throw std::invalid_argument("TableDecoder: table size does not match history space");
  }

  void eval(std::span<const int> digits, std::span<int> out_block) const override {
    std::vector<int> rad(static_cast<std::size_t>(block_len_), letter_radix_);
    unpack_digits(static_cast<std::size_t>(table_[pack_digits(digits.first(radices_.size()), radices_)]), rad, out_block);
  }

  const std::vector<int>* table() const override { return &table_; }
  const std::vector<int>& radices() const { return radices_; }
  int block_len() const { return block_len_; }
  int letter_radix() const { return letter_radix_; }

 private:
  std::vector<int> radices_;
  int block_len_;
  int letter_radix_;
  std::vector<int> table_;
};

class RemapDecoder final : public Decoder {
 public:
  RemapDecoder(DecoderPtr base, std::vector<int> coord_map) : base_(std::move(base)), map_(std::move(coord_map)) {}

  void eval(std::span<const int> digits, std::span<int> out_block) const override {
    std::vector<int> gathered(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) gathered[i] = digits[static_cast<std::size_t>(map_[i])];
    base_->eval(gathered, out_block);
  }

 private:
  DecoderPtr base_;
  std::vector<int> map_;
};

/// Decoder of an H-fold repetition: each copy's base decoder reads only that
/// copy's coordinates and writes that copy's stretch of the output block.
class LiftedDecoder final : public Decoder {
 public:
  LiftedDecoder(DecoderPtr base, int copies, int base_block_len, std::vector<std::vector<int>> copy_maps)
      : base_(std::move(base)), copies_(copies), base_block_len_(base_block_len), maps_(std::move(copy_maps)) {}

  void eval(std::span<const int> digits, std::span<int> out_block) const override {
    for (int h = 0; h < copies_; ++h) {
      const auto& map = maps_[static_cast<std::size_t>(h)];
      std::vector<int> gathered(map.size());
      for (std::size_t i = 0; i < map.size(); ++i) gathered[i] = digits[static_cast<std::size_t>(map[i])];
      base_->eval(gathered, out_block.subspan(static_cast<std::size_t>(h) * base_block_len_, static_cast<std::size_t>(base_block_len_)));
    }
  }

 private:
  DecoderPtr base_;
  int copies_;
  int base_block_len_;
  std::vector<std::vector<int>> maps_;
};

// ---------------------------------------------------------------------------
// Codes.
// ---------------------------------------------------------------------------

/// A general scheduled interactive code: per-slot encoders for each active
/// direction and a terminal reconstruction decoder per user. Decoder 1 lives
/// at user 1 and estimates the block of source 2; decoder 2 conversely.
struct GeneralCode {
  CodeDims dims;
  Schedule sched;
  std::vector<EncoderPtr> enc1, enc2;  // size == horizon; null where inactive
  DecoderPtr dec1, dec2;

  void validate() const {
    dims.validate();
    sched.validate();
    const auto N = static_cast<std::size_t>(sched.horizon());
    if (enc1.size() != N || enc2.size() != N) throw std::invalid_argument("GeneralCode: encoder vectors must match horizon");
    for (std::size_t i = 0; i < N; ++i) {
      if ((enc1[i] != nullptr) != (sched.c1[i] == 1)) throw std::invalid_argument("GeneralCode: encoder1 presence must match schedule flag");
      if ((enc2[i] != nullptr) != (sched.c2[i] == 1)) throw std::invalid_argument("GeneralCode: encoder2 presence must match schedule flag");
    }
    if (!dec1 || !dec2) throw std::invalid_argument("GeneralCode: both decoders are required");
  }
};

/// A staggered code in round form: q alternating rounds (first from user 1,
/// last from user 2), a lookup table per round mapping the sender's history
/// to its whole round block, and terminal decoders.
struct StaggeredCode {
  CodeDims dims;
  std::vector<int> round_lengths;
  std::vector<std::vector<int>> round_tables;  // [k]: history index -> packed input block
  std::vector<int> dec1_table, dec2_table;     // terminal history index -> packed recon block

  int rounds() const { return static_cast<int>(round_lengths.size()); }

  void validate() const {
    dims.validate();
    const int q = rounds();
    if (q < 2 || q % 2 != 0) throw std::invalid_argument("StaggeredCode: round count must be even and >= 2");
    for (int nk : round_lengths)
      if (nk < 1) throw std::invalid_argument("StaggeredCode: round lengths must be >= 1");
    if (static_cast<int>(round_tables.size()) != q) throw std::invalid_argument("StaggeredCode: one table per round required");
  }

  /// Digit radices of the sender history at round k (0-based; even k sends
  /// from user 1). Prefix property as for general codes.
  std::vector<int> round_history_radices(int k) const {
    const bool user1 = (k % 2 == 0);
    std::vector<int> r(static_cast<std::size_t>(dims.n), user1 ? dims.x1 : dims.x2);
    for (int j = 0; j < k; ++j) {
      const bool own = (j % 2 == 0) == user1;
      int radix = own ? (user1 ? dims.i1 : dims.i2) : (user1 ? dims.o2 : dims.o1);
      r.insert(r.end(), static_cast<std::size_t>(round_lengths[static_cast<std::size_t>(j)]), radix);
    }
    return r;
  }

  std::vector<int> decoder_history_radices(int user) const {
    const bool user1 = (user == 1);
    std::vector<int> r(static_cast<std::size_t>(dims.n), user1 ? dims.x1 : dims.x2);
    for (int j = 0; j < rounds(); ++j) {
      const bool own = (j % 2 == 0) == user1;
      int radix = own ? (user1 ? dims.i1 : dims.i2) : (user1 ? dims.o2 : dims.o1);
      r.insert(r.end(), static_cast<std::size_t>(round_lengths[static_cast<std::size_t>(j)]), radix);
    }
    return r;
  }
};

/// Channel-use budget per source symbol (R1, R2) and distortion targets.
struct CodeSpec {
  double r1 = 0.0, r2 = 0.0, d1 = 0.0, d2 = 0.0;

  void validate() const {
    if (r1 < 0 || r2 < 0 || d1 < 0 || d2 < 0) throw std::invalid_argument("CodeSpec: all entries must be >= 0");
  }
};

inline std::pair<double, double> rates(const GeneralCode& code) {
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < code.sched.c1.size(); ++i) {
    s1 += code.sched.c1[i];
    s2 += code.sched.c2[i];
  }
  return {s1 / code.dims.n, s2 / code.dims.n};
}

inline std::pair<double, double> rates(const StaggeredCode& code) {
  double s1 = 0, s2 = 0;
  for (int k = 0; k < code.rounds(); ++k) ((k % 2 == 0) ? s1 : s2) += code.round_lengths[static_cast<std::size_t>(k)];
  return {s1 / code.dims.n, s2 / code.dims.n};
}

// ---------------------------------------------------------------------------
// Execution.
// ---------------------------------------------------------------------------

/// One realized run of a general code; idle slots hold -1.
struct ExecutionTrace {
  std::vector<int> x1, x2;
  std::vector<int> u1, v1, u2, v2;  // per slot
  std::vector<int> xh1, xh2;
};

namespace detail {

// Uniform supply: either a live generator or a fixed tape (for replay tests).
struct UniformFeed {
  Rng* rng = nullptr;
  std::span<const double> tape;
  std::size_t cursor = 0;

  double next() {
    if (rng) return rng->next_unit();
    if (cursor >= tape.size()) throw std::runtime_error("UniformFeed: tape exhausted");
    return tape[cursor++];
  }
};

inline int sample_row_with_uniform(std::span<const double> row, double u) {
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] > 0.0) last_positive = static_cast<int>(i);
    acc += row[i];
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

}  // namespace detail

/// Runs the slot dynamics on fixed source blocks. Within a simultaneous slot
/// both encoders read only strictly earlier slots: both inputs are computed
/// before either channel output is appended to a history.
inline ExecutionTrace run_general(const GeneralCode& code, std::span<const int> x1, std::span<const int> x2, const Dmc& ch1, const Dmc& ch2,
                                  detail::UniformFeed feed) {
  const int N = code.sched.horizon();
  ExecutionTrace tr;
  tr.x1.assign(x1.begin(), x1.end());
  tr.x2.assign(x2.begin(), x2.end());
  tr.u1.assign(static_cast<std::size_t>(N), -1);
  tr.v1.assign(static_cast<std::size_t>(N), -1);
  tr.u2.assign(static_cast<std::size_t>(N), -1);
  tr.v2.assign(static_cast<std::size_t>(N), -1);

  std::vector<int> h1(x1.begin(), x1.end()), h2(x2.begin(), x2.end());
  for (int i = 0; i < N; ++i) {
    int u1 = -1, u2 = -1;
    if (code.sched.c1[static_cast<std::size_t>(i)]) u1 = code.enc1[static_cast<std::size_t>(i)]->eval(h1);
    if (code.sched.c2[static_cast<std::size_t>(i)]) u2 = code.enc2[static_cast<std::size_t>(i)]->eval(h2);
    int v1 = -1, v2 = -1;
    if (u1 >= 0) v1 = detail::sample_row_with_uniform(ch1.row(u1), feed.next());
    if (u2 >= 0) v2 = detail::sample_row_with_uniform(ch2.row(u2), feed.next());
    if (u1 >= 0) {
      h1.push_back(u1);
      tr.u1[static_cast<std::size_t>(i)] = u1;
      tr.v1[static_cast<std::size_t>(i)] = v1;
    }
    if (u2 >= 0) {
      h2.push_back(u2);
      tr.u2[static_cast<std::size_t>(i)] = u2;
      tr.v2[static_cast<std::size_t>(i)] = v2;
    }
    if (v2 >= 0) h1.push_back(v2);
    if (v1 >= 0) h2.push_back(v1);
  }
  tr.xh2.assign(static_cast<std::size_t>(code.dims.n), 0);
  tr.xh1.assign(static_cast<std::size_t>(code.dims.n), 0);
  code.dec1->eval(h1, tr.xh2);
  code.dec2->eval(h2, tr.xh1);
  return tr;
}

/// Round dynamics of a staggered code on fixed source blocks.
struct StaggeredTrace {
  std::vector<int> x1, x2;
  std::vector<std::vector<int>> u, v;  // per round, letter vectors
  std::vector<int> xh1, xh2;
};

inline StaggeredTrace run_staggered(const StaggeredCode& code, std::span<const int> x1, std::span<const int> x2, const Dmc& ch1, const Dmc& ch2,
                                    detail::UniformFeed feed) {
  const int q = code.rounds();
  StaggeredTrace tr;
  tr.x1.assign(x1.begin(), x1.end());
  tr.x2.assign(x2.begin(), x2.end());
  std::vector<int> h1(x1.begin(), x1.end()), h2(x2.begin(), x2.end());
  for (int k = 0; k < q; ++k) {
    const bool user1 = (k % 2 == 0);
    const int nk = code.round_lengths[static_cast<std::size_t>(k)];
    const Dmc& ch = user1 ? ch1 : ch2;
    std::vector<int>& sender_hist = user1 ? h1 : h2;
    std::vector<int>& receiver_hist = user1 ? h2 : h1;
    std::vector<int> in_rad(static_cast<std::size_t>(nk), user1 ? code.dims.i1 : code.dims.i2);
    std::vector<int> rad = code.round_history_radices(k);
    std::size_t hidx = pack_digits(std::span<const int>(sender_hist.data(), rad.size()), rad);
    std::vector<int> u(static_cast<std::size_t>(nk));
    unpack_digits(static_cast<std::size_t>(code.round_tables[static_cast<std::size_t>(k)][hidx]), in_rad, u);
    std::vector<int> v(static_cast<std::size_t>(nk));
    for (int t = 0; t < nk; ++t) v[static_cast<std::size_t>(t)] = detail::sample_row_with_uniform(ch.row(u[static_cast<std::size_t>(t)]), feed.next());
    for (int t = 0; t < nk; ++t) sender_hist.push_back(u[static_cast<std::size_t>(t)]);
    for (int t = 0; t < nk; ++t) receiver_hist.push_back(v[static_cast<std::size_t>(t)]);
    tr.u.push_back(std::move(u));
    tr.v.push_back(std::move(v));
  }
  tr.xh2.assign(static_cast<std::size_t>(code.dims.n), 0);
  tr.xh1.assign(static_cast<std::size_t>(code.dims.n), 0);
  std::vector<int> dec1_rad = code.decoder_history_radices(1);
  std::vector<int> dec2_rad = code.decoder_history_radices(2);
  std::vector<int> rad2(static_cast<std::size_t>(code.dims.n), code.dims.xh2);
  std::vector<int> rad1(static_cast<std::size_t>(code.dims.n), code.dims.xh1);
  unpack_digits(static_cast<std::size_t>(code.dec1_table[pack_digits(h1, dec1_rad)]), rad2, tr.xh2);
  unpack_digits(static_cast<std::size_t>(code.dec2_table[pack_digits(h2, dec2_rad)]), rad1, tr.xh1);
  return tr;
}

/// Monte-Carlo distortion estimate of an executed code.
struct McResult {
  double dhat1 = 0.0, dhat2 = 0.0;
  double stderr1 = 0.0, stderr2 = 0.0;
  long trials = 0;
  std::vector<ExecutionTrace> traces;         // first few general-code traces
  std::vector<StaggeredTrace> staggered_traces;
};

template <typename Code>
McResult execute_monte_carlo(const Code& code, const JointSource& source, const DistortionMeasure& d1, const DistortionMeasure& d2,
                             const Dmc& ch1, const Dmc& ch2, long trials, Rng& rng, std::size_t keep_traces = 8) {
  if (trials <= 0) throw std::invalid_argument("execute_monte_carlo: trials must be positive");
  if (source.alphabet1() != code.dims.x1 || source.alphabet2() != code.dims.x2)
    throw std::invalid_argument("execute_monte_carlo: source alphabets do not match the code");
  if (ch1.input_size() != code.dims.i1 || ch1.output_size() != code.dims.o1 || ch2.input_size() != code.dims.i2 || ch2.output_size() != code.dims.o2)
    throw std::invalid_argument("execute_monte_carlo: channel alphabets do not match the code");
  if (d1.source_size() != code.dims.x1 || d1.recon_size() != code.dims.xh1 || d2.source_size() != code.dims.x2 || d2.recon_size() != code.dims.xh2)
    throw std::invalid_argument("execute_monte_carlo: distortion alphabets do not match the code");

  McResult res;
  res.trials = trials;
  long double s1 = 0.0L, s2 = 0.0L, sq1 = 0.0L, sq2 = 0.0L;
  for (long t = 0; t < trials; ++t) {
    auto [x1, x2] = source.sample_block(code.dims.n, rng);
    detail::UniformFeed feed{&rng, {}, 0};
    double a, b;
    if constexpr (std::is_same_v<Code, GeneralCode>) {
      ExecutionTrace tr = run_general(code, x1, x2, ch1, ch2, feed);
      a = avg_distortion(tr.x1, tr.xh1, d1);
      b = avg_distortion(tr.x2, tr.xh2, d2);
      if (res.traces.size() < keep_traces) res.traces.push_back(std::move(tr));
    } else {
      StaggeredTrace tr = run_staggered(code, x1, x2, ch1, ch2, feed);
      a = avg_distortion(tr.x1, tr.xh1, d1);
      b = avg_distortion(tr.x2, tr.xh2, d2);
      if (res.staggered_traces.size() < keep_traces) res.staggered_traces.push_back(std::move(tr));
    }
    s1 += a;
    s2 += b;
    sq1 += a * a;
    sq2 += b * b;
  }
  res.dhat1 = static_cast<double>(s1 / trials);
  res.dhat2 = static_cast<double>(s2 / trials);
  auto stderr_of = [trials](long double s, long double sq, double mean) {
    long double var = sq / trials - static_cast<long double>(mean) * mean;
    if (var < 0) var = 0;
    return std::sqrt(static_cast<double>(var) / static_cast<double>(trials));
  };
  res.stderr1 = stderr_of(s1, sq1, res.dhat1);
  res.stderr2 = stderr_of(s2, sq2, res.dhat2);
  return res;
}

// ---------------------------------------------------------------------------
// Exact analysis.
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t checked_path_count(const GeneralCode& code, const char* what) {
  std::size_t paths = 1;
  auto mul = [&](int f) {
    if (paths > kMaxCells / static_cast<std::size_t>(f)) {
      std::ostringstream os;
      os << what << ": exact enumeration needs more than " << kMaxCells << " paths";
      throw std::invalid_argument(os.str());
    }
    paths *= static_cast<std::size_t>(f);
  };
  for (int t = 0; t < code.dims.n; ++t) {
    mul(code.dims.x1);
    mul(code.dims.x2);
  }
  for (int i = 0; i < code.sched.horizon(); ++i) {
    if (code.sched.c1[static_cast<std::size_t>(i)]) mul(code.dims.o1);
    if (code.sched.c2[static_cast<std::size_t>(i)]) mul(code.dims.o2);
  }
  return paths;
}

}  // namespace detail

/// Exact expected per-symbol distortions of a general code, by enumerating
/// every (source pair, channel output) realization.
inline std::pair<double, double> exact_distortions(const GeneralCode& code, const JointSource& source, const DistortionMeasure& d1,
                                                   const DistortionMeasure& d2, const Dmc& ch1, const Dmc& ch2) {
  code.validate();
  detail::checked_path_count(code, "exact_distortions");
  const int n = code.dims.n;
  const int N = code.sched.horizon();
  long double e1 = 0.0L, e2 = 0.0L;

  std::vector<int> x1(static_cast<std::size_t>(n)), x2(static_cast<std::size_t>(n));
  std::vector<int> h1, h2;
  std::vector<int> xh1(static_cast<std::size_t>(n)), xh2(static_cast<std::size_t>(n));

  // recursive slot walk
  auto walk = [&](auto&& self, int slot, double p) -> void {
    if (p == 0.0) return;
    if (slot == N) {
      code.dec1->eval(h1, xh2);
      code.dec2->eval(h2, xh1);
      e1 += static_cast<long double>(p) * avg_distortion(x1, xh1, d1);
      e2 += static_cast<long double>(p) * avg_distortion(x2, xh2, d2);
      return;
    }
    const bool a1 = code.sched.c1[static_cast<std::size_t>(slot)];
    const bool a2 = code.sched.c2[static_cast<std::size_t>(slot)];
    int u1 = a1 ? code.enc1[static_cast<std::size_t>(slot)]->eval(h1) : -1;
    int u2 = a2 ? code.enc2[static_cast<std::size_t>(slot)]->eval(h2) : -1;
    const int v1_count = a1 ? code.dims.o1 : 1;
    const int v2_count = a2 ? code.dims.o2 : 1;
    for (int v1 = 0; v1 < v1_count; ++v1) {
      double p1 = a1 ? ch1.w(u1, v1) : 1.0;
      if (p1 == 0.0) continue;
      for (int v2 = 0; v2 < v2_count; ++v2) {
        double p2 = a2 ? ch2.w(u2, v2) : 1.0;
        if (p2 == 0.0) continue;
        std::size_t keep1 = h1.size(), keep2 = h2.size();
        // own input precedes received output within a slot, for both users
        if (a1) h1.push_back(u1);
        if (a2) h1.push_back(v2);
        if (a2) h2.push_back(u2);
        if (a1) h2.push_back(v1);
        self(self, slot + 1, p * p1 * p2);
        h1.resize(keep1);
        h2.resize(keep2);
      }
    }
  };

  // enumerate source blocks
  std::vector<int> xr1(static_cast<std::size_t>(n), code.dims.x1), xr2(static_cast<std::size_t>(n), code.dims.x2);
  std::size_t n1 = 1, n2 = 1;
  for (int t = 0; t < n; ++t) {
    n1 *= static_cast<std::size_t>(code.dims.x1);
    n2 *= static_cast<std::size_t>(code.dims.x2);
  }
  for (std::size_t a = 0; a < n1; ++a) {
    unpack_digits(a, xr1, x1);
    for (std::size_t b = 0; b < n2; ++b) {
      unpack_digits(b, xr2, x2);
      double p0 = 1.0;
      for (int t = 0; t < n; ++t) p0 *= source.p(x1[static_cast<std::size_t>(t)], x2[static_cast<std::size_t>(t)]);
      if (p0 == 0.0) continue;
      h1.assign(x1.begin(), x1.end());
      h2.assign(x2.begin(), x2.end());
      walk(walk, 0, p0);
    }
  }
  // avg_distortion is already per-symbol
  return {static_cast<double>(e1), static_cast<double>(e2)};
}

/// Full joint law of (X1 block, X2 block, round outputs V1..Vq, both
/// reconstructions) of an executed staggered code. Blocks are single packed
/// variables; the channel-input blocks are omitted because each is a
/// deterministic function of the included variables through the encoders.
inline Pmf exact_joint(const StaggeredCode& code, const JointSource& source, const Dmc& ch1, const Dmc& ch2) {
  code.validate();
  if (source.alphabet1() != code.dims.x1 || source.alphabet2() != code.dims.x2)
    throw std::invalid_argument("exact_joint: source alphabets do not match the code");
  const int n = code.dims.n;
  const int q = code.rounds();

  std::vector<Variable> vars;
  auto pow_cells = [](int base, int e) {
    std::size_t v = 1;
    for (int i = 0; i < e; ++i) {
      if (v > kMaxCells / static_cast<std::size_t>(base)) throw std::invalid_argument("exact_joint: block variable exceeds cell ceiling");
      v *= static_cast<std::size_t>(base);
    }
    return v;
  };
  vars.push_back({"X1", static_cast<int>(pow_cells(code.dims.x1, n))});
  vars.push_back({"X2", static_cast<int>(pow_cells(code.dims.x2, n))});
  for (int k = 0; k < q; ++k) {
    int out = (k % 2 == 0) ? code.dims.o1 : code.dims.o2;
    vars.push_back({"V" + std::to_string(k + 1), static_cast<int>(pow_cells(out, code.round_lengths[static_cast<std::size_t>(k)]))});
  }
  vars.push_back({"Xh1", static_cast<int>(pow_cells(code.dims.xh1, n))});
  vars.push_back({"Xh2", static_cast<int>(pow_cells(code.dims.xh2, n))});
  std::vector<int> var_radices = Pmf::radices_of(vars);
  long double need = 1.0L;
  for (int r : var_radices) need *= r;
  std::size_t cells = 1;
  for (int r : var_radices) {
    if (cells > kMaxCells / static_cast<std::size_t>(r)) {
      std::ostringstream os;
      os << "exact_joint: joint table needs about " << static_cast<double>(need) << " cells, above ceiling " << kMaxCells;
      throw std::invalid_argument(os.str());
    }
    cells *= static_cast<std::size_t>(r);
  }
  std::vector<double> mass(cells, 0.0);

  std::vector<int> x1(static_cast<std::size_t>(n)), x2(static_cast<std::size_t>(n));
  std::vector<int> h1, h2;
  std::vector<int> cell_digits(vars.size(), 0);
  std::vector<int> xh1(static_cast<std::size_t>(n)), xh2(static_cast<std::size_t>(n));
  std::vector<int> dec1_rad = code.decoder_history_radices(1);
  std::vector<int> dec2_rad = code.decoder_history_radices(2);
  std::vector<int> xh1_rad(static_cast<std::size_t>(n), code.dims.xh1), xh2_rad(static_cast<std::size_t>(n), code.dims.xh2);

  auto walk = [&](auto&& self, int k, double p) -> void {
    if (p == 0.0) return;
    if (k == q) {
      cell_digits[vars.size() - 2] = code.dec2_table[pack_digits(h2, dec2_rad)];
      cell_digits[vars.size() - 1] = code.dec1_table[pack_digits(h1, dec1_rad)];
      mass[pack_digits(cell_digits, var_radices)] += p;
      return;
    }
    const bool user1 = (k % 2 == 0);
    const int nk = code.round_lengths[static_cast<std::size_t>(k)];
    const Dmc& ch = user1 ? ch1 : ch2;
    std::vector<int>& sender = user1 ? h1 : h2;
    std::vector<int>& receiver = user1 ? h2 : h1;
    std::vector<int> rad = code.round_history_radices(k);
    std::size_t hidx = pack_digits(std::span<const int>(sender.data(), rad.size()), rad);
    std::vector<int> in_rad(static_cast<std::size_t>(nk), user1 ? code.dims.i1 : code.dims.i2);
    std::vector<int> u(static_cast<std::size_t>(nk));
    unpack_digits(static_cast<std::size_t>(code.round_tables[static_cast<std::size_t>(k)][hidx]), in_rad, u);
    const int out = user1 ? code.dims.o1 : code.dims.o2;
    std::vector<int> out_rad(static_cast<std::size_t>(nk), out);
    std::size_t vcount = 1;
    for (int t = 0; t < nk; ++t) vcount *= static_cast<std::size_t>(out);
    std::vector<int> v(static_cast<std::size_t>(nk));
    for (std::size_t vi = 0; vi < vcount; ++vi) {
      unpack_digits(vi, out_rad, v);
      double pv = 1.0;
      for (int t = 0; t < nk; ++t) pv *= ch.w(u[static_cast<std::size_t>(t)], v[static_cast<std::size_t>(t)]);
      if (pv == 0.0) continue;
      std::size_t ks = sender.size(), kr = receiver.size();
      for (int t = 0; t < nk; ++t) sender.push_back(u[static_cast<std::size_t>(t)]);
      for (int t = 0; t < nk; ++t) receiver.push_back(v[static_cast<std::size_t>(t)]);
      cell_digits[static_cast<std::size_t>(2 + k)] = static_cast<int>(vi);
      self(self, k + 1, p * pv);
      sender.resize(ks);
      receiver.resize(kr);
    }
  };

  std::vector<int> xr1(static_cast<std::size_t>(n), code.dims.x1), xr2(static_cast<std::size_t>(n), code.dims.x2);
  std::size_t n1 = 1, n2 = 1;
  for (int t = 0; t < n; ++t) {
    n1 *= static_cast<std::size_t>(code.dims.x1);
    n2 *= static_cast<std::size_t>(code.dims.x2);
  }
  for (std::size_t a = 0; a < n1; ++a) {
    unpack_digits(a, xr1, x1);
    for (std::size_t b = 0; b < n2; ++b) {
      unpack_digits(b, xr2, x2);
      double p0 = 1.0;
      for (int t = 0; t < n; ++t) p0 *= source.p(x1[static_cast<std::size_t>(t)], x2[static_cast<std::size_t>(t)]);
      if (p0 == 0.0) continue;
      h1.assign(x1.begin(), x1.end());
      h2.assign(x2.begin(), x2.end());
      cell_digits[0] = static_cast<int>(a);
      cell_digits[1] = static_cast<int>(b);
      walk(walk, 0, p0);
    }
  }
  return Pmf(std::move(vars), std::move(mass));
}

/// Exact distortions straight from the round walk (no joint table).
inline std::pair<double, double> exact_distortions(const StaggeredCode& code, const JointSource& source, const DistortionMeasure& d1,
                                                   const DistortionMeasure& d2, const Dmc& ch1, const Dmc& ch2) {
  Pmf joint = exact_joint(code, source, ch1, ch2);
  // E d1 over the (X1, Xh1) marginal, per symbol
  const int n = code.dims.n;
  std::vector<int> xr1(static_cast<std::size_t>(n), code.dims.x1), hr1(static_cast<std::size_t>(n), code.dims.xh1);
  std::vector<int> xr2(static_cast<std::size_t>(n), code.dims.x2), hr2(static_cast<std::size_t>(n), code.dims.xh2);
  Pmf m1 = joint.marginalize({"X1", "Xh1"});
  Pmf m2 = joint.marginalize({"X2", "Xh2"});
  std::vector<int> xd(static_cast<std::size_t>(n)), hd(static_cast<std::size_t>(n));
  long double e1 = 0.0L, e2 = 0.0L;
  const auto& mm1 = m1.mass();
  std::size_t hx1 = 1;
  for (int t = 0; t < n; ++t) hx1 *= static_cast<std::size_t>(code.dims.xh1);
  for (std::size_t i = 0; i < mm1.size(); ++i) {
    if (mm1[i] == 0.0) continue;
    unpack_digits(i / hx1, xr1, xd);
    unpack_digits(i % hx1, hr1, hd);
    e1 += static_cast<long double>(mm1[i]) * avg_distortion(xd, hd, d1);
  }
  const auto& mm2 = m2.mass();
  std::size_t hx2 = 1;
  for (int t = 0; t < n; ++t) hx2 *= static_cast<std::size_t>(code.dims.xh2);
  for (std::size_t i = 0; i < mm2.size(); ++i) {
    if (mm2[i] == 0.0) continue;
    unpack_digits(i / hx2, xr2, xd);
    unpack_digits(i % hx2, hr2, hd);
    e2 += static_cast<long double>(mm2[i]) * avg_distortion(xd, hd, d2);
  }
  return {static_cast<double>(e1), static_cast<double>(e2)};
}

// ---------------------------------------------------------------------------
// Code transformations.
// ---------------------------------------------------------------------------

namespace detail {

// coord translation table: old coord -> new coord under a slot renumbering
struct CoordTranslator {
  // maps old slot -> new slot for own-input digits of this user and for
  // received digits (the slot of the other direction's transmission)
  std::vector<int> own_slot_map;
  std::vector<int> recv_slot_map;
  int source_offset = 0;  // shift of source positions (repetition copies)
  int source_stride = 1;

  Coord operator()(const Coord& c) const {
    switch (c.kind) {
      case CoordKind::Source: return {CoordKind::Source, source_offset + c.idx};
      case CoordKind::OwnInput: return {CoordKind::OwnInput, own_slot_map[static_cast<std::size_t>(c.idx)]};
      case CoordKind::Received: return {CoordKind::Received, recv_slot_map[static_cast<std::size_t>(c.idx)]};
    }
    throw std::logic_error("CoordTranslator: bad kind");
  }
};

inline std::vector<int> build_coord_map(const Schedule& old_sched, int user, int old_slot_or_terminal, int old_n,
                                        const Schedule& new_sched, int new_slot_or_terminal, int new_n, const CoordTranslator& tr) {
  std::vector<Coord> old_coords = history_coords(old_sched, user, old_slot_or_terminal, old_n);
  std::vector<Coord> new_coords = history_coords(new_sched, user, new_slot_or_terminal, new_n);
  std::map<Coord, int> pos;
  for (std::size_t i = 0; i < new_coords.size(); ++i) pos[new_coords[i]] = static_cast<int>(i);
  std::vector<int> map;
  map.reserve(old_coords.size());
  for (const auto& c : old_coords) {
    auto it = pos.find(tr(c));
    if (it == pos.end()) throw std::logic_error("build_coord_map: translated coordinate missing from new layout");
    map.push_back(it->second);
  }
  return map;
}

}  // namespace detail

/// Serializes simultaneous slots: the user-1 transmission of a slot happens
/// first, the user-2 transmission in the following new slot, each encoder
/// consuming exactly its original information set. Requires the code to start
/// with a user-1 transmission and end with a user-2 one. Rates, distortions
/// and the induced joint law of sources and reconstructions are unchanged;
/// the horizon at most doubles. Already-staggered codes pass through.
inline GeneralCode stagger_transform(const GeneralCode& code) {
  code.validate();
  if (code.sched.c1.front() != 1 || code.sched.c2.back() != 1)
    throw std::invalid_argument(
        "stagger_transform: code must start with a user-1 slot and end with a user-2 slot; "
        "apply boundary_pad (with repetition_lift to amortize the rate increase) first");
  if (code.sched.one_direction_per_slot()) return code;

  const int N = code.sched.horizon();
  Schedule ns;
  std::vector<int> slot1_new(static_cast<std::size_t>(N), -1), slot2_new(static_cast<std::size_t>(N), -1);
  for (int j = 0; j < N; ++j) {
    if (code.sched.c1[static_cast<std::size_t>(j)]) {
      slot1_new[static_cast<std::size_t>(j)] = static_cast<int>(ns.c1.size());
      ns.c1.push_back(1);
      ns.c2.push_back(0);
    }
    if (code.sched.c2[static_cast<std::size_t>(j)]) {
      slot2_new[static_cast<std::size_t>(j)] = static_cast<int>(ns.c1.size());
      ns.c1.push_back(0);
      ns.c2.push_back(1);
    }
  }

  detail::CoordTranslator tr1{slot1_new, slot2_new, 0, 1};  // user 1: own = dir-1 slots, received = dir-2 slots
  detail::CoordTranslator tr2{slot2_new, slot1_new, 0, 1};

  GeneralCode out;
  out.dims = code.dims;
  out.sched = ns;
  out.enc1.assign(ns.c1.size(), nullptr);
  out.enc2.assign(ns.c1.size(), nullptr);
  for (int j = 0; j < N; ++j) {
    if (code.sched.c1[static_cast<std::size_t>(j)]) {
      int s = slot1_new[static_cast<std::size_t>(j)];
      out.enc1[static_cast<std::size_t>(s)] = std::make_shared<RemapEncoder>(
          code.enc1[static_cast<std::size_t>(j)], detail::build_coord_map(code.sched, 1, j, code.dims.n, ns, s, code.dims.n, tr1));
    }
    if (code.sched.c2[static_cast<std::size_t>(j)]) {
      int s = slot2_new[static_cast<std::size_t>(j)];
      out.enc2[static_cast<std::size_t>(s)] = std::make_shared<RemapEncoder>(
          code.enc2[static_cast<std::size_t>(j)], detail::build_coord_map(code.sched, 2, j, code.dims.n, ns, s, code.dims.n, tr2));
    }
  }
  out.dec1 = std::make_shared<RemapDecoder>(code.dec1, detail::build_coord_map(code.sched, 1, N, code.dims.n, ns, ns.horizon(), code.dims.n, tr1));
  out.dec2 = std::make_shared<RemapDecoder>(code.dec2, detail::build_coord_map(code.sched, 2, N, code.dims.n, ns, ns.horizon(), code.dims.n, tr2));
  return out;
}

/// Ensures the boundary condition needed by stagger_transform by spurious
/// transmissions: a constant user-1 slot prepended when the code does not
/// start with one, a constant user-2 slot appended when it does not end with
/// one. Distortions are unchanged; each direction's channel-use count grows
/// by at most one.
inline GeneralCode boundary_pad(const GeneralCode& code) {
  code.validate();
  const bool front = code.sched.c1.front() == 0;
  const bool back = code.sched.c2.back() == 0;
  if (!front && !back) return code;

  const int N = code.sched.horizon();
  const int off = front ? 1 : 0;
  Schedule ns;
  if (front) {
    ns.c1.push_back(1);
    ns.c2.push_back(0);
  }
  ns.c1.insert(ns.c1.end(), code.sched.c1.begin(), code.sched.c1.end());
  ns.c2.insert(ns.c2.end(), code.sched.c2.begin(), code.sched.c2.end());
  if (back) {
    ns.c1.push_back(0);
    ns.c2.push_back(1);
  }

  std::vector<int> shift(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) shift[static_cast<std::size_t>(j)] = j + off;
  detail::CoordTranslator tr{shift, shift, 0, 1};

  GeneralCode out;
  out.dims = code.dims;
  out.sched = ns;
  out.enc1.assign(ns.c1.size(), nullptr);
  out.enc2.assign(ns.c1.size(), nullptr);
  if (front) out.enc1[0] = std::make_shared<ConstantEncoder>(0);
  if (back) out.enc2[ns.c1.size() - 1] = std::make_shared<ConstantEncoder>(0);
  for (int j = 0; j < N; ++j) {
    if (code.sched.c1[static_cast<std::size_t>(j)])
      out.enc1[static_cast<std::size_t>(j + off)] = std::make_shared<RemapEncoder>(
          code.enc1[static_cast<std::size_t>(j)], detail::build_coord_map(code.sched, 1, j, code.dims.n, ns, j + off, code.dims.n, tr));
    if (code.sched.c2[static_cast<std::size_t>(j)])
      out.enc2[static_cast<std::size_t>(j + off)] = std::make_shared<RemapEncoder>(
          code.enc2[static_cast<std::size_t>(j)], detail::build_coord_map(code.sched, 2, j, code.dims.n, ns, j + off, code.dims.n, tr));
  }
  out.dec1 = std::make_shared<RemapDecoder>(code.dec1, detail::build_coord_map(code.sched, 1, N, code.dims.n, ns, ns.horizon(), code.dims.n, tr));
  out.dec2 = std::make_shared<RemapDecoder>(code.dec2, detail::build_coord_map(code.sched, 2, N, code.dims.n, ns, ns.horizon(), code.dims.n, tr));
  return out;
}

/// H-fold repetition: block length nH, horizon NH, copy h running the
/// original code on its own sub-block. Rates and per-symbol distortions are
/// exactly those of the base code.
inline GeneralCode repetition_lift(const GeneralCode& code, int H) {
  code.validate();
  if (H < 1) throw std::invalid_argument("repetition_lift: H must be >= 1");
  if (H == 1) return code;

  const int N = code.sched.horizon();
  const int n = code.dims.n;
  GeneralCode out;
  out.dims = code.dims;
  out.dims.n = n * H;
  Schedule ns;
  for (int h = 0; h < H; ++h) {
    ns.c1.insert(ns.c1.end(), code.sched.c1.begin(), code.sched.c1.end());
    ns.c2.insert(ns.c2.end(), code.sched.c2.begin(), code.sched.c2.end());
  }
  out.sched = ns;
  out.enc1.assign(ns.c1.size(), nullptr);
  out.enc2.assign(ns.c1.size(), nullptr);

  std::vector<std::vector<int>> dec1_maps, dec2_maps;
  for (int h = 0; h < H; ++h) {
    std::vector<int> shift(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) shift[static_cast<std::size_t>(j)] = h * N + j;
    detail::CoordTranslator tr{shift, shift, h * n, 1};
    for (int j = 0; j < N; ++j) {
      if (code.sched.c1[static_cast<std::size_t>(j)])
        out.enc1[static_cast<std::size_t>(h * N + j)] = std::make_shared<RemapEncoder>(
            code.enc1[static_cast<std::size_t>(j)], detail::build_coord_map(code.sched, 1, j, n, ns, h * N + j, out.dims.n, tr));
      if (code.sched.c2[static_cast<std::size_t>(j)])
        out.enc2[static_cast<std::size_t>(h * N + j)] = std::make_shared<RemapEncoder>(
            code.enc2[static_cast<std::size_t>(j)], detail::build_coord_map(code.sched, 2, j, n, ns, h * N + j, out.dims.n, tr));
    }
    dec1_maps.push_back(detail::build_coord_map(code.sched, 1, N, n, ns, ns.horizon(), out.dims.n, tr));
    dec2_maps.push_back(detail::build_coord_map(code.sched, 2, N, n, ns, ns.horizon(), out.dims.n, tr));
  }
  out.dec1 = std::make_shared<LiftedDecoder>(code.dec1, H, n, std::move(dec1_maps));
  out.dec2 = std::make_shared<LiftedDecoder>(code.dec2, H, n, std::move(dec2_maps));
  return out;
}

/// Collapses a one-direction-per-slot general code into round form by
/// materializing per-round lookup tables (maximal same-direction slot runs
/// become rounds). The code must start with user 1 and end with user 2.
inline StaggeredCode to_staggered(const GeneralCode& code) {
  code.validate();
  if (!code.sched.one_direction_per_slot()) throw std::invalid_argument("to_staggered: code has simultaneous slots; apply stagger_transform first");
  if (!code.sched.boundary_ok()) throw std::invalid_argument("to_staggered: code must start with user 1 and end with user 2");

  const int N = code.sched.horizon();
  StaggeredCode out;
  out.dims = code.dims;
  std::vector<int> round_start;
  for (int i = 0; i < N;) {
    int dir = code.sched.c1[static_cast<std::size_t>(i)] ? 1 : 2;
    int j = i;
    while (j < N && (code.sched.c1[static_cast<std::size_t>(j)] ? 1 : 2) == dir) ++j;
    round_start.push_back(i);
    out.round_lengths.push_back(j - i);
    i = j;
  }
  const int q = static_cast<int>(out.round_lengths.size());
  if (q % 2 != 0) throw std::logic_error("to_staggered: alternating runs starting user-1 and ending user-2 must be even");

  for (int k = 0; k < q; ++k) {
    const bool user1 = (k % 2 == 0);
    const int nk = out.round_lengths[static_cast<std::size_t>(k)];
    std::vector<int> rad = out.round_history_radices(k);
    std::size_t cells = checked_cell_count(rad, "to_staggered round table");
    std::vector<int> table(cells);
    std::vector<int> hist(rad.size());
    const int in_radix = user1 ? code.dims.i1 : code.dims.i2;
    std::vector<int> in_rad(static_cast<std::size_t>(nk), in_radix);
    std::vector<int> letters(static_cast<std::size_t>(nk));
    for (std::size_t idx = 0; idx < cells; ++idx) {
      unpack_digits(idx, rad, hist);
      std::vector<int> h(hist.begin(), hist.end());
      for (int t = 0; t < nk; ++t) {
        int slot = round_start[static_cast<std::size_t>(k)] + t;
        const auto& enc = user1 ? code.enc1[static_cast<std::size_t>(slot)] : code.enc2[static_cast<std::size_t>(slot)];
        letters[static_cast<std::size_t>(t)] = enc->eval(h);
        h.push_back(letters[static_cast<std::size_t>(t)]);
      }
      table[idx] = static_cast<int>(pack_digits(letters, in_rad));
    }
    out.round_tables.push_back(std::move(table));
  }

  for (int user : {1, 2}) {
    std::vector<int> rad = out.decoder_history_radices(user);
    std::size_t cells = checked_cell_count(rad, "to_staggered decoder table");
    std::vector<int> table(cells);
    std::vector<int> hist(rad.size());
    const int n = code.dims.n;
    const int letter = (user == 1) ? code.dims.xh2 : code.dims.xh1;
    std::vector<int> out_rad(static_cast<std::size_t>(n), letter);
    std::vector<int> block(static_cast<std::size_t>(n));
    const auto& dec = (user == 1) ? code.dec1 : code.dec2;
    for (std::size_t idx = 0; idx < cells; ++idx) {
      unpack_digits(idx, rad, hist);
      dec->eval(hist, block);
      table[idx] = static_cast<int>(pack_digits(block, out_rad));
    }
    if (user == 1)
      out.dec1_table = std::move(table);
    else
      out.dec2_table = std::move(table);
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Random codes (for sweeps and property tests).
// ---------------------------------------------------------------------------

enum class BoundaryStyle { Random, ForceOk, ForceViolated };

struct RandomScheduleOptions {
  double p_simultaneous = 0.4;
  bool require_simultaneous = false;
  BoundaryStyle boundary = BoundaryStyle::Random;
};

inline Schedule random_schedule(int horizon, Rng& rng, const RandomScheduleOptions& opts = {}) {
  if (horizon < 1) throw std::invalid_argument("random_schedule: horizon must be >= 1");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Schedule s;
    for (int i = 0; i < horizon; ++i) {
      double u = rng.next_unit();
      if (u < opts.p_simultaneous) {
        s.c1.push_back(1);
        s.c2.push_back(1);
      } else if (u < opts.p_simultaneous + 0.5 * (1.0 - opts.p_simultaneous)) {
        s.c1.push_back(1);
        s.c2.push_back(0);
      } else {
        s.c1.push_back(0);
        s.c2.push_back(1);
      }
    }
    if (opts.boundary == BoundaryStyle::ForceOk) {
      s.c1.front() = 1;
      s.c2.back() = 1;
    } else if (opts.boundary == BoundaryStyle::ForceViolated) {
      double which = rng.next_unit();
      if (which < 0.67) {
        s.c1.front() = 0;
        s.c2.front() = 1;  // keep the slot legal
      }
      if (which >= 0.33) {
        s.c2.back() = 0;
        s.c1.back() = 1;
      }
    }
    bool sim = false;
    for (int i = 0; i < horizon; ++i) sim |= (s.c1[static_cast<std::size_t>(i)] == 1 && s.c2[static_cast<std::size_t>(i)] == 1);
    if (opts.require_simultaneous && !sim) continue;
    if (opts.boundary == BoundaryStyle::ForceViolated && s.boundary_ok()) continue;
    s.validate();
    return s;
  }
  throw std::runtime_error("random_schedule: could not satisfy constraints");
}

/// Uniformly random lookup tables over the given schedule.
inline GeneralCode random_general_code(const CodeDims& dims, const Schedule& sched, Rng& rng) {
  dims.validate();
  sched.validate();
  GeneralCode code;
  code.dims = dims;
  code.sched = sched;
  const int N = sched.horizon();
  code.enc1.assign(static_cast<std::size_t>(N), nullptr);
  code.enc2.assign(static_cast<std::size_t>(N), nullptr);
  for (int i = 0; i < N; ++i) {
    if (sched.c1[static_cast<std::size_t>(i)]) {
      std::vector<int> rad = coords_radices(dims, 1, history_coords(sched, 1, i, dims.n));
      std::size_t cells = checked_cell_count(rad, "random_general_code encoder");
      std::vector<int> table(cells);
      for (auto& t : table) t = rng.next_below(dims.i1);
      code.enc1[static_cast<std::size_t>(i)] = std::make_shared<TableEncoder>(std::move(rad), std::move(table));
    }
    if (sched.c2[static_cast<std::size_t>(i)]) {
      std::vector<int> rad = coords_radices(dims, 2, history_coords(sched, 2, i, dims.n));
      std::size_t cells = checked_cell_count(rad, "random_general_code encoder");
      std::vector<int> table(cells);
      for (auto& t : table) t = rng.next_below(dims.i2);
      code.enc2[static_cast<std::size_t>(i)] = std::make_shared<TableEncoder>(std::move(rad), std::move(table));
    }
  }
  for (int user : {1, 2}) {
    std::vector<int> rad = coords_radices(dims, user, history_coords(sched, user, N, dims.n));
    std::size_t cells = checked_cell_count(rad, "random_general_code decoder");
    const int letter = (user == 1) ? dims.xh2 : dims.xh1;
    std::size_t blocks = 1;
    for (int t = 0; t < dims.n; ++t) blocks *= static_cast<std::size_t>(letter);
    std::vector<int> table(cells);
    for (auto& t : table) t = static_cast<int>(rng.next_below(static_cast<int>(blocks)));
    auto dec = std::make_shared<TableDecoder>(std::move(rad), dims.n, letter, std::move(table));
    if (user == 1)
      code.dec1 = dec;
    else
      code.dec2 = dec;
  }
  code.validate();
  return code;
}

inline StaggeredCode random_staggered_code(const CodeDims& dims, const std::vector<int>& round_lengths, Rng& rng) {
  dims.validate();
  StaggeredCode code;
  code.dims = dims;
  code.round_lengths = round_lengths;
  const int q = code.rounds();
  if (q < 2 || q % 2 != 0) throw std::invalid_argument("random_staggered_code: round count must be even and >= 2");
  for (int k = 0; k < q; ++k) {
    const bool user1 = (k % 2 == 0);
    std::vector<int> rad = code.round_history_radices(k);
    std::size_t cells = checked_cell_count(rad, "random_staggered_code round table");
    std::size_t blocks = 1;
    for (int t = 0; t < code.round_lengths[static_cast<std::size_t>(k)]; ++t) blocks *= static_cast<std::size_t>(user1 ? dims.i1 : dims.i2);
    std::vector<int> table(cells);
    for (auto& t : table) t = static_cast<int>(rng.next_below(static_cast<int>(blocks)));
    code.round_tables.push_back(std::move(table));
  }
  for (int user : {1, 2}) {
    std::vector<int> rad = code.decoder_history_radices(user);
    std::size_t cells = checked_cell_count(rad, "random_staggered_code decoder table");
    const int letter = (user == 1) ? dims.xh2 : dims.xh1;
    std::size_t blocks = 1;
    for (int t = 0; t < dims.n; ++t) blocks *= static_cast<std::size_t>(letter);
    std::vector<int> table(cells);
    for (auto& t : table) t = static_cast<int>(rng.next_below(static_cast<int>(blocks)));
    if (user == 1)
      code.dec1_table = std::move(table);
    else
      code.dec2_table = std::move(table);
  }
  code.validate();
  return code;
}

}  // namespace twoway
