#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fairsample/driver.hpp"
#include "fairsample/io.hpp"
#include "fairsample/ising.hpp"

namespace fairsample {

/// Linear ramp of one control value over `steps` sweeps: sweep k uses
/// start + (end - start) * k / (steps - 1); a single step uses `end`.
struct Schedule {
  int steps = 1000;
  double start = 0.0;
  double end = 1.0;

  double value(int k) const {
    if (steps <= 1) return end;
    return start + (end - start) * static_cast<double>(k) / static_cast<double>(steps - 1);
  }
  void validate() const {
    require(steps >= 1, ErrorKind::invalid_argument, "schedule needs at least one step");
    require(std::isfinite(start) && std::isfinite(end), ErrorKind::invalid_argument, "schedule values must be finite");
  }
};

inline Schedule default_sa_schedule() { return Schedule{1000, 0.1, 5.0}; }

// One sequential-order Metropolis sweep at inverse temperature beta.
inline void metropolis_sweep(const NeighborTable& nb, Word& bits, double beta, std::mt19937_64& rng) {
  for (int i = 0; i < nb.n(); ++i) {
    const double s = ((bits >> i) & 1U) ? 1.0 : -1.0;
    const double de = 2.0 * s * nb.local_field(bits, i);
    if (de <= 0.0 || static_cast<double>(rng() >> 11) * 0x1.0p-53 < std::exp(-beta * de)) bits ^= Word{1} << i;
  }
}

/// Simulated annealing: sequential single-spin Metropolis sweeps while beta ramps linearly
/// from schedule.start to schedule.end. Starts from a uniformly random configuration.
inline SpinConfig sa_run(const ProblemInstance& inst, const Schedule& schedule, std::uint64_t seed) {
  schedule.validate();
  const NeighborTable nb(inst);
  std::mt19937_64 rng(seed);
  Word bits = rng() & low_mask(inst.n_spins());
  for (int k = 0; k < schedule.steps; ++k) metropolis_sweep(nb, bits, schedule.value(k), rng);
  return SpinConfig{bits};
}

struct PairTerm {
  int j = 0;
  int k = 0;
  double K = 0.0;
  friend bool operator==(const PairTerm&, const PairTerm&) = default;
};

/// Stoquastic driver restricted to orders <= 2:
/// H_D = -sum_i gamma_i sigma^x_i - sum_p K_p sigma^x_j sigma^x_k with gamma_i, K_p >= 0.
struct SqaDriver {
  std::vector<double> gamma;  // per site
  std::vector<PairTerm> pairs;

  void validate(int n_spins) const {
    require(static_cast<int>(gamma.size()) == n_spins, ErrorKind::invalid_argument, "one transverse amplitude per site");
    for (double g : gamma) require(g >= 0.0 && std::isfinite(g), ErrorKind::invalid_argument, "gamma must be >= 0");
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto& t = pairs[p];
      require(t.j >= 0 && t.k < n_spins && t.j < t.k, ErrorKind::invalid_argument, "invalid driver pair");
      require(t.K >= 0.0 && std::isfinite(t.K), ErrorKind::invalid_argument, "pair amplitudes must be >= 0");
      require(p == 0 || std::pair(pairs[p - 1].j, pairs[p - 1].k) < std::pair(t.j, t.k), ErrorKind::invalid_argument,
              "driver pairs must be sorted and unique");
    }
  }

  /// From a stoquastic DriverSpec with terms of order <= 2.
  static SqaDriver from_spec(const DriverSpec& spec, int n_spins) {
    require(spec.sign() == DriverSign::stoquastic, ErrorKind::invalid_argument,
            "path-integral sampling requires a stoquastic driver");
    require(spec.max_order() <= 2, ErrorKind::invalid_argument, "path-integral driver supports orders <= 2");
    SqaDriver d;
    d.gamma.assign(static_cast<std::size_t>(n_spins), 0.0);
    for (const auto& t : spec.flip_terms(n_spins)) {
      require(t.amplitude <= 0.0, ErrorKind::invalid_argument, "driver amplitudes must be non-negative");
      if (popcount(t.mask) == 1) {
        d.gamma[static_cast<std::size_t>(std::countr_zero(t.mask))] = -t.amplitude;
      } else {
        const int j = std::countr_zero(t.mask);
        const int k = 63 - std::countl_zero(t.mask);
        d.pairs.push_back({j, k, -t.amplitude});
      }
    }
    std::sort(d.pairs.begin(), d.pairs.end(), [](auto& a, auto& b) { return std::pair(a.j, a.k) < std::pair(b.j, b.k); });
    d.validate(n_spins);
    return d;
  }

  /// Uniform gamma on every site and uniform K on the declared pairs (default: coupler edges).
  static SqaDriver uniform(const ProblemInstance& inst, double gamma, double K,
                           std::optional<std::vector<std::pair<int, int>>> pairs = std::nullopt) {
    SqaDriver d;
    d.gamma.assign(static_cast<std::size_t>(inst.n_spins()), gamma);
    if (K != 0.0) {
      std::vector<std::pair<int, int>> ps;
      if (pairs) {
        ps = *pairs;
      } else {
        for (const auto& c : inst.couplers()) ps.emplace_back(c.i, c.j);
      }
      require(!ps.empty(), ErrorKind::invalid_argument, "K > 0 needs at least one declared driver pair");
      for (auto [j, k] : ps) {
        if (j > k) std::swap(j, k);
        d.pairs.push_back({j, k, K});
      }
      std::sort(d.pairs.begin(), d.pairs.end(), [](auto& a, auto& b) { return std::pair(a.j, a.k) < std::pair(b.j, b.k); });
    }
    d.validate(inst.n_spins());
    return d;
  }
};

/// Discrete imaginary-time path of the Trotterized partition function of
/// H(s) = (1 - s) H_D + s H_P at inverse temperature beta with M blocks of dtau = beta / M.
///
/// Each block is [A-boundary, one B-sub-boundary per driver pair, P-slice]. Across the
/// A-boundary any spin may flip (cosh/sinh of dtau (1-s) gamma_i); across the B-boundary of
/// pair (j, k) both spins flip or neither (sinh/cosh of dtau (1-s) K); the P-slice carries
/// exp(-dtau s E_P). Spin i is stored only on the segments between the boundaries that can
/// change it: deg_i + 1 segments per block, the last of which holds the P-slice. Storage is
/// block-major so a P-slice and its neighbors share a cache line.
class Worldline {
 public:
  Worldline(const ProblemInstance& inst, SqaDriver driver, int slices, double beta)
      : driver_(std::move(driver)), n_(inst.n_spins()), m_(slices), beta_(beta) {
    require(slices >= 2, ErrorKind::invalid_argument, "need at least two Trotter slices");
    require(beta > 0.0 && std::isfinite(beta), ErrorKind::invalid_argument, "beta must be positive");
    driver_.validate(n_);
    const auto n = static_cast<std::size_t>(n_);
    std::vector<std::vector<int>> pairs_of(n);
    for (std::size_t p = 0; p < driver_.pairs.size(); ++p) {
      pairs_of[static_cast<std::size_t>(driver_.pairs[p].j)].push_back(static_cast<int>(p));
      pairs_of[static_cast<std::size_t>(driver_.pairs[p].k)].push_back(static_cast<int>(p));
    }
    start_.resize(n);
    last_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      start_[i] = width_;
      last_[i] = static_cast<int>(pairs_of[i].size());
      width_ += last_[i] + 1;
    }
    for (std::size_t p = 0; p < driver_.pairs.size(); ++p) {
      auto after = [&](int site) {
        const auto& list = pairs_of[static_cast<std::size_t>(site)];
        const auto r = std::find(list.begin(), list.end(), static_cast<int>(p)) - list.begin() + 1;
        return start_[static_cast<std::size_t>(site)] + static_cast<int>(r);
      };
      pair_cells_.push_back({after(driver_.pairs[p].j), after(driver_.pairs[p].k)});
      pair_j_.push_back(inst.coupler(driver_.pairs[p].j, driver_.pairs[p].k));
    }
    const NeighborTable nb(inst);
    fields_ = nb.fields;
    nb_offsets_ = nb.offsets;
    nb_couplings_ = nb.couplings;
    for (int s : nb.sites) nb_cells_.push_back(cell(s));
    values_.assign(static_cast<std::size_t>(width_) * static_cast<std::size_t>(m_), -1);
    set_schedule(0.0);
  }

  int n_spins() const { return n_; }
  int slices() const { return m_; }
  double dtau() const { return beta_ / m_; }
  const SqaDriver& driver() const { return driver_; }
  int segments(int i) const { return last(i) + 1; }
  int last(int i) const { return last_[static_cast<std::size_t>(i)]; }
  double s() const { return s_; }

  std::int8_t& at(int i, int m, int r) { return block(wrap(m))[start_[static_cast<std::size_t>(i)] + r]; }
  std::int8_t at(int i, int m, int r) const { return block(wrap(m))[start_[static_cast<std::size_t>(i)] + r]; }
  const std::vector<std::int8_t>& raw() const { return values_; }
  void set_raw(std::span<const std::int8_t> v) {
    require(v.size() == values_.size(), ErrorKind::dimension_mismatch, "worldline size mismatch");
    std::copy(v.begin(), v.end(), values_.begin());
  }

  /// Classical configuration replicated on every segment (no flips anywhere).
  void set_classical(Word bits) {
    for (int m = 0; m < m_; ++m)
      for (int i = 0; i < n_; ++i)
        std::fill_n(block(m) + start_[static_cast<std::size_t>(i)], segments(i), ((bits >> i) & 1U) ? 1 : -1);
  }

  void set_schedule(double s) {
    s_ = s;
    const double w = dtau() * (1.0 - s);
    tanh_a_.resize(static_cast<std::size_t>(n_));
    inv_a_.resize(static_cast<std::size_t>(n_));
    for (std::size_t i = 0; i < tanh_a_.size(); ++i) {
      tanh_a_[i] = std::tanh(w * driver_.gamma[i]);
      inv_a_[i] = 1.0 / tanh_a_[i];
    }
    tanh_b_.resize(driver_.pairs.size());
    inv_b_.resize(driver_.pairs.size());
    for (std::size_t p = 0; p < driver_.pairs.size(); ++p) {
      tanh_b_[p] = std::tanh(w * driver_.pairs[p].K);
      inv_b_[p] = 1.0 / tanh_b_[p];
    }
  }

  /// z-configuration at the P-slice of block m.
  Word slice_config(int m) const {
    const auto* b = block(wrap(m));
    Word bits = 0;
    for (int i = 0; i < n_; ++i)
      if (b[cell(i)] > 0) bits |= Word{1} << i;
    return bits;
  }

  // Flip events.
  bool a_event(int i, int m) const { return block(wrap(m - 1))[cell(i)] != block(wrap(m))[start_[static_cast<std::size_t>(i)]]; }
  bool b_event(int p, int m) const {
    const auto* b = block(wrap(m));
    const int c = pair_cells_[static_cast<std::size_t>(p)].first;
    return b[c - 1] != b[c];
  }

  /// Every pair sub-boundary has both spins flipping or neither.
  bool valid() const {
    for (const auto& [cj, ck] : pair_cells_)
      for (int m = 0; m < m_; ++m) {
        const auto* b = block(m);
        if ((b[cj - 1] != b[cj]) != (b[ck - 1] != b[ck])) return false;
      }
    return true;
  }

  /// Weight ratio new/old of a proposed move; factors of tanh(0) are tracked as powers of
  /// zero so that moves out of zero-weight states are accepted without NaNs.
  struct Ratio {
    double value = 1.0;
    int zero_power = 0;

    void toggle(bool becomes_present, double t) {
      if (t == 0.0)
        zero_power += becomes_present ? 1 : -1;
      else
        value *= becomes_present ? t : 1.0 / t;
    }
    void toggle(bool becomes_present, double t, double inv_t) {
      if (t == 0.0)
        zero_power += becomes_present ? 1 : -1;
      else
        value *= becomes_present ? t : inv_t;
    }
    bool accept(double u) const {
      if (zero_power > 0) return false;
      if (zero_power < 0) return true;
      return u < value;
    }
  };

  // Move (a): spin i over one block, from A_m to A_{m+1}; pair events inside are preserved.
  Ratio ratio_block(int i, int m) const { return with_energy(kinks_block(i, wrap(m)), flip_energy(i, wrap(m))); }
  void apply_block(int i, int m) {
    auto* b = block(wrap(m));
    negate(b + start_[static_cast<std::size_t>(i)], segments(i));
  }

  // Move (b1): both spins of pair p from B_p in block m to A_{m+1}.
  Ratio ratio_pair_to_a(int p, int m) const { return with_energy(kinks_pair_to_a(p, wrap(m)), pair_flip_energy(p, wrap(m))); }
  void apply_pair_to_a(int p, int m) {
    auto* b = block(wrap(m));
    const auto& t = driver_.pairs[static_cast<std::size_t>(p)];
    const auto [cj, ck] = pair_cells_[static_cast<std::size_t>(p)];
    negate(b + cj, cell(t.j) - cj + 1);
    negate(b + ck, cell(t.k) - ck + 1);
  }

  // Move (b2): both spins of pair p from B_p in block m to B_p in block m + 1.
  Ratio ratio_pair_to_pair(int p, int m) const {
    return with_energy(kinks_pair_to_pair(p, wrap(m)), pair_flip_energy(p, wrap(m)));
  }
  void apply_pair_to_pair(int p, int m) {
    m = wrap(m);
    auto* b = block(m);
    auto* next = block(m + 1 == m_ ? 0 : m + 1);
    const auto& t = driver_.pairs[static_cast<std::size_t>(p)];
    const auto [cj, ck] = pair_cells_[static_cast<std::size_t>(p)];
    const int sj = start_[static_cast<std::size_t>(t.j)], sk = start_[static_cast<std::size_t>(t.k)];
    negate(b + cj, cell(t.j) - cj + 1);
    negate(next + sj, cj - sj);
    negate(b + ck, cell(t.k) - ck + 1);
    negate(next + sk, ck - sk);
  }

  // Move (c): whole imaginary-time line of spin i.
  Ratio ratio_line(int i) const {
    double de = 0.0;
    for (int m = 0; m < m_; ++m) de += flip_energy(i, m);
    return with_energy(Ratio{}, de);
  }
  void apply_line(int i) {
    for (int m = 0; m < m_; ++m) negate(block(m) + start_[static_cast<std::size_t>(i)], segments(i));
  }

  /// One sweep at the current s: N*M block moves, P*M pair moves (variant chosen at random),
  /// then N line moves.
  void sweep(std::mt19937_64& rng) {
    for (int m = 0; m < m_; ++m)
      for (int i = 0; i < n_; ++i)
        if (metropolis(kinks_block(i, m), flip_energy(i, m), rng)) {
          apply_block(i, m);
          debug_check();
        }
    const int np = static_cast<int>(driver_.pairs.size());
    for (int m = 0; m < m_; ++m)
      for (int p = 0; p < np; ++p) {
        if (rng() >> 63) {
          if (metropolis(kinks_pair_to_a(p, m), pair_flip_energy(p, m), rng)) {
            apply_pair_to_a(p, m);
            debug_check();
          }
        } else if (metropolis(kinks_pair_to_pair(p, m), pair_flip_energy(p, m), rng)) {
          apply_pair_to_pair(p, m);
          debug_check();
        }
      }
    for (int i = 0; i < n_; ++i) {
      double de = 0.0;
      for (int m = 0; m < m_; ++m) de += flip_energy(i, m);
      if (metropolis(Ratio{}, de, rng)) apply_line(i);
    }
  }

  // dE_P at P-slice m when spin i flips.
  double flip_energy(int i, int m) const {
    const auto* b = block(m);
    const auto k = static_cast<std::size_t>(i);
    double f = fields_[k];
    for (int a = nb_offsets_[k]; a < nb_offsets_[k + 1]; ++a)
      f += nb_couplings_[static_cast<std::size_t>(a)] * b[nb_cells_[static_cast<std::size_t>(a)]];
    return 2.0 * b[cell(i)] * f;
  }

  double pair_flip_energy(int p, int m) const {
    const auto& t = driver_.pairs[static_cast<std::size_t>(p)];
    const auto* b = block(m);
    return flip_energy(t.j, m) + flip_energy(t.k, m) - 4.0 * pair_j_[static_cast<std::size_t>(p)] * b[cell(t.j)] * b[cell(t.k)];
  }

 private:
  int wrap(int m) const { return ((m % m_) + m_) % m_; }
  int cell(int i) const { return start_[static_cast<std::size_t>(i)] + last_[static_cast<std::size_t>(i)]; }
  std::int8_t* block(int m) { return values_.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(width_); }
  const std::int8_t* block(int m) const {
    return values_.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(width_);
  }
  static void negate(std::int8_t* p, int count) {
    for (int k = 0; k < count; ++k) p[k] = static_cast<std::int8_t>(-p[k]);
  }
  void debug_check() const { assert(valid()); }

  Ratio kinks_block(int i, int m) const {
    const auto k = static_cast<std::size_t>(i);
    Ratio r;
    r.toggle(!a_event(i, m), tanh_a_[k], inv_a_[k]);
    r.toggle(!a_event(i, m + 1 == m_ ? 0 : m + 1), tanh_a_[k], inv_a_[k]);
    return r;
  }
  Ratio kinks_pair_to_a(int p, int m) const {
    const auto& t = driver_.pairs[static_cast<std::size_t>(p)];
    const int next = m + 1 == m_ ? 0 : m + 1;
    Ratio r;
    const auto q = static_cast<std::size_t>(p), j = static_cast<std::size_t>(t.j), k = static_cast<std::size_t>(t.k);
    r.toggle(!b_event(p, m), tanh_b_[q], inv_b_[q]);
    r.toggle(!a_event(t.j, next), tanh_a_[j], inv_a_[j]);
    r.toggle(!a_event(t.k, next), tanh_a_[k], inv_a_[k]);
    return r;
  }
  Ratio kinks_pair_to_pair(int p, int m) const {
    Ratio r;
    const auto q = static_cast<std::size_t>(p);
    r.toggle(!b_event(p, m), tanh_b_[q], inv_b_[q]);
    r.toggle(!b_event(p, m + 1 == m_ ? 0 : m + 1), tanh_b_[q], inv_b_[q]);
    return r;
  }
  Ratio with_energy(Ratio r, double de) const {
    r.value *= std::exp(-dtau() * s_ * de);
    return r;
  }
  // Draws only when the outcome is uncertain.
  bool metropolis(const Ratio& kinks, double de, std::mt19937_64& rng) const {
    if (kinks.zero_power != 0) return kinks.zero_power < 0;
    const double x = -dtau() * s_ * de;
    if (x >= 0.0 && kinks.value >= 1.0) return true;
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 < kinks.value * std::exp(x);
  }

  SqaDriver driver_;
  int n_;
  int m_;
  double beta_;
  double s_ = 0.0;
  int width_ = 0;                                // cells per block
  std::vector<int> start_;                       // first cell of each spin within a block
  std::vector<int> last_;                        // index of the P-slice segment
  std::vector<std::pair<int, int>> pair_cells_;  // cell right after B_p, for j and k
  std::vector<double> pair_j_;                   // J between the two spins of each pair
  std::vector<double> fields_;
  std::vector<int> nb_offsets_;
  std::vector<int> nb_cells_;
  std::vector<double> nb_couplings_;
  std::vector<std::int8_t> values_;
  std::vector<double> tanh_a_;
  std::vector<double> inv_a_;
  std::vector<double> tanh_b_;
  std::vector<double> inv_b_;
};

struct SqaParams {
  double beta = 8.0;
  int slices = 64;
  double gamma = 1.0;
  double K = 0.0;
  Schedule schedule{1000, 0.0, 1.0};  // s ramp
};

/// Path-integral SQA: s ramps over the schedule, one sweep per step; returns the
/// z-configuration of one uniformly chosen P-slice after the last sweep.
inline SpinConfig sqa_run(const ProblemInstance& inst, const SqaDriver& driver, double beta, int slices,
                          const Schedule& schedule, std::uint64_t seed) {
  schedule.validate();
  Worldline wl(inst, driver, slices, beta);
  std::mt19937_64 rng(seed);
  wl.set_classical(rng() & low_mask(inst.n_spins()));
  for (int k = 0; k < schedule.steps; ++k) {
    wl.set_schedule(std::clamp(schedule.value(k), 0.0, 1.0));
    wl.sweep(rng);
  }
  const int m = std::uniform_int_distribution<int>(0, slices - 1)(rng);
  return SpinConfig{wl.slice_config(m)};
}

struct FixedSEstimate {
  double energy = 0.0;  // <E_P> over P-slices
  double energy_stderr = 0.0;
  double correlation = 0.0;  // <s_a s_b> over P-slices
  double correlation_stderr = 0.0;
  int chains = 0;
};

/// Equilibrium estimates at fixed s from independent chains; error bars are the spread of
/// the per-chain means.
inline FixedSEstimate sqa_fixed_s(const ProblemInstance& inst, const SqaDriver& driver, double beta, int slices, double s,
                                  int sweeps, int burn_in, int chains, std::uint64_t seed,
                                  std::pair<int, int> sites = {0, 1}) {
  require(chains >= 2 && sweeps >= 1 && burn_in >= 0, ErrorKind::invalid_argument, "need >= 2 chains and >= 1 sweep");
  require(sites.first >= 0 && sites.second < inst.n_spins(), ErrorKind::invalid_argument, "correlation sites out of range");
  std::vector<double> e(static_cast<std::size_t>(chains)), c(static_cast<std::size_t>(chains));
  parallel_for(static_cast<std::size_t>(chains), [&](std::size_t k) {
    Worldline wl(inst, driver, slices, beta);
    std::mt19937_64 rng(derive_seed(seed, k));
    wl.set_classical(rng() & low_mask(inst.n_spins()));
    wl.set_schedule(s);
    for (int t = 0; t < burn_in; ++t) wl.sweep(rng);
    double se = 0.0, sc = 0.0;
    for (int t = 0; t < sweeps; ++t) {
      wl.sweep(rng);
      for (int m = 0; m < slices; ++m) {
        se += energy(inst, SpinConfig{wl.slice_config(m)});
        sc += wl.at(sites.first, m, wl.last(sites.first)) * wl.at(sites.second, m, wl.last(sites.second));
      }
    }
    const double norm = 1.0 / (static_cast<double>(sweeps) * slices);
    e[k] = se * norm;
    c[k] = sc * norm;
  });
  auto stats = [&](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double sum = 0.0, sq = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / n;
    for (double x : v) sq += (x - mean) * (x - mean);
    return std::pair(mean, std::sqrt(sq / (n - 1) / n));
  };
  FixedSEstimate out;
  std::tie(out.energy, out.energy_stderr) = stats(e);
  std::tie(out.correlation, out.correlation_stderr) = stats(c);
  out.chains = chains;
  return out;
}

enum class Engine { sa, sqa_x, sqa_xx };

inline std::string_view to_string(Engine e) {
  switch (e) {
    case Engine::sa: return "sa";
    case Engine::sqa_x: return "sqa-x";
    case Engine::sqa_xx: return "sqa-xx";
  }
  return "unknown";
}

inline Engine engine_from_string(std::string_view s) {
  if (s == "sa") return Engine::sa;
  if (s == "sqa-x") return Engine::sqa_x;
  if (s == "sqa-xx") return Engine::sqa_xx;
  throw Error(ErrorKind::invalid_argument, "unknown engine '" + std::string(s) + "'");
}

struct EngineParams {
  Schedule sa = default_sa_schedule();
  SqaParams sqa;
  double K = 1.0;  // pair amplitude for sqa-xx (sqa-x always uses K = 0)
};

inline json engine_params_json(Engine e, const EngineParams& p) {
  if (e == Engine::sa) return {{"beta_start", p.sa.start}, {"beta_end", p.sa.end}, {"sweeps", p.sa.steps}};
  return {{"beta", p.sqa.beta},
          {"slices", p.sqa.slices},
          {"gamma", p.sqa.gamma},
          {"K", e == Engine::sqa_xx ? p.K : 0.0},
          {"s_start", p.sqa.schedule.start},
          {"s_end", p.sqa.schedule.end},
          {"sweeps", p.sqa.schedule.steps},
          {"pairs", e == Engine::sqa_xx ? "coupler_edges" : "none"}};
}

struct SampleHistogram {
  std::string instance_id;
  Engine engine = Engine::sa;
  json params;
  int n_spins = 0;
  std::vector<SpinConfig> states;    // full ground-state set
  std::vector<std::uint64_t> counts;  // aligned with states
  std::uint64_t non_gs = 0;
  std::uint64_t runs = 0;
  std::uint64_t seed = 0;

  std::uint64_t gs_hits() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

/// Independent anneals with seeds derived from (seed, run index), binned against the exact
/// ground states; anything else lands in non_gs.
inline SampleHistogram sample_distribution(Engine engine, const ProblemInstance& inst, const GroundStateSet& ground_states,
                                           const EngineParams& params, std::uint64_t runs, std::uint64_t seed,
                                           std::string instance_id = {}) {
  const auto gs = expand_gauge(ground_states);
  SampleHistogram h;
  h.instance_id = std::move(instance_id);
  h.engine = engine;
  h.params = engine_params_json(engine, params);
  h.n_spins = inst.n_spins();
  h.states = gs.states;
  h.counts.assign(gs.size(), 0);
  h.runs = runs;
  h.seed = seed;

  std::optional<SqaDriver> driver;
  if (engine != Engine::sa)
    driver = SqaDriver::uniform(inst, params.sqa.gamma, engine == Engine::sqa_xx ? params.K : 0.0);

  std::vector<SpinConfig> results(runs);
  parallel_for(runs, [&](std::size_t r) {
    const auto run_seed = derive_seed(seed, r);
    results[r] = engine == Engine::sa
                     ? sa_run(inst, params.sa, run_seed)
                     : sqa_run(inst, *driver, params.sqa.beta, params.sqa.slices, params.sqa.schedule, run_seed);
  });
  for (auto c : results) {
    auto it = std::lower_bound(h.states.begin(), h.states.end(), c);
    if (it != h.states.end() && *it == c)
      ++h.counts[static_cast<std::size_t>(it - h.states.begin())];
    else
      ++h.non_gs;
  }
  return h;
}

/// Histogram over spin-0-up representatives with Z2 partners merged.
inline SampleHistogram fold_gauge(const SampleHistogram& h) {
  SampleHistogram out = h;
  out.states.clear();
  out.counts.clear();
  for (std::size_t i = 0; i < h.states.size(); ++i) {
    const SpinConfig rep = h.states[i].up(0) ? h.states[i] : flip_all(h.states[i], h.n_spins);
    auto it = std::lower_bound(out.states.begin(), out.states.end(), rep);
    const auto pos = it - out.states.begin();
    if (it == out.states.end() || *it != rep) {
      out.states.insert(it, rep);
      out.counts.insert(out.counts.begin() + pos, 0);
    }
    out.counts[static_cast<std::size_t>(pos)] += h.counts[i];
  }
  return out;
}

inline json histogram_to_json(const SampleHistogram& h) {
  json counts = json::object();
  for (std::size_t i = 0; i < h.states.size(); ++i) counts[to_bitstring(h.states[i], h.n_spins)] = h.counts[i];
  return {{"instance_id", h.instance_id}, {"engine", std::string(to_string(h.engine))},
          {"params", h.params},           {"counts", counts},
          {"non_gs", h.non_gs},           {"runs", h.runs},
          {"seed", h.seed}};
}

inline SampleHistogram histogram_from_json(const json& j) {
  SampleHistogram h;
  h.instance_id = j.at("instance_id").get<std::string>();
  h.engine = engine_from_string(j.at("engine").get<std::string>());
  h.params = j.at("params");
  for (const auto& [key, value] : j.at("counts").items()) {
    h.n_spins = static_cast<int>(key.size());
    h.states.push_back(from_bitstring(key));
    h.counts.push_back(value.get<std::uint64_t>());
  }
  // Object keys iterate in string order; restore ascending bit order.
  std::vector<std::size_t> idx(h.states.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return h.states[a] < h.states[b]; });
  std::vector<SpinConfig> st;
  std::vector<std::uint64_t> ct;
  for (auto i : idx) {
    st.push_back(h.states[i]);
    ct.push_back(h.counts[i]);
  }
  h.states = std::move(st);
  h.counts = std::move(ct);
  h.non_gs = j.at("non_gs").get<std::uint64_t>();
  h.runs = j.at("runs").get<std::uint64_t>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

struct RankCurve {
  std::size_t k = 0;
  std::vector<double> p_mean;    // rank 1 first
  std::vector<double> p_stderr;
  std::vector<double> ratios;    // per instance max/min
  double ratio_mean = 0.0;
  double ratio_stderr = 0.0;
  std::size_t instances = 0;     // instances with at least one ground-state hit
};

/// Max/min empirical ratio; an unseen state counts as half a hit so the ratio stays finite.
inline double max_min_ratio(std::span<const std::uint64_t> counts) {
  if (counts.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*hi == 0) return 1.0;
  return static_cast<double>(*hi) / std::max(0.5, static_cast<double>(*lo));
}

/// Per instance, ground-state probabilities conditioned on reaching a ground state are
/// sorted descending and averaged rank-wise across instances.
inline RankCurve rank_order_average(std::span<const SampleHistogram> hs) {
  RankCurve c;
  if (hs.empty()) return c;
  c.k = hs.front().states.size();
  for (const auto& h : hs)
    require(h.states.size() == c.k, ErrorKind::mixed_degeneracy, "histograms have different degeneracies");
  std::vector<std::vector<double>> sorted;
  for (const auto& h : hs) {
    const auto hits = h.gs_hits();
    if (hits == 0) continue;
    std::vector<double> p;
    for (auto n : h.counts) p.push_back(static_cast<double>(n) / static_cast<double>(hits));
    std::sort(p.begin(), p.end(), std::greater<>());
    sorted.push_back(std::move(p));
    c.ratios.push_back(max_min_ratio(h.counts));
  }
  c.instances = sorted.size();
  c.p_mean.assign(c.k, 0.0);
  c.p_stderr.assign(c.k, 0.0);
  if (sorted.empty()) return c;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t r = 0; r < c.k; ++r) {
    double sum = 0.0, sq = 0.0;
    for (const auto& p : sorted) {
      sum += p[r];
      sq += p[r] * p[r];
    }
    const double mean = sum / n;
    c.p_mean[r] = mean;
    c.p_stderr[r] = n > 1 ? std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1)) / n) : 0.0;
  }
  double sum = 0.0, sq = 0.0;
  for (double r : c.ratios) {
    sum += r;
    sq += r * r;
  }
  c.ratio_mean = sum / n;
  c.ratio_stderr = n > 1 ? std::sqrt(std::max(0.0, (sq - n * c.ratio_mean * c.ratio_mean) / (n - 1)) / n) : 0.0;
  return c;
}

inline std::string rank_curve_csv(const RankCurve& c) {
  std::string out = "rank,p_mean,p_stderr\n";
  for (std::size_t r = 0; r < c.p_mean.size(); ++r)
    out += std::to_string(r + 1) + ',' + format_double(c.p_mean[r]) + ',' + format_double(c.p_stderr[r]) + '\n';
  return out;
}

}  // namespace fairsample
