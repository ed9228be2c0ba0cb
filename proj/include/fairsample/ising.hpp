#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairsample/common.hpp"

namespace fairsample {

struct Coupler {
  int i = 0;
  int j = 0;
  double value = 0.0;
  friend bool operator==(const Coupler&, const Coupler&) = default;
};

struct LocalField {
  int site = 0;
  double value = 0.0;
  friend bool operator==(const LocalField&, const LocalField&) = default;
};

struct LatticeInfo {
  int L = 0;
  bool periodic = true;
  friend bool operator==(const LatticeInfo&, const LatticeInfo&) = default;
};

/// Classical Ising cost function H = -sum J_ij s_i s_j - sum h_i s_i.
/// Couplers are stored canonically: i < j, sorted, unique, nonzero.
class ProblemInstance {
 public:
  static constexpr int max_spins = 64;

  ProblemInstance() = default;

  ProblemInstance(int n_spins, std::vector<Coupler> couplers, std::vector<LocalField> fields = {},
                  std::optional<LatticeInfo> lattice = std::nullopt)
      : n_spins_(n_spins), couplers_(std::move(couplers)), fields_(std::move(fields)), lattice_(lattice) {
    require(n_spins_ >= 1 && n_spins_ <= max_spins, ErrorKind::invalid_argument,
            "n_spins must be in [1, 64]");
    for (auto& c : couplers_) {
      if (c.i > c.j) std::swap(c.i, c.j);
      require(c.i >= 0 && c.j < n_spins_ && c.i != c.j, ErrorKind::invalid_argument,
              "coupler site index out of range or self-coupling");
      require(std::isfinite(c.value) && c.value != 0.0, ErrorKind::invalid_argument,
              "coupler values must be finite and nonzero");
    }
    std::sort(couplers_.begin(), couplers_.end(),
              [](const Coupler& a, const Coupler& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
    for (std::size_t k = 1; k < couplers_.size(); ++k)
      require(couplers_[k].i != couplers_[k - 1].i || couplers_[k].j != couplers_[k - 1].j,
              ErrorKind::invalid_argument, "duplicate coupler pair");
    for (const auto& f : fields_) {
      require(f.site >= 0 && f.site < n_spins_, ErrorKind::invalid_argument, "field site out of range");
      require(std::isfinite(f.value), ErrorKind::invalid_argument, "field values must be finite");
    }
    std::sort(fields_.begin(), fields_.end(), [](auto& a, auto& b) { return a.site < b.site; });
    for (std::size_t k = 1; k < fields_.size(); ++k)
      require(fields_[k].site != fields_[k - 1].site, ErrorKind::invalid_argument, "duplicate field site");
  }

  int n_spins() const { return n_spins_; }
  const std::vector<Coupler>& couplers() const { return couplers_; }
  const std::vector<LocalField>& fields() const { return fields_; }
  const std::optional<LatticeInfo>& lattice() const { return lattice_; }

  // Zero-valued fields do not count; they do not break the spin-flip symmetry.
  bool has_fields() const {
    return std::any_of(fields_.begin(), fields_.end(), [](auto& f) { return f.value != 0.0; });
  }

  double coupler(int i, int j) const {
    if (i > j) std::swap(i, j);
    for (const auto& c : couplers_)
      if (c.i == i && c.j == j) return c.value;
    return 0.0;
  }

  double field(int i) const {
    for (const auto& f : fields_)
      if (f.site == i) return f.value;
    return 0.0;
  }

  // Sum of |J| and |h|; sets the scale of energy-comparison tolerances.
  double energy_scale() const {
    double s = 0.0;
    for (const auto& c : couplers_) s += std::abs(c.value);
    for (const auto& f : fields_) s += std::abs(f.value);
    return s;
  }

  /// Copy with coupler (i, j) set to value; value 0 removes it.
  ProblemInstance with_coupler(int i, int j, double value) const {
    if (i > j) std::swap(i, j);
    std::vector<Coupler> cs;
    for (const auto& c : couplers_)
      if (!(c.i == i && c.j == j)) cs.push_back(c);
    if (value != 0.0) cs.push_back({i, j, value});
    return ProblemInstance(n_spins_, std::move(cs), fields_, lattice_);
  }

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;

 private:
  int n_spins_ = 1;
  std::vector<Coupler> couplers_;
  std::vector<LocalField> fields_;
  std::optional<LatticeInfo> lattice_;
};

/// z-basis configuration; bit i set means site i is up (sigma_z = +1).
struct SpinConfig {
  Word bits = 0;
  bool up(int i) const { return (bits >> i) & 1U; }
  int spin(int i) const { return up(i) ? 1 : -1; }
  auto operator<=>(const SpinConfig&) const = default;
};

inline SpinConfig flip_all(SpinConfig c, int n_spins) { return {c.bits ^ low_mask(n_spins)}; }

/// "u"/"d" per site, site 0 first.
inline std::string to_bitstring(SpinConfig c, int n_spins) {
  std::string s(static_cast<std::size_t>(n_spins), 'd');
  for (int i = 0; i < n_spins; ++i)
    if (c.up(i)) s[static_cast<std::size_t>(i)] = 'u';
  return s;
}

inline SpinConfig from_bitstring(std::string_view s) {
  require(!s.empty() && s.size() <= 64, ErrorKind::invalid_argument, "bitstring length must be in [1, 64]");
  SpinConfig c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(s[i] == 'u' || s[i] == 'd', ErrorKind::invalid_argument, "bitstring characters must be 'u' or 'd'");
    if (s[i] == 'u') c.bits |= Word{1} << i;
  }
  return c;
}

/// Compressed adjacency for local-field updates.
struct NeighborTable {
  std::vector<int> offsets;  // size n + 1
  std::vector<int> sites;
  std::vector<double> couplings;
  std::vector<double> fields;

  explicit NeighborTable(const ProblemInstance& inst) {
    const int n = inst.n_spins();
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    for (const auto& c : inst.couplers()) {
      ++degree[static_cast<std::size_t>(c.i)];
      ++degree[static_cast<std::size_t>(c.j)];
    }
    offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i) offsets[static_cast<std::size_t>(i) + 1] = offsets[static_cast<std::size_t>(i)] + degree[static_cast<std::size_t>(i)];
    sites.resize(static_cast<std::size_t>(offsets.back()));
    couplings.resize(sites.size());
    std::vector<int> fill(offsets.begin(), offsets.end() - 1);
    for (const auto& c : inst.couplers()) {
      auto a = static_cast<std::size_t>(fill[static_cast<std::size_t>(c.i)]++);
      sites[a] = c.j;
      couplings[a] = c.value;
      auto b = static_cast<std::size_t>(fill[static_cast<std::size_t>(c.j)]++);
      sites[b] = c.i;
      couplings[b] = c.value;
    }
    fields.assign(static_cast<std::size_t>(n), 0.0);
    for (const auto& f : inst.fields()) fields[static_cast<std::size_t>(f.site)] = f.value;
  }

  int n() const { return static_cast<int>(offsets.size()) - 1; }

  // sum_j J_ij s_j + h_i
  double local_field(Word bits, int i) const {
    double f = fields[static_cast<std::size_t>(i)];
    for (int a = offsets[static_cast<std::size_t>(i)]; a < offsets[static_cast<std::size_t>(i) + 1]; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      f += ((bits >> sites[ua]) & 1U) ? couplings[ua] : -couplings[ua];
    }
    return f;
  }
};

inline double energy(const ProblemInstance& inst, SpinConfig config) {
  double e = 0.0;
  for (const auto& c : inst.couplers()) e -= c.value * config.spin(c.i) * config.spin(c.j);
  for (const auto& f : inst.fields()) e -= f.value * config.spin(f.site);
  return e;
}

struct GroundStateSet {
  int n_spins = 0;
  double energy = 0.0;
  std::vector<SpinConfig> states;  // ascending, unique
  bool gauge = false;

  std::size_t size() const { return states.size(); }
  friend bool operator==(const GroundStateSet&, const GroundStateSet&) = default;
};

/// Full set from a gauge-reduced one (adds the spin-reversed partner of every state).
inline GroundStateSet expand_gauge(const GroundStateSet& set) {
  if (!set.gauge) return set;
  GroundStateSet out = set;
  out.gauge = false;
  for (auto s : set.states) out.states.push_back(flip_all(s, set.n_spins));
  std::sort(out.states.begin(), out.states.end());
  out.states.erase(std::unique(out.states.begin(), out.states.end()), out.states.end());
  return out;
}

inline double degeneracy_tolerance(const ProblemInstance& inst) { return 1e-9 * (1.0 + inst.energy_scale()); }

inline constexpr int max_enumeration_spins = 30;

/// Exact ground states by a Gray-code sweep with incremental energy updates.
/// With gauge_reduce, spin 0 is pinned up and only that half of the Z2 orbit is returned.
inline GroundStateSet enumerate_ground_states(const ProblemInstance& inst, bool gauge_reduce = false) {
  const int n = inst.n_spins();
  require(n <= max_enumeration_spins, ErrorKind::size_limit, "enumeration is limited to 30 spins");
  require(!(gauge_reduce && inst.has_fields()), ErrorKind::gauge,
          "gauge reduction requires an instance without local fields");

  const NeighborTable nb(inst);
  const double tol = degeneracy_tolerance(inst);
  const int first_free = gauge_reduce ? 1 : 0;
  const int free_bits = n - first_free;
  const Word base = gauge_reduce ? Word{1} : Word{0};

  Word bits = base;
  double e = energy(inst, SpinConfig{bits});
  double best = e;
  std::vector<Word> candidates{bits};

  auto prune = [&] {
    std::erase_if(candidates, [&](Word w) {
      // Candidates carry exact energies only at the end, so prune against the running minimum.
      return energy(inst, SpinConfig{w}) > best + tol;
    });
  };

  const std::uint64_t total = std::uint64_t{1} << free_bits;
  constexpr std::uint64_t resync_period = 1U << 16;
  for (std::uint64_t k = 1; k < total; ++k) {
    const int site = first_free + std::countr_zero(k);
    // dE = 2 s_i f_i, with s_i the value before the flip.
    const double f = nb.local_field(bits, site);
    const double s = ((bits >> site) & 1U) ? 1.0 : -1.0;
    e += 2.0 * s * f;
    bits ^= Word{1} << site;
    if ((k & (resync_period - 1)) == 0) e = energy(inst, SpinConfig{bits});

    if (e < best - tol) {
      best = e;
      prune();
      candidates.push_back(bits);
    } else if (e <= best + tol) {
      candidates.push_back(bits);
      if (e < best) {
        best = e;
        prune();
      }
    }
  }

  // Finalize on directly evaluated energies.
  double emin = std::numeric_limits<double>::infinity();
  for (Word w : candidates) emin = std::min(emin, energy(inst, SpinConfig{w}));
  GroundStateSet out;
  out.n_spins = n;
  out.gauge = gauge_reduce;
  out.energy = emin;
  for (Word w : candidates)
    if (energy(inst, SpinConfig{w}) <= emin + tol) out.states.push_back(SpinConfig{w});
  std::sort(out.states.begin(), out.states.end());
  out.states.erase(std::unique(out.states.begin(), out.states.end()), out.states.end());
  return out;
}

/// Relabels sites: site i of the input becomes site perm[i].
inline SpinConfig permute_config(SpinConfig c, std::span<const int> perm) {
  SpinConfig out;
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (c.up(static_cast<int>(i))) out.bits |= Word{1} << perm[i];
  return out;
}

inline ProblemInstance permute_instance(const ProblemInstance& inst, std::span<const int> perm) {
  require(static_cast<int>(perm.size()) == inst.n_spins(), ErrorKind::dimension_mismatch,
          "permutation size must equal n_spins");
  std::vector<Coupler> cs;
  for (const auto& c : inst.couplers()) cs.push_back({perm[static_cast<std::size_t>(c.i)], perm[static_cast<std::size_t>(c.j)], c.value});
  std::vector<LocalField> fs;
  for (const auto& f : inst.fields()) fs.push_back({perm[static_cast<std::size_t>(f.site)], f.value});
  return ProblemInstance(inst.n_spins(), std::move(cs), std::move(fs));
}

inline const std::vector<double>& default_coupler_values() {
  static const std::vector<double> values{-4, -2, -1, 1, 2, 4};
  return values;
}

/// L x L periodic square lattice. Repeated (i, j) pairs (L = 2) are merged by summing J;
/// pairs whose merged value is zero are dropped.
inline ProblemInstance generate_lattice_instance(int L, std::span<const double> coupler_values, std::uint64_t seed) {
  require(L >= 2 && L * L <= ProblemInstance::max_spins, ErrorKind::invalid_argument, "lattice size L must be in [2, 8]");
  require(!coupler_values.empty(), ErrorKind::invalid_argument, "coupler value set is empty");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, coupler_values.size() - 1);

  const int n = L * L;
  std::vector<double> merged(static_cast<std::size_t>(n * n), 0.0);
  auto add = [&](int a, int b, double v) {
    if (a > b) std::swap(a, b);
    merged[static_cast<std::size_t>(a * n + b)] += v;
  };
  for (int r = 0; r < L; ++r) {
    for (int c = 0; c < L; ++c) {
      const int site = r * L + c;
      add(site, r * L + (c + 1) % L, coupler_values[pick(rng)]);
      add(site, ((r + 1) % L) * L + c, coupler_values[pick(rng)]);
    }
  }
  std::vector<Coupler> cs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (double v = merged[static_cast<std::size_t>(a * n + b)]; v != 0.0) cs.push_back({a, b, v});
  return ProblemInstance(n, std::move(cs), {}, LatticeInfo{L, true});
}

struct MiningResult {
  std::vector<ProblemInstance> instances;
  std::vector<std::uint64_t> seeds;  // per-instance generator seed
  std::uint64_t attempts = 0;
  bool exhausted = false;  // fewer than requested were found
};

/// Draws lattice instances until `count` have exactly target_degeneracy ground states
/// (full count, no gauge reduction) or max_attempts is reached.
inline MiningResult mine_instances(int L, int target_degeneracy, int count, std::uint64_t max_attempts,
                                   std::uint64_t seed,
                                   std::span<const double> coupler_values = default_coupler_values()) {
  require(L >= 2 && L <= 5, ErrorKind::size_limit, "mining requires L <= 5 for exact enumeration");
  require(count >= 0 && target_degeneracy >= 1, ErrorKind::invalid_argument, "count and degeneracy must be positive");
  MiningResult result;
  const std::size_t batch = std::max(1u, std::thread::hardware_concurrency()) * 4;
  std::uint64_t next = 0;
  while (static_cast<int>(result.instances.size()) < count && next < max_attempts) {
    const std::size_t this_batch = static_cast<std::size_t>(std::min<std::uint64_t>(batch, max_attempts - next));
    std::vector<std::optional<ProblemInstance>> found(this_batch);
    parallel_for(this_batch, [&](std::size_t b) {
      auto inst = generate_lattice_instance(L, coupler_values, derive_seed(seed, next + b));
      if (static_cast<int>(enumerate_ground_states(inst).size()) == target_degeneracy) found[b] = std::move(inst);
    });
    for (std::size_t b = 0; b < this_batch; ++b) {
      if (static_cast<int>(result.instances.size()) == count) break;
      result.attempts = next + b + 1;
      if (found[b]) {
        result.instances.push_back(std::move(*found[b]));
        result.seeds.push_back(derive_seed(seed, next + b));
      }
    }
    next += this_batch;
  }
  result.exhausted = static_cast<int>(result.instances.size()) < count;
  return result;
}

}  // namespace fairsample
