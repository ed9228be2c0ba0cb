#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fairsample/driver.hpp"
#include "fairsample/io.hpp"
#include "fairsample/ising.hpp"

namespace fairsample {

enum class Category { fair, soft, hard, highord };
enum class PerturbationOrder { first, second };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::fair: return "fair";
    case Category::soft: return "soft";
    case Category::hard: return "hard";
    case Category::highord: return "highord";
  }
  return "unknown";
}

inline Category category_from_string(std::string_view s) {
  if (s == "fair") return Category::fair;
  if (s == "soft") return Category::soft;
  if (s == "hard") return Category::hard;
  if (s == "highord") return Category::highord;
  throw Error(ErrorKind::invalid_argument, "unknown category '" + std::string(s) + "'");
}

inline std::string_view to_string(PerturbationOrder o) { return o == PerturbationOrder::first ? "first" : "second"; }

struct PredictTolerance {
  double eig_rel = 1e-9;     // eigenvalue grouping, relative to the largest |eigenvalue|
  double eig_abs = 1e-12;    // absolute floor of the grouping tolerance
  double trivial = 1e-12;    // V is trivial when max |V_ab| <= this
  double zero_probability = 1e-10;
  double fair_ratio = 1.0 - 1e-6;  // min/max ratio at or above this is fair
  double hard_ratio = 1e-2;        // min/max ratio at or below this is hard
};

/// Restriction of a perturbation to the degenerate ground-state subspace.
struct SubspaceMatrix {
  Eigen::MatrixXd V;
  std::vector<SpinConfig> basis;  // full ground-state set (never gauge-reduced)
  int n_spins = 0;
  PerturbationOrder order = PerturbationOrder::first;

  std::size_t size() const { return basis.size(); }
  bool trivial(double tol = PredictTolerance{}.trivial) const { return V.size() == 0 || V.cwiseAbs().maxCoeff() <= tol; }
};

struct SamplingPrediction {
  std::vector<SpinConfig> basis;
  int n_spins = 0;
  PerturbationOrder order = PerturbationOrder::first;
  std::vector<double> probabilities;  // empty when highord
  int multiplicity = 0;               // l, size of the lowest eigenspace
  double lowest_eigenvalue = 0.0;
  Category category = Category::highord;
  std::vector<bool> suppressed;  // p_i vanishes (outside the span of the lowest eigenspace)
  double ratio = 0.0;            // min p / max p
  bool projector_average = false;  // l > 1: probabilities are the normalized projector diagonal
  bool hard_zero = false;          // hard because some p_i == 0
  bool hard_ratio = false;         // hard by ratio only
};

/// First-order V_ab = <a|H_D|b>, built combinatorially from flip sets (no 2^N object).
/// A gauge-reduced set is expanded to its full Z2 orbit first.
inline SubspaceMatrix build_first_order_V(const GroundStateSet& states, const DriverSpec& driver) {
  const auto full = expand_gauge(states);
  require(full.size() >= 2, ErrorKind::invalid_argument, "subspace matrix needs at least two ground states");
  driver.validate(full.n_spins);
  const auto k = static_cast<Eigen::Index>(full.size());
  SubspaceMatrix m;
  m.basis = full.states;
  m.n_spins = full.n_spins;
  m.order = PerturbationOrder::first;
  m.V = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = a + 1; b < k; ++b) {
      const double v = driver.element(m.basis[static_cast<std::size_t>(a)].bits, m.basis[static_cast<std::size_t>(b)].bits);
      m.V(a, b) = v;
      m.V(b, a) = v;
    }
  return m;
}

inline constexpr int max_second_order_spins = 24;

/// Second-order V2_ab = sum_{k not in GS} <a|H_D|k><k|H_D|b> / (E_GS - E_k). Only excited
/// configurations reachable from a by one driver term are visited; those must also reach b.
/// Throws nontrivial_first_order when first order already governs the sampling.
inline SubspaceMatrix build_second_order_V(const GroundStateSet& states, const DriverSpec& driver,
                                           const ProblemInstance& inst, const PredictTolerance& tol = {}) {
  require(inst.n_spins() <= max_second_order_spins, ErrorKind::size_limit,
          "second-order sweep is limited to 24 spins");
  const auto full = expand_gauge(states);
  require(full.n_spins == inst.n_spins(), ErrorKind::dimension_mismatch, "ground states do not match the instance");
  const auto first = build_first_order_V(full, driver);
  require(first.trivial(tol.trivial), ErrorKind::nontrivial_first_order,
          "first-order subspace matrix is non-trivial; second order does not govern the sampling");

  const auto terms = driver.flip_terms(inst.n_spins());
  // E_GS comes from the instance so a set shared across coupler variants stays valid.
  const double e_gs = energy(inst, full.states.front());
  for (const auto& c : full.states)
    require(std::abs(energy(inst, c) - e_gs) <= degeneracy_tolerance(inst), ErrorKind::invalid_argument,
            "states are not degenerate under the given instance");
  std::unordered_map<Word, double> energies;
  auto excited_energy = [&](Word w) {
    auto it = energies.find(w);
    if (it != energies.end()) return it->second;
    const double e = energy(inst, SpinConfig{w});
    energies.emplace(w, e);
    return e;
  };
  auto in_gs = [&](Word w) { return std::binary_search(full.states.begin(), full.states.end(), SpinConfig{w}); };

  const auto k = static_cast<Eigen::Index>(full.size());
  SubspaceMatrix m;
  m.basis = full.states;
  m.n_spins = full.n_spins;
  m.order = PerturbationOrder::second;
  m.V = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Word wa = full.states[static_cast<std::size_t>(a)].bits;
    for (const auto& t : terms) {
      const Word mid = wa ^ t.mask;
      if (in_gs(mid)) continue;
      const double denom = e_gs - excited_energy(mid);
      for (Eigen::Index b = a; b < k; ++b) {
        const double second = driver.element(mid, full.states[static_cast<std::size_t>(b)].bits);
        if (second != 0.0) m.V(a, b) += t.amplitude * second / denom;
      }
    }
  }
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < a; ++b) m.V(a, b) = m.V(b, a);
  return m;
}

/// Category from a probability vector: fair when min/max ratio is 1 within tolerance,
/// hard when some state vanishes or the ratio is at or below 1:100, otherwise soft.
inline Category classify_probabilities(std::span<const double> p, const PredictTolerance& tol = {}) {
  if (p.empty()) return Category::highord;
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  if (*lo <= tol.zero_probability || *hi <= 0.0) return Category::hard;
  const double ratio = *lo / *hi;
  if (ratio >= tol.fair_ratio) return Category::fair;
  if (ratio <= tol.hard_ratio) return Category::hard;
  return Category::soft;
}

inline Category classify(const SamplingPrediction& pred, const PredictTolerance& tol = {}) {
  if (pred.probabilities.empty()) return Category::highord;
  return classify_probabilities(pred.probabilities, tol);
}

namespace detail {

inline void fill_statistics(SamplingPrediction& pred, const PredictTolerance& tol) {
  const auto& p = pred.probabilities;
  pred.suppressed.assign(p.size(), false);
  for (std::size_t i = 0; i < p.size(); ++i) pred.suppressed[i] = p[i] <= tol.zero_probability;
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  pred.ratio = *hi > 0.0 ? std::max(0.0, *lo) / *hi : 0.0;
  pred.category = classify_probabilities(p, tol);
  pred.hard_zero = std::any_of(pred.suppressed.begin(), pred.suppressed.end(), [](bool b) { return b; });
  pred.hard_ratio = pred.category == Category::hard && !pred.hard_zero;
}

}  // namespace detail

/// Sampling probabilities from the lowest eigenspace of V.
/// l == 1: p_i is the squared component of the lowest eigenvector.
/// l > 1: p_i is the normalized diagonal of the projector onto the lowest eigenspace; a
///        state with zero diagonal lies outside the span and is never reached.
/// Trivial V: highord with no probabilities.
inline SamplingPrediction predict(const SubspaceMatrix& m, const PredictTolerance& tol = {}) {
  SamplingPrediction pred;
  pred.basis = m.basis;
  pred.n_spins = m.n_spins;
  pred.order = m.order;
  if (m.trivial(tol.trivial)) {
    pred.category = Category::highord;
    return pred;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.V);
  require(es.info() == Eigen::Success, ErrorKind::invalid_argument, "eigendecomposition of V failed");
  const auto& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  const double group = std::max(tol.eig_abs, tol.eig_rel * scale);
  int l = 1;
  while (l < ev.size() && ev(l) - ev(0) <= group) ++l;

  pred.multiplicity = l;
  pred.lowest_eigenvalue = ev(0);
  pred.projector_average = l > 1;
  pred.probabilities.assign(m.size(), 0.0);
  for (int alpha = 0; alpha < l; ++alpha)
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      pred.probabilities[static_cast<std::size_t>(i)] += es.eigenvectors()(i, alpha) * es.eigenvectors()(i, alpha);
  for (auto& p : pred.probabilities) p /= l;
  detail::fill_statistics(pred, tol);
  return pred;
}

/// First-order prediction; when V is trivial and an instance is given, second order.
inline SamplingPrediction predict_escalating(const GroundStateSet& states, const DriverSpec& driver,
                                             const ProblemInstance* inst, const PredictTolerance& tol = {}) {
  auto first = build_first_order_V(states, driver);
  if (!first.trivial(tol.trivial) || inst == nullptr) return predict(first, tol);
  return predict(build_second_order_V(states, driver, *inst, tol), tol);
}

/// Folds a full-basis prediction onto spin-0-up representatives (p summed over Z2 pairs).
inline std::pair<std::vector<SpinConfig>, std::vector<double>> fold_gauge(const SamplingPrediction& pred) {
  std::vector<SpinConfig> reps;
  std::vector<double> p;
  for (std::size_t i = 0; i < pred.basis.size(); ++i) {
    SpinConfig s = pred.basis[i].up(0) ? pred.basis[i] : flip_all(pred.basis[i], pred.n_spins);
    auto it = std::lower_bound(reps.begin(), reps.end(), s);
    const auto pos = static_cast<std::size_t>(it - reps.begin());
    if (it == reps.end() || *it != s) {
      reps.insert(it, s);
      p.insert(p.begin() + static_cast<std::ptrdiff_t>(pos), 0.0);
    }
    if (!pred.probabilities.empty()) p[pos] += pred.probabilities[i];
  }
  if (pred.probabilities.empty()) p.clear();
  return {reps, p};
}

struct StudyRow {
  int n_spins = 0;
  int degeneracy = 0;
  int driver_order = 0;
  double fair = 0.0;
  double soft = 0.0;
  double hard = 0.0;
  double highord = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
  bool exhaustive = false;
  std::uint64_t hard_zero = 0;   // hard bucket composition, counts
  std::uint64_t hard_ratio = 0;
};

struct StudyOptions {
  int random_redraws = 0;  // > 0: average predictions over independently randomized amplitudes
  double amplitude_spread = 0.5;
  PredictTolerance tolerance{};
};

namespace detail {

// Uniform random k-subset of [0, universe) (Floyd), returned sorted.
inline std::vector<Word> random_subset(Word universe, int k, std::mt19937_64& rng) {
  std::vector<Word> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Word j = universe - static_cast<Word>(k); j < universe; ++j) {
    const Word t = std::uniform_int_distribution<Word>(0, j)(rng);
    if (std::find(out.begin(), out.end(), t) == out.end())
      out.push_back(t);
    else
      out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Every k-subset of [0, universe) in lexicographic order.
inline std::vector<std::vector<Word>> all_subsets(Word universe, int k) {
  std::vector<std::vector<Word>> out;
  std::vector<Word> c(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = static_cast<Word>(i);
  if (static_cast<Word>(k) > universe) return out;
  while (true) {
    out.push_back(c);
    int i = k - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == universe - static_cast<Word>(k - i)) --i;
    if (i < 0) break;
    ++c[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j) - 1] + 1;
  }
  return out;
}

}  // namespace detail

/// Category fractions over ground-state subsets of size `degeneracy` drawn uniformly from
/// the 2^n_spins configurations, for each driver order with all Gamma^{x,d} = 1. When the
/// number of subsets does not exceed `samples`, every subset is evaluated instead. No
/// problem Hamiltonian exists here, so highord is terminal.
inline std::vector<StudyRow> driver_study(int n_spins, int degeneracy, const std::vector<int>& driver_orders,
                                          std::uint64_t samples, std::uint64_t seed, const StudyOptions& opts = {}) {
  require(n_spins >= 1 && n_spins <= 62, ErrorKind::size_limit, "driver study supports up to 62 spins");
  require(degeneracy >= 2, ErrorKind::invalid_argument, "degeneracy must be >= 2");
  const Word universe = Word{1} << n_spins;
  require(static_cast<Word>(degeneracy) <= universe, ErrorKind::invalid_argument, "degeneracy exceeds 2^n_spins");

  const std::uint64_t total = binomial(universe, static_cast<std::uint64_t>(degeneracy));
  const bool exhaustive = total <= samples;
  std::vector<std::vector<Word>> subsets;
  if (exhaustive) {
    subsets = detail::all_subsets(universe, degeneracy);
  } else {
    subsets.resize(samples);
    parallel_for(samples, [&](std::size_t s) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(degeneracy), s));
      subsets[s] = detail::random_subset(universe, degeneracy, rng);
    });
  }

  std::vector<StudyRow> rows;
  for (int order : driver_orders) {
    require(order >= 1, ErrorKind::invalid_argument, "driver orders must be >= 1");
    const auto base = DriverSpec::uniform(order, 1.0);
    std::vector<Category> cats(subsets.size());
    std::vector<char> zero(subsets.size(), 0);
    parallel_for(subsets.size(), [&](std::size_t s) {
      GroundStateSet set;
      set.n_spins = n_spins;
      for (Word w : subsets[s]) set.states.push_back(SpinConfig{w});
      if (opts.random_redraws <= 0) {
        const auto pred = predict(build_first_order_V(set, base), opts.tolerance);
        cats[s] = pred.category;
        zero[s] = pred.hard_zero;
        return;
      }
      std::vector<double> avg(set.size(), 0.0);
      for (int r = 0; r < opts.random_redraws; ++r) {
        const auto d = base.with_random_amplitudes(derive_seed(seed, s, static_cast<std::uint64_t>(r)), opts.amplitude_spread);
        const auto pred = predict(build_first_order_V(set, d), opts.tolerance);
        if (pred.probabilities.empty()) {
          cats[s] = Category::highord;
          return;
        }
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += pred.probabilities[i] / opts.random_redraws;
      }
      cats[s] = classify_probabilities(avg, opts.tolerance);
      zero[s] = std::any_of(avg.begin(), avg.end(), [&](double p) { return p <= opts.tolerance.zero_probability; });
    });

    StudyRow row;
    row.n_spins = n_spins;
    row.degeneracy = degeneracy;
    row.driver_order = order;
    row.samples = subsets.size();
    row.seed = seed;
    row.exhaustive = exhaustive;
    std::uint64_t counts[4] = {0, 0, 0, 0};
    for (std::size_t s = 0; s < cats.size(); ++s) {
      ++counts[static_cast<int>(cats[s])];
      if (cats[s] == Category::hard) (zero[s] ? row.hard_zero : row.hard_ratio) += 1;
    }
    const double inv = subsets.empty() ? 0.0 : 1.0 / static_cast<double>(subsets.size());
    row.fair = counts[0] * inv;
    row.soft = counts[1] * inv;
    row.hard = counts[2] * inv;
    row.highord = counts[3] * inv;
    rows.push_back(row);
  }
  return rows;
}

inline std::string study_csv_header() { return "n_spins,degeneracy,driver_order,fair,soft,hard,highord,samples,seed\n"; }

inline std::string study_csv_row(const StudyRow& r) {
  return std::to_string(r.n_spins) + ',' + std::to_string(r.degeneracy) + ',' + std::to_string(r.driver_order) + ',' +
         format_double(r.fair) + ',' + format_double(r.soft) + ',' + format_double(r.hard) + ',' +
         format_double(r.highord) + ',' + std::to_string(r.samples) + ',' + std::to_string(r.seed) + '\n';
}

}  // namespace fairsample
