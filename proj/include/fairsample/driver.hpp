#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "fairsample/common.hpp"

namespace fairsample {

/// stoquastic: every off-diagonal driver element is -|amplitude|; raw: +amplitude.
enum class DriverSign { stoquastic, raw };

struct DriverTerm {
  Word mask = 0;  // sites flipped by this sigma^x product
  double amplitude = 0.0;
  friend bool operator==(const DriverTerm&, const DriverTerm&) = default;
};

/// Sum of sigma^x products. Every product flips a fixed set of sites, so
/// <a|H_D|b> depends only on a ^ b.
///
/// all_subsets: every site subset of size d in [1, n] carries amplitude Gamma^{x,d}.
/// explicit_terms: a user-supplied list of (subset, amplitude) pairs.
class DriverSpec {
 public:
  enum class Mode { all_subsets, explicit_terms };

  static DriverSpec all_subsets(std::vector<double> amplitudes, DriverSign sign = DriverSign::stoquastic) {
    require(!amplitudes.empty(), ErrorKind::invalid_argument, "driver needs at least one order");
    for (double a : amplitudes)
      require(std::isfinite(a), ErrorKind::invalid_argument, "driver amplitudes must be finite");
    DriverSpec d;
    d.mode_ = Mode::all_subsets;
    d.amplitudes_ = std::move(amplitudes);
    d.sign_ = sign;
    return d;
  }

  /// Gamma^{x,d} = gamma for every d <= order.
  static DriverSpec uniform(int order, double gamma = 1.0, DriverSign sign = DriverSign::stoquastic) {
    require(order >= 1, ErrorKind::invalid_argument, "driver order must be >= 1");
    return all_subsets(std::vector<double>(static_cast<std::size_t>(order), gamma), sign);
  }

  static DriverSpec explicit_terms(std::vector<DriverTerm> terms, DriverSign sign = DriverSign::stoquastic) {
    std::sort(terms.begin(), terms.end(), [](auto& a, auto& b) { return a.mask < b.mask; });
    for (std::size_t k = 0; k < terms.size(); ++k) {
      require(terms[k].mask != 0, ErrorKind::invalid_argument, "driver term subsets must be non-empty");
      require(std::isfinite(terms[k].amplitude), ErrorKind::invalid_argument, "driver amplitudes must be finite");
      require(k == 0 || terms[k].mask != terms[k - 1].mask, ErrorKind::invalid_argument,
              "driver term subsets must be unique");
    }
    DriverSpec d;
    d.mode_ = Mode::explicit_terms;
    d.terms_ = std::move(terms);
    d.sign_ = sign;
    return d;
  }

  /// Multiplies the amplitude of every individual product term by an independent factor
  /// drawn from [1 - spread, 1 + spread], derived deterministically from (seed, subset).
  DriverSpec with_random_amplitudes(std::uint64_t seed, double spread) const {
    require(spread >= 0.0 && spread < 1.0, ErrorKind::invalid_argument, "amplitude spread must be in [0, 1)");
    DriverSpec d = *this;
    d.jitter_seed_ = seed;
    d.jitter_ = spread;
    return d;
  }

  Mode mode() const { return mode_; }
  DriverSign sign() const { return sign_; }
  double sign_factor() const { return sign_ == DriverSign::stoquastic ? -1.0 : 1.0; }
  const std::vector<double>& amplitudes() const { return amplitudes_; }
  const std::vector<DriverTerm>& terms() const { return terms_; }
  double jitter() const { return jitter_; }
  std::uint64_t jitter_seed() const { return jitter_seed_; }

  int max_order() const {
    if (mode_ == Mode::all_subsets) return static_cast<int>(amplitudes_.size());
    int n = 0;
    for (const auto& t : terms_) n = std::max(n, popcount(t.mask));
    return n;
  }

  void validate(int n_spins) const {
    if (mode_ == Mode::explicit_terms)
      for (const auto& t : terms_)
        require((t.mask & ~low_mask(n_spins)) == 0, ErrorKind::invalid_argument,
                "driver term acts on a site outside the system");
  }

  /// Signed matrix element for a flip set; 0 when no term produces it.
  double mask_element(Word mask) const {
    double amp = 0.0;
    if (mode_ == Mode::all_subsets) {
      const int d = popcount(mask);
      if (d < 1 || d > static_cast<int>(amplitudes_.size())) return 0.0;
      amp = amplitudes_[static_cast<std::size_t>(d - 1)];
    } else {
      auto it = std::lower_bound(terms_.begin(), terms_.end(), mask, [](const DriverTerm& t, Word m) { return t.mask < m; });
      if (it == terms_.end() || it->mask != mask) return 0.0;
      amp = it->amplitude;
    }
    if (jitter_ > 0.0 && amp != 0.0) {
      const double u = static_cast<double>(derive_seed(jitter_seed_, mask) >> 11) * 0x1.0p-53;
      amp *= 1.0 + jitter_ * (2.0 * u - 1.0);
    }
    return sign_factor() * amp;
  }

  double element(Word a, Word b) const { return mask_element(a ^ b); }

  /// Every nonzero flip set on n_spins sites with its signed element, ascending by mask.
  std::vector<DriverTerm> flip_terms(int n_spins) const {
    validate(n_spins);
    std::vector<DriverTerm> out;
    if (mode_ == Mode::all_subsets) {
      for (int d = 1; d <= std::min(n_spins, max_order()); ++d)
        for (Word m : words_with_weight(n_spins, d))
          if (double v = mask_element(m); v != 0.0) out.push_back({m, v});
      std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.mask < b.mask; });
    } else {
      for (const auto& t : terms_)
        if (double v = mask_element(t.mask); v != 0.0) out.push_back({t.mask, v});
    }
    return out;
  }

  friend bool operator==(const DriverSpec&, const DriverSpec&) = default;

 private:
  DriverSpec() = default;

  Mode mode_ = Mode::all_subsets;
  std::vector<double> amplitudes_;
  std::vector<DriverTerm> terms_;
  DriverSign sign_ = DriverSign::stoquastic;
  std::uint64_t jitter_seed_ = 0;
  double jitter_ = 0.0;
};

inline constexpr int max_state_vector_spins = 16;

inline int spins_for_dimension(std::size_t dim) {
  require(dim >= 2 && std::has_single_bit(dim), ErrorKind::dimension_mismatch,
          "state vector length must be a power of two >= 2");
  const int n = std::countr_zero(dim);
  require(n <= max_state_vector_spins, ErrorKind::size_limit, "state vectors are limited to 16 spins");
  return n;
}

/// Matrix-free H_D on dense 2^N vectors: for each flip set m, out[a] += <a|H_D|a^m> in[a^m].
/// The per-entry accumulation order is the term order, so any chunking of `a` gives
/// bitwise-identical output.
class DriverOperator {
 public:
  DriverOperator(const DriverSpec& driver, int n_spins) : n_spins_(n_spins), terms_(driver.flip_terms(n_spins)) {
    require(n_spins >= 1 && n_spins <= max_state_vector_spins, ErrorKind::size_limit,
            "state vectors are limited to 16 spins");
  }

  int n_spins() const { return n_spins_; }
  std::size_t dim() const { return std::size_t{1} << n_spins_; }
  const std::vector<DriverTerm>& terms() const { return terms_; }

  template <class T>
  void apply(std::span<const T> in, std::span<T> out) const {
    require(in.size() == dim() && out.size() == dim(), ErrorKind::dimension_mismatch,
            "state vector length does not match 2^N");
    std::fill(out.begin(), out.end(), T{});
    const std::size_t d = dim();
    for (const auto& t : terms_) {
      const double v = t.amplitude;
      const std::size_t m = static_cast<std::size_t>(t.mask);
      for (std::size_t a = 0; a < d; ++a) out[a] += v * in[a ^ m];
    }
  }

 private:
  int n_spins_;
  std::vector<DriverTerm> terms_;
};

inline std::vector<std::complex<double>> apply_driver(const DriverSpec& driver,
                                                      std::span<const std::complex<double>> state) {
  const int n = spins_for_dimension(state.size());
  DriverOperator op(driver, n);
  std::vector<std::complex<double>> out(state.size());
  op.apply<std::complex<double>>(state, out);
  return out;
}

/// In-place fast Walsh-Hadamard transform (unnormalized).
inline void walsh_hadamard(std::span<double> v) {
  for (std::size_t h = 1; h < v.size(); h <<= 1)
    for (std::size_t i = 0; i < v.size(); i += h << 1)
      for (std::size_t j = i; j < i + h; ++j) {
        const double x = v[j], y = v[j + h];
        v[j] = x + y;
        v[j + h] = x - y;
      }
}

/// Eigenvalues of H_D indexed by x-basis label: H_D |h_x> = lambda[x] |h_x>,
/// with <a|h_x> = (-1)^{popcount(a & x)} / sqrt(2^N).
inline std::vector<double> driver_spectrum(const DriverSpec& driver, int n_spins) {
  require(n_spins >= 1 && n_spins <= max_state_vector_spins, ErrorKind::size_limit,
          "state vectors are limited to 16 spins");
  std::vector<double> row(std::size_t{1} << n_spins, 0.0);
  for (const auto& t : driver.flip_terms(n_spins)) row[static_cast<std::size_t>(t.mask)] = t.amplitude;
  walsh_hadamard(row);
  return row;
}

/// Normalized lowest eigenvector of the driver alone. Throws degenerate_driver when the
/// lowest level is degenerate, since the anneal start would then be ambiguous.
inline std::vector<std::complex<double>> driver_ground_state(const DriverSpec& driver, int n_spins) {
  const auto lambda = driver_spectrum(driver, n_spins);
  std::size_t best = 0;
  double scale = 1.0;
  for (std::size_t x = 0; x < lambda.size(); ++x) {
    scale = std::max(scale, std::abs(lambda[x]));
    if (lambda[x] < lambda[best]) best = x;
  }
  for (std::size_t x = 0; x < lambda.size(); ++x)
    if (x != best && lambda[x] - lambda[best] <= 1e-9 * scale)
      throw Error(ErrorKind::degenerate_driver, "driver ground space is degenerate");
  const double norm = 1.0 / std::sqrt(static_cast<double>(lambda.size()));
  std::vector<std::complex<double>> psi(lambda.size());
  for (std::size_t a = 0; a < psi.size(); ++a) psi[a] = (std::popcount(a & best) % 2 ? -norm : norm);
  return psi;
}

}  // namespace fairsample
