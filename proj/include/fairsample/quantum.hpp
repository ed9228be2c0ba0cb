#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "fairsample/driver.hpp"
#include "fairsample/io.hpp"
#include "fairsample/ising.hpp"

namespace fairsample {

using cplx = std::complex<double>;

/// Diagonal of H_P in the z-basis; entry b is energy(instance, b).
inline std::vector<double> build_problem_diagonal(const ProblemInstance& inst) {
  require(inst.n_spins() <= max_state_vector_spins, ErrorKind::size_limit, "state vectors are limited to 16 spins");
  const std::size_t dim = std::size_t{1} << inst.n_spins();
  std::vector<double> diag(dim);
  for (std::size_t b = 0; b < dim; ++b) diag[b] = energy(inst, SpinConfig{b});
  return diag;
}

struct AnnealTrace {
  double T = 0.0;
  int n_spins = 0;
  std::vector<SpinConfig> states;  // tracked ground states (gauge representatives when gauge)
  bool gauge = false;
  std::vector<double> times;
  std::vector<std::vector<double>> p;  // p[column][time]; gauge columns sum the Z2 pair
  std::vector<double> p_total;
  std::vector<double> norm;
  std::vector<double> energy;  // <psi|H(t)|psi> / <psi|psi>
  double max_norm_drift = 0.0;
  std::uint64_t steps = 0;
  double dt = 0.0;
};

struct AnnealOptions {
  int record_points = 101;
  double tolerance = 1e-6;
  std::uint64_t max_steps = std::uint64_t{1} << 26;
  // Default: gauge-reduce the tracked columns iff the instance has no local fields.
  std::optional<bool> gauge;
};

inline constexpr int max_anneal_spins = 14;

namespace detail {

struct AnnealSystem {
  const DriverOperator& driver;
  const std::vector<double>& diag;
  double T;
  double driver_floor;
  double problem_floor;

  double shift(double s) const { return (1.0 - s) * driver_floor + s * problem_floor; }

  // out = H(t) psi - shift(t) psi
  void apply(double t, std::span<const cplx> psi, std::span<cplx> out) const {
    const double s = t / T;
    driver.apply<cplx>(psi, out);
    const double c = shift(s);
    for (std::size_t a = 0; a < psi.size(); ++a) out[a] = (1.0 - s) * out[a] + (s * diag[a] - c) * psi[a];
  }
};

inline double norm_of(std::span<const cplx> v) {
  double n = 0.0;
  for (const auto& x : v) n += std::norm(x);
  return std::sqrt(n);
}

}  // namespace detail

/// Integrates i d|psi>/dt = H(t)|psi>, H(t) = (1 - t/T) H_D + (t/T) H_P, from the driver
/// ground state with fixed-step RK4. The step is halved until the largest deviation of the
/// norm from 1 over the whole run is within tolerance.
inline AnnealTrace integrate_anneal(const ProblemInstance& inst, const DriverSpec& driver, double T,
                                    const AnnealOptions& opts = {}) {
  const int n = inst.n_spins();
  require(n <= max_anneal_spins, ErrorKind::size_limit, "exact annealing is limited to 14 spins");
  require(T > 0.0 && std::isfinite(T), ErrorKind::invalid_argument, "anneal time must be positive");
  require(opts.record_points >= 2, ErrorKind::invalid_argument, "record_points must be >= 2");
  require(opts.tolerance > 0.0, ErrorKind::invalid_argument, "tolerance must be positive");

  const bool gauge = opts.gauge.value_or(!inst.has_fields());
  const auto gs = enumerate_ground_states(inst, gauge);
  const auto diag = build_problem_diagonal(inst);
  const DriverOperator op(driver, n);
  const auto lambda = driver_spectrum(driver, n);
  const auto psi0 = driver_ground_state(driver, n);

  const auto [lmin, lmax] = std::minmax_element(lambda.begin(), lambda.end());
  const auto [emin, emax] = std::minmax_element(diag.begin(), diag.end());
  const detail::AnnealSystem sys{op, diag, T, *lmin, *emin};
  const double spread = std::max({*lmax - *lmin, *emax - *emin, 1e-12});

  const std::size_t dim = diag.size();
  const int intervals = opts.record_points - 1;
  // Initial step from the RK4 norm-loss estimate (|R(iy)|^2 ~ 1 - y^6/72), then halve.
  const double y0 = std::min(0.5, 3.0 * std::pow(36.0 * opts.tolerance / (T * spread), 0.2));
  std::uint64_t substeps = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(T * spread / (y0 * intervals))));

  std::vector<cplx> psi(dim), k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim), hpsi(dim);
  while (true) {
    require(substeps * static_cast<std::uint64_t>(intervals) <= opts.max_steps, ErrorKind::tolerance,
            "norm tolerance not achievable within the step budget");
    AnnealTrace tr;
    tr.T = T;
    tr.n_spins = n;
    tr.states = gs.states;
    tr.gauge = gauge;
    tr.p.assign(gs.states.size(), {});
    tr.dt = T / static_cast<double>(substeps * static_cast<std::uint64_t>(intervals));
    tr.steps = substeps * static_cast<std::uint64_t>(intervals);
    const double dt = tr.dt;

    psi = psi0;
    auto record = [&](double t) {
      const double s = t / T;
      double nrm2 = 0.0;
      for (const auto& x : psi) nrm2 += std::norm(x);
      tr.times.push_back(t);
      tr.norm.push_back(std::sqrt(nrm2));
      double total = 0.0;
      for (std::size_t c = 0; c < gs.states.size(); ++c) {
        const Word b = gs.states[c].bits;
        double pc = std::norm(psi[b]);
        if (gauge) pc += std::norm(psi[b ^ low_mask(n)]);
        tr.p[c].push_back(pc);
        total += pc;
      }
      tr.p_total.push_back(total);
      op.apply<cplx>(psi, hpsi);
      cplx e = 0.0;
      for (std::size_t a = 0; a < dim; ++a) e += std::conj(psi[a]) * ((1.0 - s) * hpsi[a] + s * diag[a] * psi[a]);
      tr.energy.push_back(e.real() / nrm2);
    };

    const cplx mi(0.0, -1.0);
    auto rhs = [&](double t, std::span<const cplx> in, std::span<cplx> out) {
      sys.apply(t, in, out);
      for (auto& x : out) x *= mi;
    };

    record(0.0);
    double drift = 0.0;
    std::uint64_t step = 0;
    for (int iv = 0; iv < intervals && drift <= opts.tolerance; ++iv) {
      for (std::uint64_t sub = 0; sub < substeps; ++sub, ++step) {
        const double t = static_cast<double>(step) * dt;
        rhs(t, psi, k1);
        for (std::size_t a = 0; a < dim; ++a) tmp[a] = psi[a] + 0.5 * dt * k1[a];
        rhs(t + 0.5 * dt, tmp, k2);
        for (std::size_t a = 0; a < dim; ++a) tmp[a] = psi[a] + 0.5 * dt * k2[a];
        rhs(t + 0.5 * dt, tmp, k3);
        for (std::size_t a = 0; a < dim; ++a) tmp[a] = psi[a] + dt * k3[a];
        rhs(t + dt, tmp, k4);
        for (std::size_t a = 0; a < dim; ++a) psi[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        drift = std::max(drift, std::abs(detail::norm_of(psi) - 1.0));
      }
      record(static_cast<double>(step) * dt);
    }
    if (drift <= opts.tolerance) {
      tr.times.back() = T;
      tr.max_norm_drift = drift;
      return tr;
    }
    substeps *= 2;
  }
}

inline AnnealTrace integrate_anneal(const ProblemInstance& inst, const DriverSpec& driver, double T, int record_points,
                                    double tolerance) {
  AnnealOptions o;
  o.record_points = record_points;
  o.tolerance = tolerance;
  return integrate_anneal(inst, driver, T, o);
}

struct FinalDistribution {
  std::vector<SpinConfig> states;
  bool gauge = false;
  std::vector<double> probabilities;  // renormalized over the ground-state subspace
  double total_weight = 0.0;          // ground-state weight before renormalization
};

inline FinalDistribution final_distribution(const AnnealTrace& tr) {
  FinalDistribution d;
  d.states = tr.states;
  d.gauge = tr.gauge;
  d.total_weight = tr.p_total.empty() ? 0.0 : tr.p_total.back();
  for (const auto& col : tr.p) d.probabilities.push_back(col.empty() ? 0.0 : col.back());
  if (d.total_weight > 0.0)
    for (auto& p : d.probabilities) p /= d.total_weight;
  return d;
}

/// Trace CSV: header t,norm,p_total,p_0,p_1,...
inline std::string trace_to_csv(const AnnealTrace& tr) {
  std::string out = "t,norm,p_total";
  for (std::size_t c = 0; c < tr.p.size(); ++c) out += ",p_" + std::to_string(c);
  out += '\n';
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    out += format_double(tr.times[k]) + ',' + format_double(tr.norm[k]) + ',' + format_double(tr.p_total[k]);
    for (const auto& col : tr.p) out += ',' + format_double(col[k]);
    out += '\n';
  }
  return out;
}

/// Sidecar mapping trace column index to the ground-state bitstring.
inline json trace_sidecar(const AnnealTrace& tr) {
  json j;
  j["T"] = tr.T;
  j["n_spins"] = tr.n_spins;
  j["gauge"] = tr.gauge;
  j["dt"] = tr.dt;
  j["steps"] = tr.steps;
  j["max_norm_drift"] = tr.max_norm_drift;
  j["columns"] = json::object();
  for (std::size_t c = 0; c < tr.states.size(); ++c)
    j["columns"]["p_" + std::to_string(c)] = to_bitstring(tr.states[c], tr.n_spins);
  return j;
}

}  // namespace fairsample
