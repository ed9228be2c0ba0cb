// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the number of failures.
// Optional arguments select criteria by name substring.

#include <chrono>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include "fairsample/experiments.hpp"
#include "oracles.hpp"

using namespace fairsample;

namespace {

namespace tol {
constexpr int enumeration_instances = 200;
constexpr int enumeration_max_spins = 12;
constexpr double apply_abs = 1e-12;
constexpr int dynamics_instances = 50;
constexpr int dynamics_max_spins = 8;
constexpr double dynamics_T = 250.0;
constexpr double dynamics_max_dp = 0.05;
constexpr double second_order_abs = 1e-12;
constexpr double sensitivity_min_change = 0.01;
constexpr double sensitivity_max_dp = 0.05;
constexpr int study_samples = 400;
constexpr double small_study_fair = 1.0;
constexpr double large_study_fair_max = 0.01;
constexpr int dense_subsets = 1000;
constexpr double qmc_sigmas = 3.0;
constexpr double trotter_ratio_lo = 3.0;
constexpr double trotter_ratio_hi = 5.0;
constexpr int fig4_min_instances = 20;
constexpr double fig4_sigmas = 2.0;
constexpr double norm_drift = 1e-6;
constexpr int relabelings = 20;
constexpr double covariance_abs = 1e-9;
}  // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

const fs::path source_dir = FAIRSAMPLE_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "fairsample_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome enumeration() {
  std::mt19937_64 rng(20240101);
  int mismatches = 0;
  for (int k = 0; k < tol::enumeration_instances; ++k) {
    const int n = 2 + k % (tol::enumeration_max_spins - 1);
    const auto inst = oracle::random_instance(n, rng, 0.5, k % 2 == 1);
    const auto gs = enumerate_ground_states(inst);
    const auto [e, naive] = oracle::naive_ground_states(inst);
    std::vector<Word> got;
    for (auto s : gs.states) got.push_back(s.bits);
    if (got != naive || std::abs(gs.energy - e) > degeneracy_tolerance(inst)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(tol::enumeration_instances) + " instances, N<=" +
                               std::to_string(tol::enumeration_max_spins) + ", mismatches=" + std::to_string(mismatches)};
}

Outcome driver_application() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  int element_mismatch = 0, cases = 0;
  double worst_apply = 0.0;
  for (int n = 1; n <= 6; ++n) {
    for (int order = 1; order <= n; ++order) {
      std::vector<double> amps(static_cast<std::size_t>(order));
      for (auto& a : amps) a = g(rng);
      const auto spec = DriverSpec::all_subsets(amps);
      const auto dense = oracle::dense_all_subsets_driver(n, amps, spec.sign_factor());
      const Word dim = Word{1} << n;
      for (Word a = 0; a < dim; ++a)
        for (Word b = 0; b < dim; ++b)
          if (spec.element(a, b) != dense(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) ++element_mismatch;
      std::vector<std::complex<double>> psi(dim);
      for (auto& x : psi) x = {g(rng), g(rng)};
      const auto out = apply_driver(spec, psi);
      for (Word a = 0; a < dim; ++a) {
        std::complex<double> ref = 0.0;
        for (Word b = 0; b < dim; ++b) ref += dense(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * psi[b];
        worst_apply = std::max(worst_apply, std::abs(out[a] - ref));
      }
      ++cases;
    }
  }
  return {element_mismatch == 0 && worst_apply <= tol::apply_abs,
          std::to_string(cases) + " (N, n) cases, element mismatches=" + std::to_string(element_mismatch) +
              ", max |apply - dense|=" + fmt(worst_apply)};
}

// Largest |p_pred - p_int| over ground-state columns, matched by bitstring.
double compare_columns(const SamplingPrediction& pred, const AnnealTrace& tr) {
  const auto [states, p] = tr.gauge ? fold_gauge(pred) : std::pair{pred.basis, pred.probabilities};
  const auto fd = final_distribution(tr);
  double worst = 0.0;
  for (std::size_t c = 0; c < fd.states.size(); ++c) {
    const auto it = std::find(states.begin(), states.end(), fd.states[c]);
    const double q = it == states.end() ? 0.0 : p[static_cast<std::size_t>(it - states.begin())];
    worst = std::max(worst, std::abs(q - fd.probabilities[c]));
  }
  return worst;
}

Outcome perturbation_vs_dynamics() {
  std::mt19937_64 rng(424242);
  const auto driver = DriverSpec::uniform(1);
  std::vector<ProblemInstance> chosen;
  std::vector<SamplingPrediction> preds;
  for (int attempt = 0; attempt < 100000 && static_cast<int>(chosen.size()) < tol::dynamics_instances; ++attempt) {
    const int n = 3 + attempt % (tol::dynamics_max_spins - 2);
    auto inst = oracle::random_instance(n, rng, 0.6, attempt % 2 == 1);
    const auto gs = enumerate_ground_states(inst);
    const std::size_t columns = inst.has_fields() ? gs.size() : gs.size() / 2;
    if (columns < 2) continue;
    const auto m = build_first_order_V(gs, driver);
    if (m.trivial()) continue;
    auto pred = predict(m);
    if (pred.multiplicity != 1) continue;
    chosen.push_back(std::move(inst));
    preds.push_back(std::move(pred));
  }
  std::vector<double> worst(chosen.size(), 0.0);
  parallel_for(chosen.size(), [&](std::size_t k) {
    worst[k] = compare_columns(preds[k], integrate_anneal(chosen[k], driver, tol::dynamics_T, 11, 1e-7));
  });
  const double max_dp = worst.empty() ? 1.0 : *std::max_element(worst.begin(), worst.end());
  const auto over = std::count_if(worst.begin(), worst.end(), [](double w) { return w > tol::dynamics_max_dp; });
  return {static_cast<int>(chosen.size()) >= tol::dynamics_instances && max_dp <= tol::dynamics_max_dp,
          std::to_string(chosen.size()) + " instances (N<=" + std::to_string(tol::dynamics_max_spins) + ", l=1, T=" +
              fmt(tol::dynamics_T) + "), max |dp|=" + fmt(max_dp) + ", over tolerance=" + std::to_string(over)};
}

Outcome second_order_path() {
  const auto fm = load_instance(source_dir / "data/fixtures/ferromagnet_2spin.json");
  const auto gs = enumerate_ground_states(fm);
  const auto driver = DriverSpec::uniform(1);
  const auto first = predict(build_first_order_V(gs, driver));
  const auto m2 = build_second_order_V(gs, driver, fm);
  Eigen::MatrixXd expected(2, 2);
  expected << -1, -1, -1, -1;
  const double v2_err = m2.V.rows() == 2 ? (m2.V - expected).cwiseAbs().maxCoeff() : 1.0;
  const auto second = predict(m2);
  bool ok = first.category == Category::highord && second.category == Category::fair && v2_err <= tol::second_order_abs;
  std::string detail = "FM first=" + std::string(to_string(first.category)) + " second=" +
                       std::string(to_string(second.category)) + " |V2 - ref|=" + fmt(v2_err);

  json cfg = read_json(source_dir / "configs/sensitivity.json");
  cfg["out"] = scratch("sensitivity").string();
  const auto rec = run_sensitivity(parse_config(cfg, std::nullopt, {}, source_dir / "configs"));
  std::map<std::string, std::vector<double>> by_state;
  double worst_dp = 0.0;
  for (const auto& row : rec.summary["rows"]) worst_dp = std::max(worst_dp, row["max_abs_dp"].get<double>());
  std::istringstream csv(read_text(fs::path(cfg["out"].get<std::string>()) / "sensitivity.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1);
    by_state[line.substr(c1 + 1, c2 - c1 - 1)].push_back(std::stod(line.substr(c2 + 1, c3 - c2 - 1)));
  }
  double change = 0.0;
  for (const auto& [state, p] : by_state)
    change = std::max(change, *std::max_element(p.begin(), p.end()) - *std::min_element(p.begin(), p.end()));
  ok = ok && change >= tol::sensitivity_min_change && worst_dp <= tol::sensitivity_max_dp;
  detail += "; sensitivity: ground-state set fixed, max prediction change=" + fmt(change) + ", max |pred - int|=" + fmt(worst_dp);
  return {ok, detail};
}

Outcome driver_study_grid() {
  std::vector<int> ks(15);
  std::iota(ks.begin(), ks.end(), 2);
  double small_min = 1.0;
  for (int k : ks) {
    const auto rows = driver_study(4, k, {4}, tol::study_samples, 1);
    small_min = std::min(small_min, rows.front().fair);
  }
  std::vector<int> orders{1, 2, 3, 4, 5, 6};
  std::vector<double> avg(orders.size(), 0.0), cell_max(orders.size(), 0.0);
  for (int k : ks) {
    const auto rows = driver_study(20, k, orders, tol::study_samples, 1);
    for (std::size_t o = 0; o < orders.size(); ++o) {
      avg[o] += rows[o].fair / static_cast<double>(ks.size());
      cell_max[o] = std::max(cell_max[o], rows[o].fair);
    }
  }
  const double worst_avg = *std::max_element(avg.begin(), avg.end());
  std::string per_order;
  for (std::size_t o = 0; o < orders.size(); ++o)
    per_order += (o ? " " : "") + std::string("n") + std::to_string(orders[o]) + ":" + fmt(avg[o], 3);
  return {small_min >= tol::small_study_fair && worst_avg <= tol::large_study_fair_max,
          "N=4,n=4 min fair=" + fmt(small_min) + "; N=20 fair averaged over degeneracy 2..16 [" + per_order +
              "], largest single cell=" + fmt(*std::max_element(cell_max.begin(), cell_max.end()), 3)};
}

Outcome dense_driver() {
  std::mt19937_64 rng(99);
  int unfair = 0;
  for (int t = 0; t < tol::dense_subsets; ++t) {
    const int n = 2 + t % 19;
    const int max_k = static_cast<int>(std::min<std::uint64_t>(16, std::uint64_t{1} << n));
    const int k = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_k - 1));
    GroundStateSet set;
    set.n_spins = n;
    for (Word w : detail::random_subset(Word{1} << n, k, rng)) set.states.push_back(SpinConfig{w});
    std::sort(set.states.begin(), set.states.end());
    if (predict(build_first_order_V(set, DriverSpec::uniform(n, 1.0))).category != Category::fair) ++unfair;
  }
  return {unfair == 0, std::to_string(tol::dense_subsets) + " subsets (N=2..20, size 2..16), not fair=" + std::to_string(unfair)};
}

Outcome qmc() {
  struct Case {
    std::string name;
    ProblemInstance inst;
  };
  const std::vector<Case> cases{{"N=2", ProblemInstance(2, {{0, 1, 1.0}}, {{0, 0.2}})},
                                {"N=3", ProblemInstance(3, {{0, 1, -1.0}, {1, 2, -1.0}, {0, 2, -1.0}}, {{0, 0.3}})}};
  const double beta = 2.0, s = 0.5;
  const std::vector<int> slices{8, 16, 32, 64};
  int comparisons = 0, outside = 0;
  double worst_sigma = 0.0, ratio_lo = 1e9, ratio_hi = 0.0;
  for (const auto& c : cases) {
    const int n = c.inst.n_spins();
    const auto hp = oracle::dense_problem(c.inst);
    const auto zz = oracle::site_product(n, {0, 1}, oracle::pauli_z());
    for (double K : {0.0, 1.0}) {
      const auto sd = SqaDriver::uniform(c.inst, 1.0, K);
      std::vector<std::pair<int, int>> pairs;
      for (const auto& p : sd.pairs) pairs.emplace_back(p.j, p.k);
      const auto hd = oracle::dense_xx_driver(n, 1.0, K, pairs);
      const Eigen::MatrixXd h = (1 - s) * hd + s * hp;
      const double ed_e = oracle::thermal(h, hp, beta), ed_zz = oracle::thermal(h, zz, beta);
      std::vector<double> bias_e, bias_zz;
      for (int m : slices) {
        const auto est = sqa_fixed_s(c.inst, sd, beta, m, s, 4000, 400, 16, derive_seed(77, static_cast<std::uint64_t>(m), n * 10 + static_cast<int>(K)));
        const double tr_e = oracle::trotter(hp, hd, hp, beta, m, s), tr_zz = oracle::trotter(hp, hd, zz, beta, m, s);
        bias_e.push_back(tr_e - ed_e);
        bias_zz.push_back(tr_zz - ed_zz);
        std::vector<std::pair<double, double>> checks{{(est.energy - tr_e) / est.energy_stderr, 0},
                                                      {(est.correlation - tr_zz) / est.correlation_stderr, 0}};
        if (m == slices.back()) {
          checks.push_back({(est.energy - ed_e) / est.energy_stderr, 0});
          checks.push_back({(est.correlation - ed_zz) / est.correlation_stderr, 0});
        }
        for (auto [z, unused] : checks) {
          ++comparisons;
          worst_sigma = std::max(worst_sigma, std::abs(z));
          if (std::abs(z) > tol::qmc_sigmas) ++outside;
        }
      }
      for (const auto* b : {&bias_e, &bias_zz})
        for (std::size_t i = 0; i + 1 < b->size(); ++i) {
          const double r = (*b)[i] / (*b)[i + 1];
          ratio_lo = std::min(ratio_lo, r);
          ratio_hi = std::max(ratio_hi, r);
        }
    }
  }
  const bool trend = ratio_lo >= tol::trotter_ratio_lo && ratio_hi <= tol::trotter_ratio_hi;
  return {outside == 0 && trend, std::to_string(comparisons) + " comparisons vs Trotter oracle and ED, worst |z|=" +
                                     fmt(worst_sigma, 3) + ", beyond " + fmt(tol::qmc_sigmas) + " sigma=" +
                                     std::to_string(outside) + "; bias(M)/bias(2M) in [" + fmt(ratio_lo, 3) + ", " +
                                     fmt(ratio_hi, 3) + "]"};
}

Outcome fig4() {
  json cfg = read_json(source_dir / "configs/mc_sampling.json");
  cfg["out"] = scratch("mc_sampling").string();
  const auto rec = run_mc_sampling(parse_config(cfg, std::nullopt, {}, source_dir / "configs"));
  const auto& e = rec.summary["engines"];
  auto ratio = [&](const char* k) { return e[k]["raw"]["ratio_mean"].get<double>(); };
  auto se = [&](const char* k) { return e[k]["raw"]["ratio_stderr"].get<double>(); };
  const int instances = rec.summary["instances"].get<int>();
  const double sa = ratio("sa"), x = ratio("sqa-x"), xx = ratio("sqa-xx");
  const double combined = std::hypot(se("sqa-x"), se("sqa-xx"));
  const bool sa_flatter = sa < x && sa < xx;
  const bool no_improvement = xx >= x - tol::fig4_sigmas * combined;
  return {instances >= tol::fig4_min_instances && sa_flatter && no_improvement,
          std::to_string(instances) + " instances x " + std::to_string(rec.summary["runs"].get<int>()) +
              " runs; max/min ratio SA=" + fmt(sa, 3) + "+-" + fmt(se("sa"), 2) + " SQA-x=" + fmt(x, 3) + "+-" +
              fmt(se("sqa-x"), 2) + " SQA-xx=" + fmt(xx, 3) + "+-" + fmt(se("sqa-xx"), 2) + "; folded SA=" +
              fmt(e["sa"]["folded"]["ratio_mean"].get<double>(), 3) + " SQA-x=" +
              fmt(e["sqa-x"]["folded"]["ratio_mean"].get<double>(), 3) + " SQA-xx=" +
              fmt(e["sqa-xx"]["folded"]["ratio_mean"].get<double>(), 3)};
}

Outcome integrator_hygiene() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(source_dir / "data/fixtures"))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  double worst_drift = 0.0;
  int traces = 0;
  for (const auto& f : files) {
    const auto inst = load_instance(f);
    for (int order = 1; order <= std::min(inst.n_spins(), 4); ++order) {
      const auto tr = integrate_anneal(inst, DriverSpec::uniform(order), 250.0, 51, tol::norm_drift);
      worst_drift = std::max(worst_drift, tr.max_norm_drift);
      for (double nrm : tr.norm) worst_drift = std::max(worst_drift, std::abs(nrm - 1.0));
      ++traces;
    }
  }

  const auto base = load_instance(source_dir / "data/fixtures/hard1_fair2.json");
  const auto driver = DriverSpec::uniform(1);
  const auto ref = integrate_anneal(base, driver, 50.0, 11, 1e-8);
  std::mt19937_64 rng(5);
  double worst_cov = 0.0;
  for (int r = 0; r < tol::relabelings; ++r) {
    std::vector<int> perm(static_cast<std::size_t>(base.n_spins()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto pinst = permute_instance(base, perm);
    const auto tr = integrate_anneal(pinst, driver, 50.0, 11, 1e-8);
    for (std::size_t c = 0; c < ref.states.size(); ++c) {
      auto target = permute_config(ref.states[c], perm);
      if (tr.gauge && !target.up(0)) target = flip_all(target, base.n_spins());
      const auto it = std::find(tr.states.begin(), tr.states.end(), target);
      if (it == tr.states.end()) {
        worst_cov = 1.0;
        continue;
      }
      const auto& col = tr.p[static_cast<std::size_t>(it - tr.states.begin())];
      for (std::size_t k = 0; k < col.size(); ++k) worst_cov = std::max(worst_cov, std::abs(col[k] - ref.p[c][k]));
    }
  }
  return {worst_drift <= tol::norm_drift && worst_cov <= tol::covariance_abs,
          std::to_string(files.size()) + " fixtures / " + std::to_string(traces) + " traces, max norm drift=" +
              fmt(worst_drift) + "; " + std::to_string(tol::relabelings) + " relabelings, max |dp|=" + fmt(worst_cov)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"enumeration-oracle", enumeration},
      {"driver-oracle", driver_application},
      {"perturbation-vs-dynamics", perturbation_vs_dynamics},
      {"second-order-path", second_order_path},
      {"driver-study-grid", driver_study_grid},
      {"dense-driver-fair", dense_driver},
      {"qmc-correctness", qmc},
      {"mc-sampling-bias", fig4},
      {"integrator-hygiene", integrator_hygiene},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (argc > 1 && std::none_of(argv + 1, argv + argc, [&](const char* a) { return name.find(a) != std::string::npos; }))
      continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << ": " << out.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
    failures += out.pass ? 0 : 1;
  }
  return failures;
}
