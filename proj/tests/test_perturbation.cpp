#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "fairsample/perturbation.hpp"
#include "oracles.hpp"

using namespace fairsample;

namespace {

ProblemInstance af_triangle() { return ProblemInstance(3, {{0, 1, -1}, {1, 2, -1}, {0, 2, -1}}); }

GroundStateSet set_of(int n, std::vector<Word> words) {
  GroundStateSet s;
  s.n_spins = n;
  std::sort(words.begin(), words.end());
  for (Word w : words) s.states.push_back(SpinConfig{w});
  return s;
}

// P H_D Q (E_GS - H_P)^{-1} Q H_D P restricted to the ground-state rows and columns.
oracle::Mat dense_second_order(const ProblemInstance& inst, const oracle::Mat& hd, const std::vector<Word>& gs, double e_gs) {
  const auto hp = oracle::dense_problem(inst);
  const auto dim = hp.rows();
  oracle::Mat r = oracle::Mat::Zero(dim, dim);
  for (Eigen::Index k = 0; k < dim; ++k)
    if (std::find(gs.begin(), gs.end(), static_cast<Word>(k)) == gs.end()) r(k, k) = 1.0 / (e_gs - hp(k, k));
  const oracle::Mat full = hd * r * hd;
  oracle::Mat out(static_cast<Eigen::Index>(gs.size()), static_cast<Eigen::Index>(gs.size()));
  for (std::size_t a = 0; a < gs.size(); ++a)
    for (std::size_t b = 0; b < gs.size(); ++b)
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          full(static_cast<Eigen::Index>(gs[a]), static_cast<Eigen::Index>(gs[b]));
  return out;
}

// Probability that two distinct uniformly drawn n-bit words differ in 1..order bits.
double pair_fair_probability(int n, int order) {
  double hits = 0.0;
  for (int d = 1; d <= std::min(order, n); ++d) hits += static_cast<double>(binomial(n, d));
  return hits / (std::ldexp(1.0, n) - 1.0);
}

}  // namespace

TEST(Classify, Thresholds) {
  EXPECT_EQ(classify_probabilities(std::vector<double>{0.5, 0.5}), Category::fair);
  EXPECT_EQ(classify_probabilities(std::vector<double>{0.5, 0.5 * (1 - 1e-8)}), Category::fair);
  EXPECT_EQ(classify_probabilities(std::vector<double>{0.6, 0.4}), Category::soft);
  EXPECT_EQ(classify_probabilities(std::vector<double>{0.5, 0.005}), Category::hard);
  EXPECT_EQ(classify_probabilities(std::vector<double>{0.5, 0.0051}), Category::soft);
  EXPECT_EQ(classify_probabilities(std::vector<double>{1.0, 0.0}), Category::hard);
  EXPECT_EQ(classify_probabilities(std::vector<double>{}), Category::highord);
  EXPECT_EQ(category_from_string("soft"), Category::soft);
  EXPECT_THROW(category_from_string("medium"), Error);
}

TEST(FirstOrder, TriangleIsFair) {
  const auto gs = enumerate_ground_states(af_triangle(), true);
  const auto m = build_first_order_V(gs, DriverSpec::uniform(1));
  ASSERT_EQ(m.size(), 6u);  // gauge orbit expanded
  EXPECT_FALSE(m.trivial());
  const auto pred = predict(m);
  EXPECT_EQ(pred.category, Category::fair);
  EXPECT_EQ(pred.multiplicity, 1);
  for (double p : pred.probabilities) EXPECT_NEAR(p, 1.0 / 6.0, 1e-12);
  const auto [reps, folded] = fold_gauge(pred);
  ASSERT_EQ(reps.size(), 3u);
  for (double p : folded) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
}

TEST(FirstOrder, MatchesDenseRestriction) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 5;
    const int order = 1 + trial % 3;
    std::set<Word> picks;
    while (picks.size() < 4) picks.insert(rng() & low_mask(n));
    const auto set = set_of(n, {picks.begin(), picks.end()});
    const auto m = build_first_order_V(set, DriverSpec::uniform(order, 0.8));
    const auto hd = oracle::dense_all_subsets_driver(n, std::vector<double>(order, 0.8), -1.0);
    for (std::size_t a = 0; a < set.size(); ++a)
      for (std::size_t b = 0; b < set.size(); ++b) {
        const double ref = a == b ? 0.0 : hd(static_cast<Eigen::Index>(set.states[a].bits), static_cast<Eigen::Index>(set.states[b].bits));
        EXPECT_EQ(m.V(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), ref);
      }
  }
}

TEST(FirstOrder, PredictionMatchesDenseEigenvector) {
  // Path graph a - b - c (Hamming-1 chain): lowest eigenvector (1, sqrt2, 1) / 2.
  const auto set = set_of(3, {0b000, 0b001, 0b011});
  const auto pred = predict(build_first_order_V(set, DriverSpec::uniform(1)));
  EXPECT_NEAR(pred.probabilities[0], 0.25, 1e-12);
  EXPECT_NEAR(pred.probabilities[1], 0.5, 1e-12);
  EXPECT_NEAR(pred.probabilities[2], 0.25, 1e-12);
  EXPECT_EQ(pred.category, Category::soft);
}

TEST(FirstOrder, DegenerateLowestEigenspaceUsesProjector) {
  // Two disconnected pairs: lowest eigenvalue -1 twice, every state reached with 1/4.
  const auto set = set_of(4, {0b0000, 0b0001, 0b1110, 0b1111});
  const auto pred = predict(build_first_order_V(set, DriverSpec::uniform(1)));
  EXPECT_EQ(pred.multiplicity, 2);
  EXPECT_TRUE(pred.projector_average);
  for (double p : pred.probabilities) EXPECT_NEAR(p, 0.25, 1e-12);
  // Isolated state alongside a connected pair: it is outside the lowest eigenspace.
  const auto iso = predict(build_first_order_V(set_of(4, {0b0000, 0b0001, 0b1110}), DriverSpec::uniform(1)));
  EXPECT_EQ(iso.multiplicity, 1);
  EXPECT_EQ(iso.category, Category::hard);
  EXPECT_TRUE(iso.hard_zero);
  EXPECT_TRUE(iso.suppressed[2]);
}

TEST(FirstOrder, DenseDriverIsAlwaysFair) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 9;
    const int k = 2 + static_cast<int>(rng() % std::min<Word>(15, (Word{1} << n) - 1));
    std::set<Word> picks;
    while (static_cast<int>(picks.size()) < k) picks.insert(rng() & low_mask(n));
    const auto pred = predict(build_first_order_V(set_of(n, {picks.begin(), picks.end()}), DriverSpec::uniform(n)));
    EXPECT_EQ(pred.category, Category::fair) << "n=" << n << " k=" << k;
  }
}

TEST(FirstOrder, TrivialWhenNoStatesConnect) {
  const auto pred = predict(build_first_order_V(set_of(4, {0b0000, 0b1111}), DriverSpec::uniform(2)));
  EXPECT_EQ(pred.category, Category::highord);
  EXPECT_TRUE(pred.probabilities.empty());
  EXPECT_THROW(build_first_order_V(set_of(2, {0b01}), DriverSpec::uniform(1)), Error);
}

TEST(SecondOrder, TwoSpinFerromagnet) {
  const ProblemInstance fm(2, {{0, 1, 1}});
  const auto gs = enumerate_ground_states(fm);
  const auto driver = DriverSpec::uniform(1);
  EXPECT_EQ(predict(build_first_order_V(gs, driver)).category, Category::highord);
  const auto m = build_second_order_V(gs, driver, fm);
  ASSERT_EQ(m.size(), 2u);
  for (Eigen::Index a = 0; a < 2; ++a)
    for (Eigen::Index b = 0; b < 2; ++b) EXPECT_NEAR(m.V(a, b), -1.0, 1e-15);
  const auto pred = predict(m);
  EXPECT_EQ(pred.category, Category::fair);
  EXPECT_EQ(pred.order, PerturbationOrder::second);
  EXPECT_EQ(predict_escalating(gs, driver, &fm).category, Category::fair);
  EXPECT_EQ(predict_escalating(gs, driver, nullptr).category, Category::highord);
}

TEST(SecondOrder, MatchesDenseResolvent) {
  std::mt19937_64 rng(21);
  int checked = 0;
  for (int trial = 0; trial < 300 && checked < 25; ++trial) {
    const int n = 3 + trial % 4;
    const auto inst = oracle::random_instance(n, rng, 0.6, trial % 2 == 0);
    const auto gs = enumerate_ground_states(inst);
    if (gs.size() < 2) continue;
    const auto driver = DriverSpec::uniform(1, 1.0);
    if (!build_first_order_V(gs, driver).trivial()) continue;
    const auto m = build_second_order_V(gs, driver, inst);
    std::vector<Word> words;
    for (auto s : gs.states) words.push_back(s.bits);
    const auto ref = dense_second_order(inst, oracle::dense_all_subsets_driver(n, {1.0}, -1.0), words, gs.energy);
    EXPECT_LT((m.V - ref).cwiseAbs().maxCoeff(), 1e-12);
    ++checked;
  }
  EXPECT_GE(checked, 10);
}

TEST(SecondOrder, GroundEnergyComesFromInstance) {
  const auto base = load_instance(std::string(FAIRSAMPLE_SOURCE_DIR) + "/data/fixtures/sensitivity.json");
  const auto shared = enumerate_ground_states(base);
  const auto driver = DriverSpec::uniform(1);
  for (double v : {-1.2, -1.8}) {
    const auto variant = base.with_coupler(4, 5, v);
    const auto own = enumerate_ground_states(variant);
    ASSERT_EQ(own.states, shared.states);
    ASSERT_NE(own.energy, shared.energy);
    const auto a = build_second_order_V(shared, driver, variant);
    const auto b = build_second_order_V(own, driver, variant);
    EXPECT_LT((a.V - b.V).cwiseAbs().maxCoeff(), 1e-12);
  }
  // Ferromagnet ground states are not degenerate once a field is applied.
  const auto fm = ProblemInstance(2, {{0, 1, 1.0}});
  EXPECT_THROW(build_second_order_V(enumerate_ground_states(fm), driver, ProblemInstance(2, {{0, 1, 1.0}}, {{0, 0.5}})),
               Error);
}

TEST(SecondOrder, RefusedWhenFirstOrderActs) {
  const auto gs = enumerate_ground_states(af_triangle());
  try {
    build_second_order_V(gs, DriverSpec::uniform(1), af_triangle());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::nontrivial_first_order);
  }
}

TEST(Perturbation, PermutationCovariance) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5;
    std::set<Word> picks;
    while (picks.size() < 5) picks.insert(rng() & low_mask(n));
    const auto set = set_of(n, {picks.begin(), picks.end()});
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Word> mapped;
    for (auto s : set.states) mapped.push_back(permute_config(s, perm).bits);
    const auto pset = set_of(n, mapped);
    const auto a = predict(build_first_order_V(set, DriverSpec::uniform(2)));
    const auto b = predict(build_first_order_V(pset, DriverSpec::uniform(2)));
    EXPECT_EQ(a.category, b.category);
    for (std::size_t i = 0; i < set.size() && !a.probabilities.empty(); ++i) {
      const auto j = std::find(pset.states.begin(), pset.states.end(), permute_config(set.states[i], perm)) - pset.states.begin();
      EXPECT_NEAR(a.probabilities[i], b.probabilities[static_cast<std::size_t>(j)], 1e-9);
    }
  }
}

TEST(DriverStudy, DenseRowIsFairAndDeterministic) {
  const auto rows = driver_study(4, 5, {1, 2, 3, 4}, 400, 77);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(rows[3].fair, 1.0);
  for (const auto& r : rows) EXPECT_NEAR(r.fair + r.soft + r.hard + r.highord, 1.0, 1e-12);
  const auto again = driver_study(4, 5, {1, 2, 3, 4}, 400, 77);
  for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(study_csv_row(rows[k]), study_csv_row(again[k]));
}

TEST(DriverStudy, ExhaustiveWhenSubsetsAreFew) {
  const auto rows = driver_study(3, 2, {1}, 400, 1);
  EXPECT_TRUE(rows[0].exhaustive);
  EXPECT_EQ(rows[0].samples, 28u);
  // 12 of the 28 pairs of 3-bit words differ in exactly one bit.
  EXPECT_DOUBLE_EQ(rows[0].fair, 12.0 / 28.0);
  EXPECT_DOUBLE_EQ(rows[0].highord, 16.0 / 28.0);
}

TEST(DriverStudy, TwentySpinPairsFollowHammingStatistics) {
  const std::vector<int> orders{1, 2, 3, 4, 5, 6};
  const auto rows = driver_study(20, 2, orders, 400, 5);
  for (const auto& r : rows) {
    const double p = pair_fair_probability(20, r.driver_order);
    const double sigma = std::sqrt(p * (1 - p) / 400.0);
    EXPECT_NEAR(r.fair, p, 4 * sigma + 1e-12) << "order " << r.driver_order;
    EXPECT_DOUBLE_EQ(r.fair + r.highord, 1.0);
  }
}

TEST(DriverStudy, RandomSubsetsAreDistinct) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = detail::random_subset(Word{1} << 4, 16, rng);
    EXPECT_EQ(std::set<Word>(s.begin(), s.end()).size(), 16u);
  }
  EXPECT_EQ(detail::all_subsets(5, 2).size(), 10u);
}

TEST(DriverStudy, CsvLayout) {
  EXPECT_EQ(study_csv_header(), "n_spins,degeneracy,driver_order,fair,soft,hard,highord,samples,seed\n");
  const auto rows = driver_study(4, 2, {4}, 10, 9);
  EXPECT_EQ(study_csv_row(rows[0]), "4,2,4,1,0,0,0,10,9\n");
}
