#include "doctest.h"
#include "support.hpp"

using namespace landcover;

namespace {

CompositionMap random_map(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  CompositionMap m;
  m.geometry = GridGeometry{0.0, 0.0, 1.0, rows, cols};
  m.categories = default_categories(3);
  for (Index i = 0; i < rows * cols; ++i) m.cells.emplace_back(dirichlet_sample(Composition{0.4, 0.4, 0.2}, 5.0, rng));
  return m;
}

}  // namespace

TEST_SUITE("validation") {

TEST_CASE("fold sizes") {
  auto sorted_sizes = [](std::size_t n, std::size_t k) {
    auto s = make_folds(n, k, 7).sizes();
    std::sort(s.begin(), s.end());
    return s;
  };
  CHECK(sorted_sizes(12, 6) == std::vector<std::size_t>{2, 2, 2, 2, 2, 2});
  CHECK(sorted_sizes(13, 6) == std::vector<std::size_t>{2, 2, 2, 2, 2, 3});
  CHECK(make_folds(40, 6, 3).assignments == make_folds(40, 6, 3).assignments);
  CHECK(make_folds(40, 6, 3).assignments != make_folds(40, 6, 4).assignments);
  CHECK_THROWS_AS(make_folds(3, 4, 1), InvalidArgument);
  CHECK_THROWS_AS(make_folds(3, 0, 1), InvalidArgument);
}

TEST_CASE("leave-one-out yields one pair per observation") {
  const auto b = bench::make(bench::Options{3, 3}, 1);
  const std::size_t n = b.sim.obs.size();
  const CvPlan plan = make_folds(n, n, 2);
  const CvResult r = cross_validate_pooled_mean(b.sim.obs, plan);
  CHECK(r.pairs == n);
  CHECK(r.fold_acd.size() == n);
  for (std::size_t f = 0; f < n; ++f) CHECK(plan.fold(f).size() == 1);
}

TEST_CASE("cross-validation arithmetic") {
  const auto b = bench::make(bench::Options{5, 5}, 2);
  const CvPlan plan = make_folds(b.sim.obs.size(), 4, 3);
  Composition u{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  const CvResult r = cross_validate_with(
      b.sim.obs, plan, [&](std::size_t, const ObservationSet&, const ObservationSet& test) { return std::vector<Composition>(test.size(), u); }, 2);
  std::vector<Composition> pred(b.sim.obs.size(), u);
  CHECK(r.pooled_acd == doctest::Approx(average_compositional_distance(pred, b.sim.obs.y)).epsilon(1e-12));
  for (std::size_t i = 0; i < r.predictions.size(); ++i) CHECK(r.predictions[i] == u);
  const CvResult perfect = cross_validate_with(b.sim.obs, plan, [](std::size_t, const ObservationSet&, const ObservationSet& t) { return t.y; });
  CHECK(perfect.pooled_acd == 0.0);
  CHECK(perfect.fold_mean_acd == 0.0);
}

TEST_CASE("noiseless interpolating model has near-zero CV error") {
  // The truth is a covariate: alr(z) = (s, -s) with alpha huge and no field signal.
  Rng rng(3);
  LatticeGrid g;
  g.geometry = GridGeometry{0.0, 0.0, 1.0, 5, 5};
  g.categories = default_categories(3);
  g.scalars["s"] = bench::standard_normal(25, rng);
  ObservationSet obs;
  for (Index i = 0; i < 25; i += 2) {
    obs.cell_indices.push_back(i);
    const double s = g.scalars["s"][i];
    obs.y.push_back(dirichlet_sample(alr_inverse(AlrVector(Eigen::Vector2d(0.2 + s, -0.1 - 0.5 * s))), 1e6, rng));
  }
  ModelSpec spec;
  spec.grid = g;
  spec.covariates = {"s"};
  const CvResult r = cross_validate(spec, obs, bench::chain(4000, 1000, 4), make_folds(obs.size(), 4, 5), CvOptions{0.5, 1});
  CHECK(r.pooled_acd < 0.1);
}

TEST_CASE("shortened chains") {
  const ChainConfig c = shortened(bench::chain(10000, 2000, 1, 10), 0.25);
  CHECK(c.n_samples == 2500);
  CHECK(c.burn_in == 500);
  CHECK_THROWS_AS(shortened(c, 0.0), ConfigError);
}

TEST_CASE("DIC of a one-sample chain") {
  const auto b = bench::make(bench::Options{3, 3}, 4);
  const HierarchicalModel model = bench::model_for(b, {"signal"});
  const PosteriorSummary s = run_chain(model, bench::chain(2, 1, 1, 1));
  REQUIRE(s.recorded == 1);
  const DicResult d = dic(s, model);
  CHECK(std::abs(d.p_d) < 1e-9);
  CHECK(d.dic == doctest::Approx(s.traces.column("deviance")[0]).epsilon(1e-12));
}

TEST_CASE("DIC pieces on a real chain") {
  const auto b = bench::make(bench::Options{5, 5}, 5);
  const HierarchicalModel model = bench::model_for(b, {"signal"});
  const PosteriorSummary s = run_chain(model, bench::chain(2000, 500, 2));
  const DicResult d = dic(s, model);
  CHECK(d.dic == doctest::Approx(d.mean_deviance + d.p_d));
  CHECK(d.p_d > 0.0);
}

TEST_CASE("map comparison") {
  const CompositionMap a = random_map(4, 4, 1), b = random_map(4, 4, 2), c = random_map(4, 4, 3);
  const ComparisonReport self = compare_maps({{"a", a}, {"a2", a}});
  CHECK(self.pairwise(0, 1) == 0.0);
  CHECK_FALSE(self.to_reference.has_value());

  const ComparisonReport r = compare_maps({{"a", a}, {"b", b}, {"c", c}}, &c);
  CHECK(r.pairwise == r.pairwise.transpose());
  CHECK(r.pairwise.diagonal().isZero(0.0));
  CHECK(r.pairwise(0, 2) <= r.pairwise(0, 1) + r.pairwise(1, 2) + 1e-12);
  REQUIRE(r.to_reference.has_value());
  CHECK((*r.to_reference)[2] == 0.0);
  CHECK((*r.to_reference)[0] == doctest::Approx(r.pairwise(0, 2)).epsilon(1e-14));
  CHECK(r.cells == 16);
}

TEST_CASE("one differing cell") {
  const CompositionMap a = random_map(3, 4, 4);
  CompositionMap b = a;
  b.cells[5] = Composition{0.1, 0.1, 0.8};
  const ComparisonReport r = compare_maps({{"a", a}, {"b", b}});
  CHECK(r.pairwise(0, 1) == doctest::Approx(aitchison_distance(*a.cells[5], *b.cells[5]) / std::sqrt(12.0)).epsilon(1e-13));
  const auto d = distance_map(a, b);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(*d[i] == (i == 5 ? aitchison_distance(*a.cells[5], *b.cells[5]) : 0.0));
}

TEST_CASE("comparison uses shared cells and checks the grid") {
  CompositionMap a = random_map(3, 3, 5), b = random_map(3, 3, 6);
  a.cells[0].reset();
  b.cells[8].reset();
  CHECK(compare_maps({{"a", a}, {"b", b}}).cells == 7);
  CHECK_THROWS_AS(compare_maps({{"a", a}, {"c", random_map(3, 4, 7)}}), DataError);
  CompositionMap empty = a;
  for (auto& c : empty.cells) c.reset();
  CHECK_THROWS_AS(compare_maps({{"a", a}, {"e", empty}}), DataError);
}

}  // TEST_SUITE
