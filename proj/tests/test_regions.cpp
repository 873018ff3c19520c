#include "doctest.h"
#include "support.hpp"

using namespace landcover;

namespace {

PosteriorSummary cloud(const Eigen::Vector2d& mean, double sd, int n, std::uint64_t seed) {
  Rng rng(seed);
  PosteriorSummary s;
  s.nodes = 1;
  s.fields = 2;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd e(1, 2);
    e << mean[0] + sd * rng.normal(), mean[1] + sd * rng.normal();
    s.eta_samples.push_back(e);
    s.sample_alpha.push_back(20.0);
  }
  return s;
}

}  // namespace

TEST_SUITE("regions") {

TEST_CASE("wide cloud covers most of the triangle") {
  const auto s = cloud({0.0, 0.0}, 5.0, 4000, 1);
  for (RegionMethod m : {RegionMethod::gaussian, RegionMethod::kde}) {
    RegionOptions o;
    o.method = m;
    o.raster = 256;
    const PredictiveRegion r = predictive_region(s, 0, 0.95, o);
    CHECK(r.coverage_fraction > 0.5);
    CHECK(r.coverage_fraction <= 1.0);
  }
}

TEST_CASE("point mass covers at most one raster cell") {
  auto s = cloud({0.3, -0.2}, 0.0, 50, 2);
  for (RegionMethod m : {RegionMethod::gaussian, RegionMethod::kde}) {
    RegionOptions o;
    o.method = m;
    const PredictiveRegion r = predictive_region(s, 0, 0.95, o);
    CHECK(r.covered_cells <= 1);
    CHECK(r.coverage_fraction <= 1.0 / static_cast<double>(r.triangle_cells));
  }
}

TEST_CASE("nested levels") {
  const auto s = cloud({1.0, -0.5}, 0.6, 2000, 3);
  for (RegionMethod m : {RegionMethod::gaussian, RegionMethod::kde}) {
    RegionOptions o;
    o.method = m;
    const PredictiveRegion a = predictive_region(s, 0, 0.5, o), b = predictive_region(s, 0, 0.8, o), c = predictive_region(s, 0, 0.95, o);
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
      CHECK((!a.mask[i] || b.mask[i]));
      CHECK((!b.mask[i] || c.mask[i]));
    }
    CHECK(a.coverage_fraction < c.coverage_fraction);
    CHECK_FALSE(c.boundary.empty());
  }
}

TEST_CASE("a tight cloud's region contains its centre") {
  const Eigen::Vector2d centre(0.4, 0.1);
  const auto s = cloud(centre, 0.2, 1000, 4);
  const PredictiveRegion r = predictive_region(s, 0, 0.9);
  const auto [px, py] = detail::raster_cell_of(alr_inverse(AlrVector(Eigen::VectorXd(centre))), r.raster);
  CHECK(r.mask[static_cast<std::size_t>(py * r.raster + px)] == 1);
  CHECK(r.coverage_fraction < 0.2);
}

TEST_CASE("observation noise widens the region") {
  const auto s = cloud({0.2, 0.2}, 0.1, 2000, 5);
  RegionOptions o;
  const double plain = predictive_region(s, 0, 0.9, o).coverage_fraction;
  o.observation_noise = true;
  o.seed = 11;
  CHECK(predictive_region(s, 0, 0.9, o).coverage_fraction > plain);
}

TEST_CASE("argument checks") {
  const auto s = cloud({0.0, 0.0}, 1.0, 100, 6);
  CHECK_THROWS_AS(predictive_region(s, 0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(predictive_region(s, 0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(predictive_region(s, 3, 0.9), InvalidArgument);
  CHECK_THROWS_AS(predictive_region(cloud({0.0, 0.0}, 1.0, 5, 7), 0, 0.9), InsufficientSamples);
}

}  // TEST_SUITE
