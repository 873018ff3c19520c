#include <boost/math/distributions/beta.hpp>

#include "doctest.h"
#include "support.hpp"

using namespace landcover;

TEST_SUITE("compositional") {

TEST_CASE("alr inverse at hand-computed points") {
  const Composition a = alr_inverse(AlrVector(Eigen::Vector2d(0.0, 0.0)));
  for (Index k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Composition b = alr_inverse(AlrVector(Eigen::Vector2d(std::log(2.0), 0.0)));
  CHECK(b[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b[2] == doctest::Approx(0.25).epsilon(1e-15));
  const Composition c = alr_inverse(AlrVector(Eigen::Vector2d(0.9163, 0.4055)));
  CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(c[1] == doctest::Approx(0.3).epsilon(1e-4));
  CHECK(c[2] == doctest::Approx(0.2).epsilon(1e-4));
}

TEST_CASE("alr forward") {
  const AlrVector e = alr_forward(Composition{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  CHECK(std::abs(e[0]) < 1e-15);
  CHECK(std::abs(e[1]) < 1e-15);
  const AlrVector f = alr_forward(Composition{0.5, 0.3, 0.2});
  CHECK(f[0] == doctest::Approx(std::log(2.5)).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(std::log(1.5)).epsilon(1e-14));
  CHECK_THROWS_AS(alr_forward(Composition{1.0, 0.0, 0.0}), DomainError);
}

TEST_CASE("alr inverse agrees with the long-double oracle and stays finite") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd eta(3);
    for (Index k = 0; k < 3; ++k) eta[k] = rng.normal(0.0, 8.0);
    const Eigen::VectorXd lib = alr_inverse(AlrVector(eta)).values();
    const Eigen::VectorXd ref = oracle::alr_inverse(eta);
    CHECK((lib - ref).cwiseAbs().maxCoeff() < 1e-14);
  }
  const Composition big = alr_inverse(AlrVector(Eigen::Vector2d(800.0, -800.0)));
  CHECK(big[0] == 1.0);
  CHECK(big.values().allFinite());
}

TEST_CASE("composition invariants") {
  CHECK_THROWS_AS(Composition({0.5, 0.6}), DomainError);
  CHECK_THROWS_AS(Composition({-0.1, 1.1}), DomainError);
  CHECK_THROWS_AS(Composition({1.0}), InvalidArgument);
  CHECK_THROWS_AS(Composition::closure(Eigen::Vector2d(0.0, 0.0)), DomainError);
  const Composition c = Composition::closure(Eigen::Vector3d(2.0, 1.0, 1.0));
  CHECK(c[0] == 0.5);
}

TEST_CASE("Dirichlet log-density") {
  const Composition u{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  CHECK(dirichlet_logpdf(u, u, 3.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const Composition h{0.5, 0.25, 0.25};
  for (double alpha : {0.7, 4.0, 60.0, 900.0}) {
    CHECK(std::abs(dirichlet_logpdf(h, h, alpha) - oracle::dirichlet_logpdf(h.values(), h.values(), alpha)) < 1e-10);
  }
  CHECK_THROWS_AS(dirichlet_logpdf(h, h, 0.0), DomainError);
}

TEST_CASE("Dirichlet sampling moments") {
  Rng rng(2);
  const Composition z{0.5, 0.3, 0.2};
  const double alpha = 8.0;
  const int n = 1000000;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) s += dirichlet_sample(z, alpha, rng).values();
  for (Index k = 0; k < 3; ++k) {
    const double se = std::sqrt(z[k] * (1.0 - z[k]) / (alpha + 1.0) / n);
    CHECK(std::abs(s[k] / n - z[k]) < 3.0 * se);
  }
}

TEST_CASE("Dirichlet concentrates as alpha grows") {
  Rng rng(3);
  const Composition z{0.6, 0.3, 0.1};
  double prev = 1.0;
  for (double alpha : {10.0, 1e3, 1e6}) {
    double v = 0.0;
    for (int i = 0; i < 2000; ++i) v += std::pow(dirichlet_sample(z, alpha, rng)[0] - z[0], 2);
    v /= 2000.0;
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("two-part Dirichlet marginal is Beta") {
  Rng rng(4);
  const Composition z{0.3, 0.7};
  const double alpha = 5.0;
  std::vector<double> draws;
  for (int i = 0; i < 20000; ++i) draws.push_back(dirichlet_sample(z, alpha, rng)[0]);
  std::sort(draws.begin(), draws.end());
  const boost::math::beta_distribution<double> beta(alpha * 0.3, alpha * 0.7);
  double ks = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = boost::math::cdf(beta, draws[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / draws.size()), std::abs(f - static_cast<double>(i + 1) / draws.size())});
  }
  CHECK(ks < 1.63 / std::sqrt(20000.0));  // 1% Kolmogorov-Smirnov critical value
}

TEST_CASE("Dirichlet draws survive tiny shapes") {
  Rng rng(5);
  const Composition z{0.999, 0.0005, 0.0005};
  for (int i = 0; i < 1000; ++i) {
    const Composition y = dirichlet_sample(z, 2.0, rng);
    CHECK(y.values().allFinite());
  }
}

TEST_CASE("Aitchison distance") {
  Rng rng(6);
  const Composition a{0.5, 0.3, 0.2}, u{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  CHECK(aitchison_distance(a, a) == 0.0);
  CHECK(aitchison_distance(a, u) == doctest::Approx(oracle::aitchison_distance(a.values(), u.values())).epsilon(1e-13));
  for (int i = 0; i < 100; ++i) {
    const Composition x = dirichlet_sample(u, 3.0, rng), y = dirichlet_sample(u, 3.0, rng);
    CHECK(aitchison_distance(x, y) == doctest::Approx(aitchison_distance(y, x)).epsilon(1e-14));
    CHECK(aitchison_distance(x, y) == doctest::Approx(oracle::aitchison_distance(x.values(), y.values())).epsilon(1e-12));
  }
}

TEST_CASE("average compositional distance") {
  Rng rng(7);
  const Composition u{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::vector<Composition> a, b;
  for (int i = 0; i < 20; ++i) {
    a.push_back(dirichlet_sample(u, 4.0, rng));
    b.push_back(dirichlet_sample(u, 4.0, rng));
  }
  CHECK(average_compositional_distance(a, a) == 0.0);
  CHECK(average_compositional_distance(std::span(a).first(1), std::span(b).first(1)) ==
        doctest::Approx(aitchison_distance(a[0], b[0])).epsilon(1e-14));
  long double rms = 0.0L, mean = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = oracle::aitchison_distance(a[i].values(), b[i].values());
    rms += static_cast<long double>(d) * d;
    mean += d;
  }
  CHECK(std::abs(average_compositional_distance(a, b) - static_cast<double>(std::sqrt(rms / 20))) < 1e-12);
  CHECK(std::abs(average_compositional_distance(a, b, AcdAggregation::mean) - static_cast<double>(mean / 20)) < 1e-12);
  CHECK_THROWS_AS(average_compositional_distance(std::span(a).first(2), std::span(b).first(3)), InvalidArgument);
}

TEST_CASE("zero replacement") {
  const double eps = 1e-4;
  const Composition r = replace_zeros(Eigen::Vector3d(1.0, 0.0, 0.0), eps);
  const double e = eps / (1.0 + 2.0 * eps);
  CHECK(r[0] == doctest::Approx(1.0 - 2.0 * e).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(e).epsilon(1e-14));
  CHECK(r[2] == doctest::Approx(e).epsilon(1e-14));
  const Composition keep = replace_zeros(Eigen::Vector3d(0.5, 0.3, 0.2), eps);
  CHECK(keep.values() == Eigen::Vector3d(0.5, 0.3, 0.2));
}

}  // TEST_SUITE
