#pragma once

// Independent reference computations and synthetic benchmark fixtures shared
// by the unit and acceptance tests. Oracles avoid the library's own numerics:
// multiprecision special functions, dense linear algebra, brute-force sums.

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "landcover.hpp"

namespace oracle {

using landcover::Index;
using mp = boost::multiprecision::cpp_bin_float_50;

inline double dirichlet_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& z, double alpha) {
  const mp a(alpha);
  mp lp = boost::math::lgamma(a);
  for (Index k = 0; k < y.size(); ++k) {
    const mp ak = a * mp(z[k]);
    lp += (ak - 1) * boost::multiprecision::log(mp(y[k])) - boost::math::lgamma(ak);
  }
  return static_cast<double>(lp);
}

// exp / sum in long double, no max shift.
inline Eigen::VectorXd alr_inverse(const Eigen::VectorXd& eta) {
  long double denom = 1.0L;
  for (Index k = 0; k < eta.size(); ++k) denom += std::exp(static_cast<long double>(eta[k]));
  Eigen::VectorXd z(eta.size() + 1);
  for (Index k = 0; k < eta.size(); ++k) z[k] = static_cast<double>(std::exp(static_cast<long double>(eta[k])) / denom);
  z[eta.size()] = static_cast<double>(1.0L / denom);
  return z;
}

// Aitchison distance from all pairwise log-ratios.
inline double aitchison_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Index k = x.size();
  long double acc = 0.0L;
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      const long double d = std::log(static_cast<long double>(x[i]) / x[j]) - std::log(static_cast<long double>(y[i]) / y[j]);
      acc += d * d;
    }
  }
  return static_cast<double>(std::sqrt(acc / k));
}

// Dense SPDE precision built from the lattice definition: unit cell areas,
// 4-neighbour graph Laplacian, Q = (kappa^2 C + G) C^-1 (kappa^2 C + G) / (4 pi kappa^2).
inline Eigen::MatrixXd spde_precision(Index rows, Index cols, double kappa) {
  const Index n = rows * cols;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      const Index nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& p : nb) {
        if (p[0] < 0 || p[0] >= rows || p[1] < 0 || p[1] >= cols) continue;
        g(i, p[0] * cols + p[1]) -= 1.0;
        g(i, i) += 1.0;
      }
    }
  }
  const Eigen::MatrixXd cmat = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd k = kappa * kappa * cmat + g;
  return (k.transpose() * cmat.inverse() * k) / (4.0 * M_PI * kappa * kappa);
}

// Kronecker product a (x) b.
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

// Covariance of vec(X) with fields stacked one after another.
inline Eigen::MatrixXd field_covariance(Index rows, Index cols, double kappa, const Eigen::MatrixXd& sigma) {
  const Eigen::MatrixXd q = spde_precision(rows, cols, kappa);
  return kron(sigma, q.inverse());
}

// Multivariate normal log-density through the covariance matrix.
inline double mvn_logpdf(const Eigen::VectorXd& v, const Eigen::MatrixXd& cov) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const double logdet = ldlt.vectorD().array().log().sum();
  const double quad = v.dot(ldlt.solve(v));
  return -0.5 * (static_cast<double>(v.size()) * std::log(2.0 * M_PI) + logdet + quad);
}

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle

namespace bench {

using namespace landcover;

struct Options {
  Index rows = 15;
  Index cols = 15;
  double observed = 0.6;
  double alpha = 50.0;
  double kappa = 1.0;
  double field_sd = 0.7;
  bool smooth_signal = true;
  std::size_t noise_covariates = 0;
  Eigen::MatrixXd beta;  // default: intercept (0.3, -0.2), signal (0.8, -0.6)
};

struct Benchmark {
  LatticeGrid grid;
  std::vector<bool> mask;
  std::vector<Index> observed_cells;
  Eigen::MatrixXd beta;
  Eigen::MatrixXd sigma;
  DesignMatrix true_design;
  SimulatedDataset sim;
};

inline Eigen::VectorXd standard_normal(Index n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Synthetic dataset: covariate "signal" drives the truth; "white" is an
// unrelated white-noise covariate and "noise1".. extra unrelated ones.
inline Benchmark make(const Options& o, std::uint64_t seed) {
  Benchmark b;
  const Index n = o.rows * o.cols;
  b.grid.geometry = GridGeometry{0.0, 0.0, 1.0, o.rows, o.cols};
  b.grid.categories = default_categories(3);
  b.grid.domain.assign(static_cast<std::size_t>(n), true);

  Rng cov_rng(derive_seed(seed, 1));
  if (o.smooth_signal) {
    const GmrfSpec smooth{0.3, Eigen::MatrixXd::Identity(1, 1), b.grid.geometry.graph()};
    b.grid.scalars["signal"] = sample_field(smooth, cov_rng).values().col(0) + 0.3 * standard_normal(n, cov_rng);
  } else {
    b.grid.scalars["signal"] = standard_normal(n, cov_rng);
  }
  b.grid.scalars["white"] = standard_normal(n, cov_rng);
  for (std::size_t q = 0; q < o.noise_covariates; ++q) b.grid.scalars["noise" + std::to_string(q + 1)] = standard_normal(n, cov_rng);

  Rng mask_rng(derive_seed(seed, 2));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(mask_rng.below(i))]);
  const auto n_obs = static_cast<std::size_t>(std::llround(o.observed * static_cast<double>(n)));
  b.mask.assign(static_cast<std::size_t>(n), false);
  for (std::size_t i = 0; i < n_obs; ++i) b.mask[static_cast<std::size_t>(order[i])] = true;
  for (Index i = 0; i < n; ++i) {
    if (b.mask[static_cast<std::size_t>(i)]) b.observed_cells.push_back(i);
  }

  b.true_design = build_design(b.grid, {"signal"}, b.observed_cells);
  if (o.beta.size() > 0) {
    b.beta = o.beta;
  } else {
    b.beta.resize(2, 2);
    b.beta << 0.3, -0.2, 0.8, -0.6;
  }
  b.sigma.resize(2, 2);
  b.sigma << 1.0, 0.3, 0.3, 1.0;
  b.sigma *= o.field_sd * o.field_sd;
  const GmrfSpec spec{o.kappa, b.sigma, b.grid.geometry.graph()};
  Rng sim_rng(derive_seed(seed, 3));
  b.sim = simulate_dataset(spec, b.true_design, b.beta, o.alpha, b.mask, sim_rng);
  return b;
}

inline HierarchicalModel model_for(const Benchmark& b, const std::vector<std::string>& covariates,
                                   const ModelPriors& priors = {}) {
  DesignMatrix d = build_design(b.grid, covariates, b.sim.obs.cell_indices);
  return HierarchicalModel(b.grid.geometry.graph(), std::move(d), b.sim.obs, 3, priors);
}

inline ChainConfig chain(std::int64_t n, std::int64_t burn, std::uint64_t seed, std::int64_t thin = 10) {
  ChainConfig c;
  c.n_samples = n;
  c.burn_in = burn;
  c.thin = thin;
  c.seed = seed;
  return c;
}

}  // namespace bench

namespace files {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("landcover_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Every regular file in both directories has identical bytes.
inline bool identical_dirs(const std::filesystem::path& a, const std::filesystem::path& b, std::string* why = nullptr) {
  std::vector<std::string> na, nb;
  for (const auto& e : std::filesystem::directory_iterator(a)) na.push_back(e.path().filename().string());
  for (const auto& e : std::filesystem::directory_iterator(b)) nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) {
    if (why) *why = "file lists differ";
    return false;
  }
  for (const auto& n : na) {
    if (slurp(a / n) != slurp(b / n)) {
      if (why) *why = n + " differs";
      return false;
    }
  }
  return true;
}

}  // namespace files
