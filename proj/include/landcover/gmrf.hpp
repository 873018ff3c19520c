#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/constants/constants.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "landcover/compositional.hpp"
#include "landcover/error.hpp"
#include "landcover/random.hpp"

namespace landcover {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Regular rows x cols lattice with 4-neighbour adjacency. Nodes are numbered
// row-major: node(r, c) = r * cols + c.
class LatticeGraph {
 public:
  LatticeGraph() = default;

  LatticeGraph(Index rows, Index cols, Eigen::VectorXd node_area = {}) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) throw InvalidArgument("lattice dimensions must be positive");
    const Index n = rows * cols;
    if (node_area.size() == 0) node_area = Eigen::VectorXd::Ones(n);
    if (node_area.size() != n) throw InvalidArgument("node_area length does not match the lattice");
    if (!((node_area.array() > 0.0).all())) throw InvalidArgument("node areas must be positive");
    area_ = std::move(node_area);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(4 * n));
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        const Index i = node(r, c);
        if (c + 1 < cols) {
          trips.emplace_back(i, i + 1, 1.0);
          trips.emplace_back(i + 1, i, 1.0);
        }
        if (r + 1 < rows) {
          trips.emplace_back(i, i + cols, 1.0);
          trips.emplace_back(i + cols, i, 1.0);
        }
      }
    }
    adjacency_.resize(n, n);
    adjacency_.setFromTriplets(trips.begin(), trips.end());
    adjacency_.makeCompressed();
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return rows_ * cols_; }
  Index node(Index r, Index c) const { return r * cols_ + c; }

  const SparseMatrix& adjacency() const { return adjacency_; }
  const Eigen::VectorXd& node_area() const { return area_; }

  // G = D - A.
  SparseMatrix laplacian() const {
    SparseMatrix lap = -adjacency_;
    Eigen::VectorXd degree = adjacency_ * Eigen::VectorXd::Ones(size());
    for (Index i = 0; i < size(); ++i) lap.coeffRef(i, i) += degree[i];
    lap.makeCompressed();
    return lap;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Eigen::VectorXd area_;
  SparseMatrix adjacency_;
};

// Latent spatial effect X: one column per alr coordinate.
class LatentField {
 public:
  LatentField() = default;
  explicit LatentField(Eigen::MatrixXd x) : x_(std::move(x)) {
    if (!x_.allFinite()) throw InvalidArgument("latent field has non-finite entries");
  }
  static LatentField zeros(Index n, Index m) { return LatentField(Eigen::MatrixXd::Zero(n, m)); }

  Index nodes() const { return x_.rows(); }
  Index fields() const { return x_.cols(); }
  const Eigen::MatrixXd& values() const { return x_; }
  Eigen::MatrixXd& mutable_values() { return x_; }

 private:
  Eigen::MatrixXd x_;
};

struct GmrfSpec {
  double kappa = 1.0;
  Eigen::MatrixXd sigma;
  LatticeGraph graph;

  Index fields() const { return sigma.rows(); }

  void validate() const {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("GMRF kappa must be positive");
    if (sigma.rows() != sigma.cols() || sigma.rows() < 1) throw InvalidArgument("sigma must be square");
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw NumericError("sigma is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw NumericError("sigma is not positive definite");
  }
};

// Marginal-variance normalization of the SPDE precision: with unit cells the
// interior variance of Q(kappa) is close to one.
inline double precision_scale(double kappa) {
  return 1.0 / (4.0 * boost::math::constants::pi<double>() * kappa * kappa);
}

// Q(kappa) = c(kappa) (kappa^2 C + G)^T C^{-1} (kappa^2 C + G), stored as the
// expansion c (kappa^4 C + 2 kappa^2 G + G C^{-1} G) on one shared sparsity
// pattern so the sampler can refill values without reallocating.
class PrecisionBuilder {
 public:
  PrecisionBuilder() = default;

  explicit PrecisionBuilder(const LatticeGraph& graph) : n_(graph.size()) {
    SparseMatrix mass(n_, n_);
    {
      std::vector<Eigen::Triplet<double>> trips;
      for (Index i = 0; i < n_; ++i) trips.emplace_back(i, i, graph.node_area()[i]);
      mass.setFromTriplets(trips.begin(), trips.end());
    }
    SparseMatrix inv_mass(n_, n_);
    {
      std::vector<Eigen::Triplet<double>> trips;
      for (Index i = 0; i < n_; ++i) trips.emplace_back(i, i, 1.0 / graph.node_area()[i]);
      inv_mass.setFromTriplets(trips.begin(), trips.end());
    }
    const SparseMatrix lap = graph.laplacian();
    SparseMatrix g2 = SparseMatrix(lap * inv_mass) * lap;
    g2 = 0.5 * (g2 + SparseMatrix(g2.transpose()));

    // Align the three terms on the union pattern by adding explicit zeros.
    SparseMatrix pattern = mass + lap + g2;
    pattern.makeCompressed();
    pattern_ = pattern;
    mass_ = aligned(mass, pattern);
    lap_ = aligned(lap, pattern);
    g2_ = aligned(g2, pattern);
  }

  Index size() const { return n_; }

  SparseMatrix build(double kappa) const {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("build_scalar_precision: kappa must be positive");
    SparseMatrix q = pattern_;
    fill(kappa, q);
    return q;
  }

  // Overwrites the values of q (which must carry this builder's pattern).
  void fill(double kappa, SparseMatrix& q) const {
    const double k2 = kappa * kappa;
    const double c = precision_scale(kappa);
    const Index nnz = pattern_.nonZeros();
    double* out = q.valuePtr();
    const double* m = mass_.data();
    const double* l = lap_.data();
    const double* g = g2_.data();
    for (Index t = 0; t < nnz; ++t) out[t] = c * (k2 * k2 * m[t] + 2.0 * k2 * l[t] + g[t]);
  }

  const SparseMatrix& pattern() const { return pattern_; }

 private:
  static std::vector<double> aligned(const SparseMatrix& term, const SparseMatrix& pattern) {
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(pattern.nonZeros()));
    for (Index col = 0; col < pattern.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(pattern, col); it; ++it) vals.push_back(term.coeff(it.row(), it.col()));
    }
    return vals;
  }

  Index n_ = 0;
  SparseMatrix pattern_;
  std::vector<double> mass_, lap_, g2_;
};

inline SparseMatrix build_scalar_precision(const LatticeGraph& graph, double kappa) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("build_scalar_precision: kappa must be positive");
  return PrecisionBuilder(graph).build(kappa);
}

// Sparse Cholesky P A P^T = L L^T with AMD ordering.
class SparseCholesky {
 public:
  using Solver = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  SparseCholesky() = default;
  explicit SparseCholesky(const SparseMatrix& a, const char* what = "sparse Cholesky") {
    analyze(a);
    factorize(a, what);
  }

  void analyze(const SparseMatrix& a) {
    solver_.analyzePattern(a);
    analyzed_ = true;
  }

  // Numeric refactorization of a matrix with the analyzed pattern. Returns
  // false instead of throwing when the matrix is not positive definite.
  bool try_factorize(const SparseMatrix& a) {
    if (!analyzed_) analyze(a);
    solver_.factorize(a);
    ok_ = solver_.info() == Eigen::Success;
    if (ok_) {
      const Eigen::VectorXd diag = solver_.matrixL().nestedExpression().diagonal();
      log_det_ = diag.array().log().sum();
      log_det_ *= 2.0;
      ok_ = std::isfinite(log_det_);
    }
    return ok_;
  }

  void factorize(const SparseMatrix& a, const char* what = "sparse Cholesky") {
    if (!try_factorize(a)) throw NumericError(std::string(what) + ": matrix is not positive definite");
  }

  bool ok() const { return ok_; }
  double log_det() const { return log_det_; }
  Index size() const { return solver_.rows(); }

  template <typename Rhs>
  Eigen::MatrixXd solve(const Rhs& b) const {
    return solver_.solve(b);
  }

  // x = A^{-1/2} e in the sense Cov(x) = A^{-1} for e ~ N(0, I).
  Eigen::MatrixXd whiten_inverse(const Eigen::MatrixXd& e) const {
    Eigen::MatrixXd y = solver_.matrixU().solve(e);
    return solver_.permutationPinv() * y;
  }

 private:
  Solver solver_;
  bool analyzed_ = false;
  bool ok_ = false;
  double log_det_ = 0.0;
};

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& s, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": matrix is not positive definite");
  return llt;
}

inline double dense_log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Sigma^{-1} (x) Q in fields-outer ordering: entry ((a, i), (b, j)) sits at
// (a n + i, b n + j).
inline SparseMatrix joint_precision(const GmrfSpec& spec) {
  spec.validate();
  const Index m = spec.fields();
  const Eigen::LLT<Eigen::MatrixXd> llt = checked_llt(spec.sigma, "joint_precision");
  const Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  const SparseMatrix q = build_scalar_precision(spec.graph, spec.kappa);
  const Index n = q.rows();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(q.nonZeros() * m * m));
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      const double s = 0.5 * (sigma_inv(a, b) + sigma_inv(b, a));
      for (Index col = 0; col < q.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(q, col); it; ++it) {
          trips.emplace_back(a * n + it.row(), b * n + it.col(), s * it.value());
        }
      }
    }
  }
  SparseMatrix joint(n * m, n * m);
  joint.setFromTriplets(trips.begin(), trips.end());
  joint.makeCompressed();
  return joint;
}

// Matrix-normal draw X = L_Q^{-T} E L_Sigma^T given a factored Q.
inline LatentField sample_field(const SparseCholesky& q_factor, const Eigen::MatrixXd& sigma, Rng& rng) {
  const Index n = q_factor.size();
  const Index m = sigma.rows();
  const Eigen::LLT<Eigen::MatrixXd> llt = checked_llt(sigma, "sample_field");
  Eigen::MatrixXd e(n, m);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) e(i, j) = rng.normal();
  }
  Eigen::MatrixXd x = q_factor.whiten_inverse(e) * llt.matrixL().transpose();
  return LatentField(std::move(x));
}

inline LatentField sample_field(const GmrfSpec& spec, Rng& rng) {
  spec.validate();
  const SparseCholesky factor(build_scalar_precision(spec.graph, spec.kappa), "sample_field");
  return sample_field(factor, spec.sigma, rng);
}

// tr(Sigma^{-1} X^T Q X) and the log-density from precomputed factors.
inline double field_logpdf(const Eigen::MatrixXd& x, const SparseMatrix& q, double q_log_det,
                           const Eigen::LLT<Eigen::MatrixXd>& sigma_llt) {
  const Index n = x.rows();
  const Index m = x.cols();
  const Eigen::MatrixXd qx = q * x;
  const Eigen::MatrixXd scatter = x.transpose() * qx;
  const double trace = sigma_llt.solve(scatter).trace();
  const double log_det_sigma_inv = -dense_log_det(sigma_llt);
  const double log2pi = std::log(2.0 * boost::math::constants::pi<double>());
  return -0.5 * (static_cast<double>(n * m) * log2pi - static_cast<double>(m) * q_log_det -
                 static_cast<double>(n) * log_det_sigma_inv + trace);
}

inline double field_logpdf(const LatentField& x, const GmrfSpec& spec) {
  spec.validate();
  if (x.nodes() != spec.graph.size() || x.fields() != spec.fields()) {
    throw InvalidArgument("field_logpdf: field dimensions do not match the GMRF");
  }
  const SparseMatrix q = build_scalar_precision(spec.graph, spec.kappa);
  const SparseCholesky factor(q, "field_logpdf");
  return field_logpdf(x.values(), q, factor.log_det(), checked_llt(spec.sigma, "field_logpdf"));
}

// log Gamma_m(a).
inline double multivariate_lgamma(double a, Index m) {
  double out = 0.25 * static_cast<double>(m * (m - 1)) * std::log(boost::math::constants::pi<double>());
  for (Index j = 0; j < m; ++j) out += detail::lgamma(a - 0.5 * static_cast<double>(j));
  return out;
}

inline double inverse_wishart_logpdf(const Eigen::MatrixXd& sigma, double df, const Eigen::MatrixXd& scale) {
  const Index m = sigma.rows();
  const auto sigma_llt = checked_llt(sigma, "inverse_wishart_logpdf");
  const auto scale_llt = checked_llt(scale, "inverse_wishart_logpdf");
  const double trace = sigma_llt.solve(scale).trace();
  return 0.5 * df * dense_log_det(scale_llt) - 0.5 * df * static_cast<double>(m) * std::log(2.0) -
         multivariate_lgamma(0.5 * df, m) - 0.5 * (df + static_cast<double>(m) + 1.0) * dense_log_det(sigma_llt) -
         0.5 * trace;
}

// Draw from InverseWishart(df, scale) via the Bartlett decomposition of the
// Wishart(df, scale^{-1}) precision.
inline Eigen::MatrixXd sample_inverse_wishart(double df, const Eigen::MatrixXd& scale, Rng& rng) {
  const Index m = scale.rows();
  if (!(df > static_cast<double>(m) - 1.0)) throw DomainError("inverse Wishart needs df > dimension - 1");
  const auto scale_llt = checked_llt(scale, "sample_inverse_wishart");
  const Eigen::MatrixXd scale_inv = scale_llt.solve(Eigen::MatrixXd::Identity(m, m));
  const auto inv_llt = checked_llt(0.5 * (scale_inv + scale_inv.transpose()), "sample_inverse_wishart");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    a(i, i) = std::sqrt(2.0 * rng.gamma(0.5 * (df - static_cast<double>(i))));
    for (Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = inv_llt.matrixL() * a;
  const Eigen::MatrixXd w = la * la.transpose();
  Eigen::MatrixXd out = checked_llt(w, "sample_inverse_wishart").solve(Eigen::MatrixXd::Identity(m, m));
  return 0.5 * (out + out.transpose());
}

// Exact conditional draw Sigma | X ~ IW(prior_df + n, prior_scale + X^T Q X).
inline Eigen::MatrixXd sigma_gibbs_conditional(const Eigen::MatrixXd& x, const SparseMatrix& q, double prior_df,
                                               const Eigen::MatrixXd& prior_scale, Rng& rng) {
  const Index m = x.cols();
  if (!(prior_df > static_cast<double>(m) - 1.0)) throw DomainError("sigma_gibbs_conditional: prior_df too small");
  if (prior_scale.rows() != m || prior_scale.cols() != m || q.rows() != x.rows()) {
    throw InvalidArgument("sigma_gibbs_conditional: dimension mismatch");
  }
  Eigen::MatrixXd scatter = x.transpose() * (q * x);
  Eigen::MatrixXd post_scale = prior_scale + 0.5 * (scatter + scatter.transpose());
  return sample_inverse_wishart(prior_df + static_cast<double>(x.rows()), post_scale, rng);
}

inline Eigen::MatrixXd sigma_gibbs_conditional(const LatentField& x, const SparseMatrix& q, double prior_df,
                                               const Eigen::MatrixXd& prior_scale, Rng& rng) {
  return sigma_gibbs_conditional(x.values(), q, prior_df, prior_scale, rng);
}

}  // namespace landcover
