#pragma once

#include <Eigen/Dense>
#include <boost/math/constants/constants.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "landcover/compositional.hpp"
#include "landcover/error.hpp"
#include "landcover/gmrf.hpp"
#include "landcover/grid.hpp"
#include "landcover/random.hpp"

namespace landcover {

inline constexpr const char* kElevation = "elevation";

// Covariate sets of the six reference models.
inline const std::map<std::string, std::vector<std::string>>& covariate_presets() {
  static const std::map<std::string, std::vector<std::string>> presets = {
      {"Constant", {}},
      {"Elevation", {kElevation}},
      {"K-L_ESM", {kElevation, "K-L_ESM"}},
      {"K-L_RCA3", {kElevation, "K-L_RCA3"}},
      {"H-L_ESM", {kElevation, "H-L_ESM"}},
      {"H-L_RCA3", {kElevation, "H-L_RCA3"}},
  };
  return presets;
}

inline std::vector<std::string> covariate_preset(const std::string& name) {
  const auto& presets = covariate_presets();
  const auto it = presets.find(name);
  if (it == presets.end()) throw ConfigError("unknown model preset '" + name + "'");
  return it->second;
}

enum class CovariateEncoding { alr, raw };

enum class ColumnKind { intercept, scalar, composition };

struct ColumnBlock {
  std::string name;
  ColumnKind kind = ColumnKind::scalar;
  Index first = 0;
  Index count = 1;
};

// Covariate matrix B. Column 0 is the intercept; every other column was
// standardized with (center, scale) computed over the observed cells.
struct DesignMatrix {
  Eigen::MatrixXd b;
  std::vector<std::string> column_names;
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<ColumnBlock> blocks;
  CovariateEncoding encoding = CovariateEncoding::alr;

  Index rows() const { return b.rows(); }
  Index predictors() const { return b.cols(); }

  // Unstandardized design supplied directly (fixtures, simulation studies).
  static DesignMatrix from_matrix(Eigen::MatrixXd b, std::vector<std::string> names = {}) {
    if (b.cols() < 1 || !(b.col(0).array() == 1.0).all()) {
      throw InvalidArgument("design matrix column 0 must be the intercept");
    }
    if (names.empty()) {
      names.push_back("intercept");
      for (Index j = 1; j < b.cols(); ++j) names.push_back("x" + std::to_string(j));
    }
    if (static_cast<Index>(names.size()) != b.cols()) throw InvalidArgument("design column name count mismatch");
    DesignMatrix d;
    d.center = Eigen::VectorXd::Zero(b.cols());
    d.scale = Eigen::VectorXd::Ones(b.cols());
    d.blocks.push_back({names[0], ColumnKind::intercept, 0, 1});
    for (Index j = 1; j < b.cols(); ++j) d.blocks.push_back({names[static_cast<std::size_t>(j)], ColumnKind::scalar, j, 1});
    d.b = std::move(b);
    d.column_names = std::move(names);
    return d;
  }

  // Blocks built from auxiliary land-cover compositions.
  std::vector<ColumnBlock> composition_blocks() const {
    std::vector<ColumnBlock> out;
    for (const auto& blk : blocks) {
      if (blk.kind == ColumnKind::composition) out.push_back(blk);
    }
    return out;
  }
};

struct DesignOptions {
  CovariateEncoding encoding = CovariateEncoding::alr;
  double epsilon = 1e-4;
};

// Builds B for a covariate list. Standardization statistics use
// `standardize_cells` (the observed cells); when empty, all domain cells.
// Nodes outside the domain get the standardized value 0.
inline DesignMatrix build_design(const LatticeGrid& grid, const std::vector<std::string>& covariates,
                                 std::span<const Index> standardize_cells = {}, const DesignOptions& options = {}) {
  const Index n = grid.size();
  const Index k_parts = grid.parts();
  const Index m = k_parts - 1;

  std::vector<Index> stat_cells(standardize_cells.begin(), standardize_cells.end());
  if (stat_cells.empty()) {
    for (Index i = 0; i < n; ++i) {
      if (grid.in_domain(i)) stat_cells.push_back(i);
    }
  }

  std::set<std::string> seen;
  std::vector<Eigen::VectorXd> raw_columns;
  std::vector<std::string> names{"intercept"};
  std::vector<ColumnBlock> blocks{{"intercept", ColumnKind::intercept, 0, 1}};

  for (const auto& name : covariates) {
    if (!seen.insert(name).second) throw ConfigError("covariate '" + name + "' requested twice");
    const Index first = 1 + static_cast<Index>(raw_columns.size());
    if (auto it = grid.scalars.find(name); it != grid.scalars.end()) {
      const Eigen::VectorXd& v = it->second;
      for (Index i = 0; i < n; ++i) {
        if (grid.in_domain(i) && !std::isfinite(v[i])) {
          throw DataError("covariate '" + name + "' is missing at node " + std::to_string(i));
        }
      }
      raw_columns.push_back(v);
      names.push_back(name);
      blocks.push_back({name, ColumnKind::scalar, first, 1});
    } else if (auto ct = grid.compositions.find(name); ct != grid.compositions.end()) {
      const Eigen::MatrixXd& comp = ct->second;
      if (comp.cols() != k_parts) throw DataError("covariate '" + name + "' has the wrong number of parts");
      Eigen::MatrixXd encoded = Eigen::MatrixXd::Constant(n, m, std::numeric_limits<double>::quiet_NaN());
      for (Index i = 0; i < n; ++i) {
        if (!grid.in_domain(i)) continue;
        const Eigen::VectorXd row = comp.row(i).transpose();
        if (!row.allFinite()) throw DataError("covariate '" + name + "' is missing at node " + std::to_string(i));
        const Composition z = replace_zeros(row, options.epsilon);
        if (options.encoding == CovariateEncoding::alr) {
          encoded.row(i) = alr_forward(z).values().transpose();
        } else {
          encoded.row(i) = z.values().head(m).transpose();
        }
      }
      for (Index j = 0; j < m; ++j) {
        raw_columns.push_back(encoded.col(j));
        names.push_back(name + ":" + grid.categories[static_cast<std::size_t>(j)]);
      }
      blocks.push_back({name, ColumnKind::composition, first, m});
    } else {
      throw ConfigError("unknown covariate '" + name + "'");
    }
  }

  const Index p = 1 + static_cast<Index>(raw_columns.size());
  DesignMatrix d;
  d.b = Eigen::MatrixXd::Zero(n, p);
  d.b.col(0).setOnes();
  d.center = Eigen::VectorXd::Zero(p);
  d.scale = Eigen::VectorXd::Ones(p);
  for (Index j = 1; j < p; ++j) {
    const Eigen::VectorXd& col = raw_columns[static_cast<std::size_t>(j - 1)];
    double mean = 0.0;
    for (Index i : stat_cells) mean += col[i];
    mean /= static_cast<double>(stat_cells.size());
    double var = 0.0;
    for (Index i : stat_cells) var += (col[i] - mean) * (col[i] - mean);
    var /= static_cast<double>(stat_cells.size() > 1 ? stat_cells.size() - 1 : 1);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      throw DataError("covariate column '" + names[static_cast<std::size_t>(j)] + "' is constant over the observed cells");
    }
    d.center[j] = mean;
    d.scale[j] = sd;
    for (Index i = 0; i < n; ++i) d.b(i, j) = grid.in_domain(i) ? (col[i] - mean) / sd : 0.0;
  }
  d.column_names = std::move(names);
  d.blocks = std::move(blocks);
  d.encoding = options.encoding;
  return d;
}

// Regression coefficients with horseshoe scales. local_aux / global_aux are
// the inverse-gamma auxiliaries of the half-Cauchy mixture representation.
struct Coefficients {
  Eigen::MatrixXd beta;           // p x (K-1)
  Eigen::VectorXd local_scales;   // lambda_j, j = 1..p-1
  double global_scale = 1.0;      // tau
  Eigen::VectorXd local_aux;      // nu_j
  double global_aux = 1.0;        // xi

  static Coefficients zeros(Index p, Index m) {
    Coefficients c;
    c.beta = Eigen::MatrixXd::Zero(p, m);
    c.local_scales = Eigen::VectorXd::Ones(p - 1);
    c.local_aux = Eigen::VectorXd::Ones(p - 1);
    return c;
  }
};

struct ModelState {
  LatentField x;
  Coefficients coeffs;
  double alpha = 10.0;
  double kappa = 1.0;
  Eigen::MatrixXd sigma;
};

struct ObservationSet {
  std::vector<Index> cell_indices;
  std::vector<Composition> y;

  std::size_t size() const { return cell_indices.size(); }

  void validate(Index n_nodes, Index k_parts) const {
    if (cell_indices.size() != y.size()) throw InvalidArgument("observation cells and values are not aligned");
    std::set<Index> seen;
    for (std::size_t i = 0; i < cell_indices.size(); ++i) {
      const Index c = cell_indices[i];
      if (c < 0 || c >= n_nodes) throw InvalidArgument("observation cell " + std::to_string(c) + " outside the lattice");
      if (!seen.insert(c).second) throw InvalidArgument("duplicate observation cell " + std::to_string(c));
      if (y[i].size() != k_parts) throw InvalidArgument("observation has the wrong number of parts");
      if (!y[i].strictly_positive()) throw DomainError("observation has zero parts; apply zero replacement first");
    }
  }

  ObservationSet subset(std::span<const std::size_t> which) const {
    ObservationSet out;
    for (std::size_t i : which) {
      out.cell_indices.push_back(cell_indices[i]);
      out.y.push_back(y[i]);
    }
    return out;
  }
};

// Hyperpriors. Defaults: intercept N(0, 10^2), log alpha ~ N(0, 10^2),
// log kappa ~ N(0, 2^2), Sigma ~ IW(K + 1, I), half-Cauchy(0, 1) scales.
struct ModelPriors {
  double intercept_sd = 10.0;
  double log_alpha_mean = 0.0;
  double log_alpha_sd = 10.0;
  double log_kappa_mean = 0.0;
  double log_kappa_sd = 2.0;
  double sigma_df = -1.0;       // <= 0 selects K + 1
  Eigen::MatrixXd sigma_scale;  // empty selects the identity
  double local_scale_prior = 1.0;
  double global_scale_prior = 1.0;

  double resolved_sigma_df(Index m) const { return sigma_df > 0.0 ? sigma_df : static_cast<double>(m + 2); }
  Eigen::MatrixXd resolved_sigma_scale(Index m) const {
    return sigma_scale.size() == 0 ? Eigen::MatrixXd::Identity(m, m) : sigma_scale;
  }
};

inline Eigen::MatrixXd linear_predictor(const DesignMatrix& b, const Coefficients& coeffs, const LatentField& x) {
  if (coeffs.beta.rows() != b.predictors() || x.nodes() != b.rows() || x.fields() != coeffs.beta.cols()) {
    throw InvalidArgument("linear_predictor: dimension mismatch");
  }
  return b.b * coeffs.beta + x.values();
}

namespace detail {

inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * boost::math::constants::pi<double>());
}

inline double half_cauchy_logpdf(double x, double scale) {
  const double r = x / scale;
  return std::log(2.0 / (boost::math::constants::pi<double>() * scale)) - std::log1p(r * r);
}

}  // namespace detail

// Per-block contributions to the log posterior.
struct PosteriorTerms {
  double likelihood = 0.0;
  double field = 0.0;
  double intercept = 0.0;
  double coefficients = 0.0;
  double scales = 0.0;
  double alpha = 0.0;
  double kappa = 0.0;
  double sigma = 0.0;

  double prior() const { return field + intercept + coefficients + scales + alpha + kappa + sigma; }
  double total() const { return likelihood + prior(); }
};

struct PredictorGradient {
  Eigen::MatrixXd x;     // n x m
  Eigen::MatrixXd beta;  // p x m
};

// The assembled hierarchical model: Dirichlet observations, alr link, linear
// predictor B beta + X, horseshoe regression prior and a GMRF for X.
class HierarchicalModel {
 public:
  HierarchicalModel(LatticeGraph graph, DesignMatrix design, ObservationSet obs, Index k_parts,
                    ModelPriors priors = {})
      : graph_(std::move(graph)),
        design_(std::move(design)),
        obs_(std::move(obs)),
        priors_(std::move(priors)),
        k_parts_(k_parts),
        precision_(graph_) {
    if (k_parts_ < 2) throw InvalidArgument("model needs at least two categories");
    if (design_.rows() != graph_.size()) throw InvalidArgument("design rows do not match the lattice");
    obs_.validate(graph_.size(), k_parts_);
    log_y_.resize(static_cast<Index>(obs_.size()), k_parts_);
    for (std::size_t i = 0; i < obs_.size(); ++i) log_y_.row(static_cast<Index>(i)) = obs_.y[i].values().array().log().transpose();
  }

  const LatticeGraph& graph() const { return graph_; }
  const DesignMatrix& design() const { return design_; }
  const ObservationSet& observations() const { return obs_; }
  const ModelPriors& priors() const { return priors_; }
  const PrecisionBuilder& precision() const { return precision_; }
  const Eigen::MatrixXd& log_observations() const { return log_y_; }
  Index nodes() const { return graph_.size(); }
  Index parts() const { return k_parts_; }
  Index fields() const { return k_parts_ - 1; }
  Index predictors() const { return design_.predictors(); }

  // Initial state: intercept at the alr mean of the observations, everything
  // else at its neutral value.
  ModelState initial_state() const {
    ModelState s;
    const Index m = fields();
    s.x = LatentField::zeros(nodes(), m);
    s.coeffs = Coefficients::zeros(predictors(), m);
    if (!obs_.y.empty()) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
      for (const auto& y : obs_.y) mean += alr_forward(y).values();
      s.coeffs.beta.row(0) = (mean / static_cast<double>(obs_.size())).transpose();
    }
    s.alpha = 10.0;
    s.kappa = 1.0;
    s.sigma = Eigen::MatrixXd::Identity(m, m);
    return s;
  }

  Eigen::MatrixXd eta(const ModelState& s) const { return linear_predictor(design_, s.coeffs, s.x); }

  // Linear predictor at the observed cells only (rows aligned with obs).
  Eigen::MatrixXd observed_eta(const Eigen::MatrixXd& x, const Eigen::MatrixXd& beta) const {
    const Index m = fields();
    Eigen::MatrixXd out(static_cast<Index>(obs_.size()), m);
    for (std::size_t i = 0; i < obs_.size(); ++i) {
      const Index c = obs_.cell_indices[i];
      out.row(static_cast<Index>(i)) = design_.b.row(c) * beta + x.row(c);
    }
    return out;
  }

  double log_likelihood_at(const Eigen::MatrixXd& obs_eta, double alpha) const {
    const Index k = k_parts_;
    double total = 0.0;
    Eigen::VectorXd z(k);
    for (Index i = 0; i < obs_eta.rows(); ++i) {
      const Eigen::VectorXd e = obs_eta.row(i).transpose();
      detail::alr_inverse_into(e.data(), k - 1, z.data());
      double lp = detail::lgamma(alpha);
      for (Index j = 0; j < k; ++j) {
        const double a = alpha * z[j];
        lp += (a - 1.0) * log_y_(i, j) - detail::lgamma(a);
      }
      total += lp;
    }
    return total;
  }

  double log_likelihood(const ModelState& s) const {
    check_state(s);
    return log_likelihood_at(observed_eta(s.x.values(), s.coeffs.beta), s.alpha);
  }

  PosteriorTerms posterior_terms(const ModelState& s) const {
    check_state(s);
    const Index m = fields();
    PosteriorTerms t;
    t.likelihood = log_likelihood(s);

    const SparseMatrix q = precision_.build(s.kappa);
    SparseCholesky factor;
    if (!factor.try_factorize(q)) throw NumericError("log_posterior: GMRF precision factorization failed (kappa block)");
    const auto sigma_llt = Eigen::LLT<Eigen::MatrixXd>(s.sigma);
    if (sigma_llt.info() != Eigen::Success) throw NumericError("log_posterior: Sigma is not positive definite (sigma block)");
    t.field = field_logpdf(s.x.values(), q, factor.log_det(), sigma_llt);

    for (Index k = 0; k < m; ++k) t.intercept += detail::normal_logpdf(s.coeffs.beta(0, k), 0.0, priors_.intercept_sd);
    const double tau = s.coeffs.global_scale;
    for (Index j = 1; j < predictors(); ++j) {
      const double lam = s.coeffs.local_scales[j - 1];
      for (Index k = 0; k < m; ++k) t.coefficients += detail::normal_logpdf(s.coeffs.beta(j, k), 0.0, lam * tau);
      t.scales += detail::half_cauchy_logpdf(lam, priors_.local_scale_prior);
    }
    t.scales += detail::half_cauchy_logpdf(tau, priors_.global_scale_prior);
    t.alpha = detail::normal_logpdf(std::log(s.alpha), priors_.log_alpha_mean, priors_.log_alpha_sd);
    t.kappa = detail::normal_logpdf(std::log(s.kappa), priors_.log_kappa_mean, priors_.log_kappa_sd);
    t.sigma = inverse_wishart_logpdf(s.sigma, priors_.resolved_sigma_df(m), priors_.resolved_sigma_scale(m));

    const std::pair<const char*, double> named[] = {
        {"likelihood", t.likelihood}, {"field", t.field},   {"intercept", t.intercept}, {"coefficients", t.coefficients},
        {"scales", t.scales},         {"alpha", t.alpha},   {"kappa", t.kappa},         {"sigma", t.sigma}};
    for (const auto& [name, value] : named) {
      if (!std::isfinite(value)) throw NumericError(std::string("log_posterior: non-finite ") + name + " term");
    }
    return t;
  }

  double log_posterior(const ModelState& s) const { return posterior_terms(s).total(); }

  // d log-likelihood / d eta at the observed cells (rows aligned with obs).
  Eigen::MatrixXd likelihood_eta_gradient(const Eigen::MatrixXd& obs_eta, double alpha) const {
    const Index k = k_parts_;
    const Index m = k - 1;
    Eigen::MatrixXd grad(obs_eta.rows(), m);
    Eigen::VectorXd z(k), g(k);
    for (Index i = 0; i < obs_eta.rows(); ++i) {
      const Eigen::VectorXd e = obs_eta.row(i).transpose();
      detail::alr_inverse_into(e.data(), m, z.data());
      double zg = 0.0;
      for (Index j = 0; j < k; ++j) {
        g[j] = alpha * (log_y_(i, j) - detail::digamma(alpha * z[j]));
        zg += z[j] * g[j];
      }
      for (Index j = 0; j < m; ++j) grad(i, j) = z[j] * (g[j] - zg);
    }
    return grad;
  }

  // Gradient of log_posterior with respect to (X, beta).
  PredictorGradient gradient(const ModelState& s) const {
    check_state(s);
    const Index m = fields();
    const Eigen::MatrixXd obs_eta = observed_eta(s.x.values(), s.coeffs.beta);
    const Eigen::MatrixXd g_eta = likelihood_eta_gradient(obs_eta, s.alpha);
    Eigen::MatrixXd g_full = Eigen::MatrixXd::Zero(nodes(), m);
    for (std::size_t i = 0; i < obs_.size(); ++i) g_full.row(obs_.cell_indices[i]) = g_eta.row(static_cast<Index>(i));

    PredictorGradient out;
    const SparseMatrix q = precision_.build(s.kappa);
    const Eigen::MatrixXd sigma_inv = s.sigma.llt().solve(Eigen::MatrixXd::Identity(m, m));
    out.x = g_full - (q * s.x.values()) * sigma_inv;
    out.beta = design_.b.transpose() * g_full - prior_precision_times(s.coeffs, s.coeffs.beta);
    return out;
  }

  // Diagonal prior precision of beta applied row-wise: intercept 1/sd^2,
  // others 1/(lambda_j tau)^2.
  Eigen::MatrixXd prior_precision_times(const Coefficients& c, const Eigen::MatrixXd& beta) const {
    Eigen::MatrixXd out = beta;
    out.row(0) /= priors_.intercept_sd * priors_.intercept_sd;
    for (Index j = 1; j < beta.rows(); ++j) {
      const double s = c.local_scales[j - 1] * c.global_scale;
      out.row(j) /= s * s;
    }
    return out;
  }

  void check_state(const ModelState& s) const {
    const Index m = fields();
    if (s.x.nodes() != nodes() || s.x.fields() != m) throw InvalidArgument("model state: field has the wrong shape");
    if (s.coeffs.beta.rows() != predictors() || s.coeffs.beta.cols() != m) {
      throw InvalidArgument("model state: beta has the wrong shape");
    }
    if (s.coeffs.local_scales.size() != predictors() - 1) throw InvalidArgument("model state: wrong number of local scales");
    if (!(s.coeffs.local_scales.array() > 0.0).all() || !(s.coeffs.global_scale > 0.0)) {
      throw DomainError("model state: horseshoe scales must be positive");
    }
    if (!(s.alpha > 0.0) || !(s.kappa > 0.0)) throw DomainError("model state: alpha and kappa must be positive");
    if (s.sigma.rows() != m || s.sigma.cols() != m) throw InvalidArgument("model state: Sigma has the wrong shape");
  }

 private:
  LatticeGraph graph_;
  DesignMatrix design_;
  ObservationSet obs_;
  ModelPriors priors_;
  Index k_parts_;
  PrecisionBuilder precision_;
  Eigen::MatrixXd log_y_;
};

inline double log_likelihood(const HierarchicalModel& model, const ModelState& state) {
  return model.log_likelihood(state);
}

inline double log_posterior(const HierarchicalModel& model, const ModelState& state) {
  return model.log_posterior(state);
}

struct SimulatedDataset {
  ObservationSet obs;
  LatentField x;
  Eigen::MatrixXd eta;
  std::vector<Composition> z;  // true compositions at every node
};

// Forward simulation: X ~ GMRF, eta = B beta + X, Z = alr^{-1}(eta),
// Y ~ Dir(alpha Z) on masked nodes. With epsilon > 0 observations pass through
// zero replacement; with epsilon == 0 an exact zero is a NumericError.
inline SimulatedDataset simulate_dataset(const GmrfSpec& spec, const DesignMatrix& b, const Eigen::MatrixXd& beta_true,
                                         double alpha_true, const std::vector<bool>& mask, Rng& rng,
                                         double epsilon = 1e-4) {
  spec.validate();
  const Index n = spec.graph.size();
  const Index m = spec.fields();
  if (b.rows() != n || beta_true.rows() != b.predictors() || beta_true.cols() != m) {
    throw InvalidArgument("simulate_dataset: dimension mismatch");
  }
  if (static_cast<Index>(mask.size()) != n) throw InvalidArgument("simulate_dataset: mask length mismatch");
  if (!(alpha_true > 0.0)) throw DomainError("simulate_dataset: alpha must be positive");

  SimulatedDataset out;
  out.x = sample_field(spec, rng);
  out.eta = b.b * beta_true + out.x.values();
  out.z.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.z.push_back(alr_inverse(AlrVector(out.eta.row(i).transpose())));
  for (Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const Composition& zi = out.z[static_cast<std::size_t>(i)];
    if (!zi.strictly_positive()) throw NumericError("simulate_dataset: true composition underflowed to zero");
    Composition y = dirichlet_sample(zi, alpha_true, rng);
    if (epsilon > 0.0) {
      y = replace_zeros(y.values(), epsilon);
    } else if (!y.strictly_positive()) {
      throw NumericError("simulate_dataset: Dirichlet draw underflowed to zero");
    }
    out.obs.cell_indices.push_back(i);
    out.obs.y.push_back(std::move(y));
  }
  return out;
}

}  // namespace landcover
