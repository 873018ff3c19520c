#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "landcover/error.hpp"
#include "landcover/gmrf.hpp"
#include "landcover/model.hpp"
#include "landcover/random.hpp"

namespace landcover {

// Which blocks the sampler updates. Disabled blocks keep their current value;
// with `field` off the spatial effect stays at its initial value (normally
// zero) and kappa and Sigma are held fixed as well.
struct SamplerBlocks {
  bool field = true;
  bool coefficients = true;
  bool alpha = true;
  bool kappa = true;
  bool sigma = true;
  bool scales = true;
};

struct BlockStats {
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;
  double rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed); }
};

// Step sizes and acceptance counters. Counters split burn-in from sampling.
struct SamplerTuning {
  double mala_step = -1.0;  // <= 0: derived from the block dimension
  double alpha_step = 0.2;
  double kappa_step = 0.3;
  std::uint64_t adapt_iterations = 0;
  BlockStats mala_burn, alpha_burn, kappa_burn;
  BlockStats mala, alpha, kappa;
};

struct AdaptationTargets {
  double mala = 0.57;
  double random_walk = 0.44;
  double decay = 0.6;
};

// One sweep = MALA on (X, beta), random walks on log alpha and log kappa,
// Gibbs draws of Sigma and of the horseshoe scales.
class BlockedSampler {
 public:
  BlockedSampler(const HierarchicalModel& model, ModelState state, SamplerBlocks blocks = {},
                 SamplerTuning tuning = {}, AdaptationTargets targets = {})
      : model_(&model), state_(std::move(state)), blocks_(blocks), tuning_(tuning), targets_(targets) {
    model_->check_state(state_);
    n_ = model_->nodes();
    m_ = model_->fields();
    p_ = model_->predictors();
    if (!blocks_.field) {
      blocks_.kappa = false;
      blocks_.sigma = false;
    }
    x_offset_ = 0;
    beta_offset_ = blocks_.field ? n_ * m_ : 0;
    dim_ = (blocks_.field ? n_ * m_ : 0) + (blocks_.coefficients ? p_ * m_ : 0);
    if (tuning_.mala_step <= 0.0) tuning_.mala_step = dim_ > 0 ? std::pow(static_cast<double>(dim_), -1.0 / 6.0) : 1.0;

    const auto& obs = model_->observations();
    obs_b_.resize(static_cast<Index>(obs.size()), p_);
    for (std::size_t i = 0; i < obs.size(); ++i) obs_b_.row(static_cast<Index>(i)) = model_->design().b.row(obs.cell_indices[i]);

    q_ = model_->precision().build(state_.kappa);
    q_proposal_ = q_;
    q_factor_.analyze(q_);
    if (!q_factor_.try_factorize(q_)) throw NumericError("sampler initialization: GMRF precision is not positive definite");
    q_log_det_ = q_factor_.log_det();
    refresh_sigma_inverse();
    obs_eta_ = model_->observed_eta(state_.x.values(), state_.coeffs.beta);
    log_lik_ = model_->log_likelihood_at(obs_eta_, state_.alpha);
    if (!std::isfinite(log_lik_)) throw NumericError("sampler initialization: non-finite log-likelihood");
    if (dim_ > 0) build_preconditioner_pattern();
  }

  const ModelState& state() const { return state_; }
  const SamplerTuning& tuning() const { return tuning_; }
  const SamplerBlocks& blocks() const { return blocks_; }
  double log_likelihood() const { return log_lik_; }
  std::uint64_t iteration() const { return iteration_; }
  void set_iteration(std::uint64_t it) { iteration_ = it; }

  void sweep(Rng& rng, bool adapt) {
    if (dim_ > 0) mala_step(rng, adapt);
    if (blocks_.alpha) alpha_step(rng, adapt);
    if (blocks_.kappa) kappa_step(rng, adapt);
    if (blocks_.sigma) sigma_step(rng);
    if (blocks_.scales && p_ > 1) scales_step(rng);
    if (adapt) ++tuning_.adapt_iterations;
    ++iteration_;
  }

 private:
  // ---- (X, beta) MALA -------------------------------------------------------

  struct Slot {
    Index row, col;
  };

  // Enumerates every contribution to the preconditioner in a fixed order.
  // Visitor signature: void(Index row, Index col, double value).
  template <typename Visitor>
  void emit_preconditioner(Visitor&& visit) const {
    const auto& obs = model_->observations();
    const Index n_obs = static_cast<Index>(obs.size());
    if (blocks_.field) {
      for (Index a = 0; a < m_; ++a) {
        for (Index b = 0; b < m_; ++b) {
          const double s = sigma_inv_(a, b);
          for (Index col = 0; col < q_.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(q_, col); it; ++it) visit(a * n_ + it.row(), b * n_ + it.col(), s * it.value());
          }
        }
      }
      for (Index i = 0; i < n_obs; ++i) {
        const Index c = obs.cell_indices[static_cast<std::size_t>(i)];
        for (Index a = 0; a < m_; ++a) {
          for (Index b = 0; b < m_; ++b) visit(a * n_ + c, b * n_ + c, fisher_(i, a * m_ + b));
        }
      }
    }
    if (blocks_.coefficients) {
      if (blocks_.field) {
        for (Index i = 0; i < n_obs; ++i) {
          const Index c = obs.cell_indices[static_cast<std::size_t>(i)];
          for (Index a = 0; a < m_; ++a) {
            for (Index b = 0; b < m_; ++b) {
              const double d = fisher_(i, a * m_ + b);
              for (Index l = 0; l < p_; ++l) {
                const double v = d * obs_b_(i, l);
                visit(a * n_ + c, beta_offset_ + b * p_ + l, v);
                visit(beta_offset_ + b * p_ + l, a * n_ + c, v);
              }
            }
          }
        }
      }
      for (Index b = 0; b < m_; ++b) {
        for (Index l = 0; l < p_; ++l) visit(beta_offset_ + b * p_ + l, beta_offset_ + b * p_ + l, beta_prior_prec_[l]);
      }
      for (Index a = 0; a < m_; ++a) {
        for (Index b = 0; b < m_; ++b) {
          const Eigen::MatrixXd& w = btdb_[static_cast<std::size_t>(a * m_ + b)];
          for (Index l = 0; l < p_; ++l) {
            for (Index l2 = 0; l2 < p_; ++l2) visit(beta_offset_ + a * p_ + l, beta_offset_ + b * p_ + l2, w(l, l2));
          }
        }
      }
    }
  }

  // Expected Dirichlet information in eta at z = y for each observed cell:
  // J^T diag(alpha^2 psi'(alpha y)) J with J = dz/deta.
  void refresh_fisher() {
    const auto& obs = model_->observations();
    const Index n_obs = static_cast<Index>(obs.size());
    const Index k = m_ + 1;
    fisher_.resize(n_obs, m_ * m_);
    Eigen::VectorXd w(k);
    for (Index i = 0; i < n_obs; ++i) {
      const Eigen::VectorXd& y = obs.y[static_cast<std::size_t>(i)].values();
      // w_j = (alpha y_j)^2 psi'(alpha y_j), finite even where psi' overflows.
      for (Index j = 0; j < k; ++j) {
        const double xj = state_.alpha * y[j];
        w[j] = xj < 1e-8 ? 1.0 + xj * xj * (M_PI * M_PI / 6.0) : xj * xj * detail::trigamma(xj);
      }
      for (Index a = 0; a < m_; ++a) {
        for (Index b = 0; b < m_; ++b) {
          double s = 0.0;
          for (Index j = 0; j < k; ++j) s += ((j == a ? 1.0 : 0.0) - y[a]) * w[j] * ((j == b ? 1.0 : 0.0) - y[b]);
          fisher_(i, a * m_ + b) = s;
        }
      }
    }
    beta_prior_prec_.resize(p_);
    beta_prior_prec_[0] = 1.0 / (model_->priors().intercept_sd * model_->priors().intercept_sd);
    for (Index l = 1; l < p_; ++l) {
      const double s = state_.coeffs.local_scales[l - 1] * state_.coeffs.global_scale;
      beta_prior_prec_[l] = 1.0 / (s * s);
    }
    btdb_.assign(static_cast<std::size_t>(m_ * m_), Eigen::MatrixXd::Zero(p_, p_));
    if (blocks_.coefficients) {
      for (Index a = 0; a < m_; ++a) {
        for (Index b = 0; b < m_; ++b) {
          btdb_[static_cast<std::size_t>(a * m_ + b)] = obs_b_.transpose() * fisher_.col(a * m_ + b).asDiagonal() * obs_b_;
        }
      }
    }
  }

  void build_preconditioner_pattern() {
    refresh_fisher();
    std::vector<Eigen::Triplet<double>> trips;
    emit_preconditioner([&](Index r, Index c, double v) { trips.emplace_back(r, c, v); });
    precond_.resize(dim_, dim_);
    precond_.setFromTriplets(trips.begin(), trips.end());
    precond_.makeCompressed();
    slots_.clear();
    slots_.reserve(trips.size());
    for (const auto& t : trips) {
      const double* base = precond_.valuePtr();
      slots_.push_back(static_cast<Index>(&precond_.coeffRef(t.row(), t.col()) - base));
    }
    precond_factor_.analyze(precond_);
  }

  void fill_preconditioner() {
    refresh_fisher();
    double* vals = precond_.valuePtr();
    std::fill(vals, vals + precond_.nonZeros(), 0.0);
    std::size_t t = 0;
    emit_preconditioner([&](Index, Index, double v) { vals[slots_[t++]] += v; });
  }

  Eigen::VectorXd pack(const Eigen::MatrixXd& x, const Eigen::MatrixXd& beta) const {
    Eigen::VectorXd theta(dim_);
    if (blocks_.field) theta.segment(x_offset_, n_ * m_) = Eigen::Map<const Eigen::VectorXd>(x.data(), n_ * m_);
    if (blocks_.coefficients) theta.segment(beta_offset_, p_ * m_) = Eigen::Map<const Eigen::VectorXd>(beta.data(), p_ * m_);
    return theta;
  }

  void unpack(const Eigen::VectorXd& theta, Eigen::MatrixXd& x, Eigen::MatrixXd& beta) const {
    if (blocks_.field) x = Eigen::Map<const Eigen::MatrixXd>(theta.data() + x_offset_, n_, m_);
    if (blocks_.coefficients) beta = Eigen::Map<const Eigen::MatrixXd>(theta.data() + beta_offset_, p_, m_);
  }

  // Log target of the (X, beta) block up to a constant, with its gradient.
  double block_target(const Eigen::MatrixXd& x, const Eigen::MatrixXd& beta, Eigen::VectorXd& grad,
                      Eigen::MatrixXd& obs_eta, double& log_lik) const {
    obs_eta = model_->observed_eta(x, beta);
    log_lik = model_->log_likelihood_at(obs_eta, state_.alpha);
    if (!std::isfinite(log_lik)) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd g_eta = model_->likelihood_eta_gradient(obs_eta, state_.alpha);
    if (!g_eta.allFinite()) return -std::numeric_limits<double>::infinity();
    const auto& obs = model_->observations();

    double target = log_lik;
    grad.resize(dim_);
    if (blocks_.field) {
      const Eigen::MatrixXd qx = q_ * x;
      const Eigen::MatrixXd qxs = qx * sigma_inv_;
      target -= 0.5 * (x.array() * qxs.array()).sum();
      Eigen::MatrixXd gx = -qxs;
      for (std::size_t i = 0; i < obs.size(); ++i) gx.row(obs.cell_indices[i]) += g_eta.row(static_cast<Index>(i));
      grad.segment(x_offset_, n_ * m_) = Eigen::Map<const Eigen::VectorXd>(gx.data(), n_ * m_);
    }
    if (blocks_.coefficients) {
      Eigen::MatrixXd gb = obs_b_.transpose() * g_eta;
      for (Index l = 0; l < p_; ++l) {
        target -= 0.5 * beta_prior_prec_[l] * beta.row(l).squaredNorm();
        gb.row(l) -= beta_prior_prec_[l] * beta.row(l);
      }
      grad.segment(beta_offset_, p_ * m_) = Eigen::Map<const Eigen::VectorXd>(gb.data(), p_ * m_);
    }
    return target;
  }

  void mala_step(Rng& rng, bool adapt) {
    fill_preconditioner();
    if (!precond_factor_.try_factorize(precond_)) {
      throw NumericError("MALA block: preconditioner factorization failed at iteration " + std::to_string(iteration_));
    }
    const double eps = tuning_.mala_step;

    Eigen::MatrixXd x = state_.x.values();
    Eigen::MatrixXd beta = state_.coeffs.beta;
    Eigen::VectorXd grad;
    Eigen::MatrixXd obs_eta;
    double ll = 0.0;
    const double target = block_target(x, beta, grad, obs_eta, ll);
    if (!std::isfinite(target)) {
      throw NumericError("MALA block: non-finite target at the current state, iteration " + std::to_string(iteration_));
    }
    const Eigen::VectorXd theta = pack(x, beta);

    Eigen::VectorXd xi(dim_);
    for (Index i = 0; i < dim_; ++i) xi[i] = rng.normal();
    const Eigen::VectorXd drift = precond_factor_.solve(grad);
    const Eigen::VectorXd noise = precond_factor_.whiten_inverse(xi);
    const Eigen::VectorXd proposal = theta + 0.5 * eps * eps * drift + eps * noise;

    Eigen::MatrixXd x_new = x;
    Eigen::MatrixXd beta_new = beta;
    unpack(proposal, x_new, beta_new);
    Eigen::VectorXd grad_new;
    Eigen::MatrixXd obs_eta_new;
    double ll_new = 0.0;
    const double target_new = block_target(x_new, beta_new, grad_new, obs_eta_new, ll_new);

    double accept_prob = 0.0;
    if (std::isfinite(target_new) && grad_new.allFinite()) {
      const Eigen::VectorXd back = theta - proposal - 0.5 * eps * eps * precond_factor_.solve(grad_new);
      const double log_q_back = -0.5 * back.dot(precond_ * back) / (eps * eps);
      const double log_q_fwd = -0.5 * xi.squaredNorm();
      const double log_ratio = target_new - target + log_q_back - log_q_fwd;
      accept_prob = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
    }
    const bool accept = rng.uniform() < accept_prob;
    BlockStats& stats = adapt ? tuning_.mala_burn : tuning_.mala;
    ++stats.proposed;
    if (accept) {
      ++stats.accepted;
      state_.x = LatentField(std::move(x_new));
      state_.coeffs.beta = std::move(beta_new);
      obs_eta_ = model_->observed_eta(state_.x.values(), state_.coeffs.beta);
      log_lik_ = model_->log_likelihood_at(obs_eta_, state_.alpha);
    } else {
      obs_eta_ = std::move(obs_eta);
      log_lik_ = ll;
    }
    if (adapt) tuning_.mala_step = adapted(tuning_.mala_step, accept_prob, targets_.mala);
  }

  // ---- scalar random walks --------------------------------------------------

  double adapted(double step, double accept_prob, double target) const {
    const double gain = std::pow(static_cast<double>(tuning_.adapt_iterations) + 1.0, -targets_.decay);
    const double next = step * std::exp(gain * (accept_prob - target));
    return std::clamp(next, 1e-6, 1e3);
  }

  void alpha_step(Rng& rng, bool adapt) {
    const auto& pri = model_->priors();
    const double log_a = std::log(state_.alpha);
    const double log_a_new = log_a + tuning_.alpha_step * rng.normal();
    const double a_new = std::exp(log_a_new);
    const double ll_new = model_->log_likelihood_at(obs_eta_, a_new);
    double accept_prob = 0.0;
    if (std::isfinite(ll_new) && a_new > 0.0 && std::isfinite(a_new)) {
      const double log_ratio = ll_new - log_lik_ + detail::normal_logpdf(log_a_new, pri.log_alpha_mean, pri.log_alpha_sd) -
                               detail::normal_logpdf(log_a, pri.log_alpha_mean, pri.log_alpha_sd);
      accept_prob = std::min(1.0, std::exp(log_ratio));
    }
    const bool accept = rng.uniform() < accept_prob;
    BlockStats& stats = adapt ? tuning_.alpha_burn : tuning_.alpha;
    ++stats.proposed;
    if (accept) {
      ++stats.accepted;
      state_.alpha = a_new;
      log_lik_ = model_->log_likelihood_at(obs_eta_, state_.alpha);
    }
    if (adapt) tuning_.alpha_step = adapted(tuning_.alpha_step, accept_prob, targets_.random_walk);
  }

  double field_quadratic(const SparseMatrix& q) const {
    const Eigen::MatrixXd& x = state_.x.values();
    return ((q * x) * sigma_inv_).cwiseProduct(x).sum();
  }

  void kappa_step(Rng& rng, bool adapt) {
    const auto& pri = model_->priors();
    const double log_k = std::log(state_.kappa);
    const double log_k_new = log_k + tuning_.kappa_step * rng.normal();
    const double k_new = std::exp(log_k_new);
    double accept_prob = 0.0;
    bool factored = false;
    if (k_new > 0.0 && std::isfinite(k_new)) {
      model_->precision().fill(k_new, q_proposal_);
      factored = q_factor_.try_factorize(q_proposal_);
      if (!factored) {
        throw NumericError("kappa block: precision factorization failed at iteration " + std::to_string(iteration_));
      }
      const double md = static_cast<double>(m_);
      const double cur = 0.5 * md * q_log_det_ - 0.5 * field_quadratic(q_) +
                         detail::normal_logpdf(log_k, pri.log_kappa_mean, pri.log_kappa_sd);
      const double next = 0.5 * md * q_factor_.log_det() - 0.5 * field_quadratic(q_proposal_) +
                          detail::normal_logpdf(log_k_new, pri.log_kappa_mean, pri.log_kappa_sd);
      const double log_ratio = next - cur;
      accept_prob = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
    }
    const bool accept = rng.uniform() < accept_prob;
    BlockStats& stats = adapt ? tuning_.kappa_burn : tuning_.kappa;
    ++stats.proposed;
    if (accept) {
      ++stats.accepted;
      state_.kappa = k_new;
      std::swap(q_, q_proposal_);
      q_log_det_ = q_factor_.log_det();
    }
    if (adapt) tuning_.kappa_step = adapted(tuning_.kappa_step, accept_prob, targets_.random_walk);
  }

  // ---- Gibbs blocks ---------------------------------------------------------

  void refresh_sigma_inverse() {
    const auto llt = checked_llt(state_.sigma, "sampler Sigma");
    sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(m_, m_));
    sigma_inv_ = 0.5 * (sigma_inv_ + sigma_inv_.transpose());
  }

  void sigma_step(Rng& rng) {
    const auto& pri = model_->priors();
    state_.sigma = sigma_gibbs_conditional(state_.x.values(), q_, pri.resolved_sigma_df(m_), pri.resolved_sigma_scale(m_), rng);
    refresh_sigma_inverse();
  }

  static double inverse_gamma(Rng& rng, double shape, double rate) { return rate / rng.gamma(shape); }

  void scales_step(Rng& rng) {
    auto& c = state_.coeffs;
    const auto& pri = model_->priors();
    const double md = static_cast<double>(m_);
    const double tau2 = c.global_scale * c.global_scale;
    const double local_prior2 = pri.local_scale_prior * pri.local_scale_prior;
    for (Index j = 1; j < p_; ++j) {
      const double ss = c.beta.row(j).squaredNorm();
      const double lam2 = inverse_gamma(rng, 0.5 * (md + 1.0), 1.0 / c.local_aux[j - 1] + ss / (2.0 * tau2));
      c.local_scales[j - 1] = std::sqrt(lam2);
      c.local_aux[j - 1] = inverse_gamma(rng, 1.0, 1.0 / local_prior2 + 1.0 / lam2);
    }
    double ss = 0.0;
    for (Index j = 1; j < p_; ++j) {
      const double lam = c.local_scales[j - 1];
      ss += c.beta.row(j).squaredNorm() / (lam * lam);
    }
    const double count = static_cast<double>((p_ - 1) * m_);
    const double new_tau2 = inverse_gamma(rng, 0.5 * (count + 1.0), 1.0 / c.global_aux + ss / 2.0);
    c.global_scale = std::sqrt(new_tau2);
    const double global_prior2 = pri.global_scale_prior * pri.global_scale_prior;
    c.global_aux = inverse_gamma(rng, 1.0, 1.0 / global_prior2 + 1.0 / new_tau2);
  }

  const HierarchicalModel* model_;
  ModelState state_;
  SamplerBlocks blocks_;
  SamplerTuning tuning_;
  AdaptationTargets targets_;
  std::uint64_t iteration_ = 0;

  Index n_ = 0, m_ = 0, p_ = 0;
  Index dim_ = 0, x_offset_ = 0, beta_offset_ = 0;
  Eigen::MatrixXd obs_b_;

  SparseMatrix q_, q_proposal_;
  SparseCholesky q_factor_;
  double q_log_det_ = 0.0;
  Eigen::MatrixXd sigma_inv_;

  Eigen::MatrixXd obs_eta_;
  double log_lik_ = 0.0;

  Eigen::MatrixXd fisher_;
  Eigen::VectorXd beta_prior_prec_;
  std::vector<Eigen::MatrixXd> btdb_;
  SparseMatrix precond_;
  std::vector<Index> slots_;
  SparseCholesky precond_factor_;
};

}  // namespace landcover
