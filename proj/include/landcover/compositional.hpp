#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "landcover/error.hpp"
#include "landcover/random.hpp"

namespace landcover {

using Index = Eigen::Index;

// A point on the K-simplex: K proportions in [0, 1] summing to one.
class Composition {
 public:
  static constexpr double kSumTolerance = 1e-12;

  Composition() = default;

  // Validates the simplex invariants; throws DomainError when they fail.
  explicit Composition(Eigen::VectorXd z) : z_(std::move(z)) {
    if (z_.size() < 2) throw InvalidArgument("composition needs at least two parts");
    double sum = 0.0;
    for (Index k = 0; k < z_.size(); ++k) {
      if (!(z_[k] >= 0.0 && z_[k] <= 1.0)) {
        throw DomainError("composition part " + std::to_string(k) + " outside [0, 1]");
      }
      sum += z_[k];
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw DomainError("composition does not sum to one (sum = " + std::to_string(sum) + ")");
    }
  }

  Composition(std::initializer_list<double> parts)
      : Composition(Eigen::Map<const Eigen::VectorXd>(parts.begin(), static_cast<Index>(parts.size()))) {}

  // Closure: rescales a non-negative vector with positive sum onto the simplex.
  static Composition closure(const Eigen::VectorXd& v) {
    if (v.size() < 2) throw InvalidArgument("composition needs at least two parts");
    if ((v.array() < 0.0).any() || !v.allFinite()) throw DomainError("closure requires finite non-negative parts");
    const double sum = v.sum();
    if (!(sum > 0.0)) throw DomainError("closure requires a positive sum");
    Eigen::VectorXd z = v / sum;
    return Composition(std::move(z), Unchecked{});
  }

  Index size() const { return z_.size(); }
  double operator[](Index k) const { return z_[k]; }
  const Eigen::VectorXd& values() const { return z_; }
  bool strictly_positive() const { return (z_.array() > 0.0).all(); }

  friend bool operator==(const Composition& a, const Composition& b) { return a.z_ == b.z_; }

 private:
  struct Unchecked {};
  Composition(Eigen::VectorXd z, Unchecked) : z_(std::move(z)) {}

  Eigen::VectorXd z_;
};

// K-1 unconstrained log-ratio coordinates.
class AlrVector {
 public:
  AlrVector() = default;
  explicit AlrVector(Eigen::VectorXd eta) : eta_(std::move(eta)) {
    if (eta_.size() < 1) throw InvalidArgument("alr vector needs at least one coordinate");
    if (!eta_.allFinite()) throw InvalidArgument("alr vector has non-finite entries");
  }
  AlrVector(std::initializer_list<double> parts)
      : AlrVector(Eigen::Map<const Eigen::VectorXd>(parts.begin(), static_cast<Index>(parts.size()))) {}

  Index size() const { return eta_.size(); }
  double operator[](Index k) const { return eta_[k]; }
  const Eigen::VectorXd& values() const { return eta_; }

 private:
  Eigen::VectorXd eta_;
};

namespace detail {

// Softmax with an implicit zero for the reference (last) part. Writes m+1
// proportions into z. Max-subtraction keeps every exponent <= 0.
inline void alr_inverse_into(const double* eta, Index m, double* z) {
  double shift = 0.0;
  for (Index j = 0; j < m; ++j) shift = std::max(shift, eta[j]);
  double denom = std::exp(-shift);
  z[m] = denom;
  for (Index j = 0; j < m; ++j) {
    z[j] = std::exp(eta[j] - shift);
    denom += z[j];
  }
  for (Index k = 0; k <= m; ++k) z[k] /= denom;
}

// Special functions return inf/NaN instead of throwing so that samplers can
// reject proposals that leave the representable range.
using QuietPolicy = boost::math::policies::policy<
    boost::math::policies::pole_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>,
    boost::math::policies::promote_double<false>>;

inline double lgamma(double x) { return boost::math::lgamma(x, QuietPolicy()); }
inline double digamma(double x) { return boost::math::digamma(x, QuietPolicy()); }
inline double trigamma(double x) { return boost::math::trigamma(x, QuietPolicy()); }

// log Dir(y | alpha * z) without validation.
inline double dirichlet_logpdf_raw(const double* y, const double* z, Index k_parts, double alpha) {
  double lp = lgamma(alpha);
  for (Index k = 0; k < k_parts; ++k) {
    const double a = alpha * z[k];
    lp += (a - 1.0) * std::log(y[k]) - lgamma(a);
  }
  return lp;
}

inline Eigen::VectorXd clr(const Eigen::VectorXd& x) {
  Eigen::VectorXd l = x.array().log();
  return l.array() - l.mean();
}

inline void require_positive(const Composition& c, const char* what) {
  if (!c.strictly_positive()) throw DomainError(std::string(what) + ": composition has zero parts");
}

}  // namespace detail

inline Composition alr_inverse(const AlrVector& eta) {
  if (!eta.values().allFinite()) throw InvalidArgument("alr_inverse: non-finite input");
  Eigen::VectorXd z(eta.size() + 1);
  detail::alr_inverse_into(eta.values().data(), eta.size(), z.data());
  return Composition::closure(z);
}

inline AlrVector alr_forward(const Composition& z) {
  detail::require_positive(z, "alr_forward");
  const Index m = z.size() - 1;
  Eigen::VectorXd eta(m);
  for (Index k = 0; k < m; ++k) eta[k] = std::log(z[k] / z[m]);
  return AlrVector(std::move(eta));
}

// Log density of Dir(alpha * z) at y. The mean of that distribution is z and
// Var(y_k) = z_k (1 - z_k) / (alpha + 1).
inline double dirichlet_logpdf(const Composition& y, const Composition& z, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("dirichlet_logpdf: alpha must be positive");
  if (y.size() != z.size()) throw InvalidArgument("dirichlet_logpdf: dimension mismatch");
  detail::require_positive(y, "dirichlet_logpdf");
  detail::require_positive(z, "dirichlet_logpdf");
  return detail::dirichlet_logpdf_raw(y.values().data(), z.values().data(), y.size(), alpha);
}

// Draw from Dir(alpha * z) by normalizing Gamma variates in log space.
inline Composition dirichlet_sample(const Composition& z, double alpha, Rng& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("dirichlet_sample: alpha must be positive");
  detail::require_positive(z, "dirichlet_sample");
  const Index k_parts = z.size();
  Eigen::VectorXd lg(k_parts);
  for (Index k = 0; k < k_parts; ++k) lg[k] = rng.log_gamma(alpha * z[k]);
  const double top = lg.maxCoeff();
  Eigen::VectorXd y = (lg.array() - top).exp();
  return Composition::closure(y);
}

// Zero replacement: parts below epsilon are raised to epsilon and the vector is
// closed again. (1, 0, 0) becomes (1, eps, eps) / (1 + 2 eps).
inline Composition replace_zeros(const Eigen::VectorXd& v, double epsilon) {
  if (!(epsilon > 0.0) || epsilon >= 1.0) throw InvalidArgument("replace_zeros: epsilon must lie in (0, 1)");
  Eigen::VectorXd w = v.cwiseMax(epsilon);
  return Composition::closure(w);
}

// Aitchison (clr-Euclidean) distance between two strictly positive compositions.
inline double aitchison_distance(const Composition& x, const Composition& y) {
  if (x.size() != y.size()) throw InvalidArgument("aitchison_distance: dimension mismatch");
  detail::require_positive(x, "aitchison_distance");
  detail::require_positive(y, "aitchison_distance");
  return (detail::clr(x.values()) - detail::clr(y.values())).norm();
}

enum class AcdAggregation { rms, mean };

// Average compositional distance. The default aggregation is the root mean
// square of per-pair Aitchison distances.
inline double average_compositional_distance(std::span<const Composition> pred, std::span<const Composition> ref,
                                             AcdAggregation how = AcdAggregation::rms) {
  if (pred.size() != ref.size()) throw InvalidArgument("average_compositional_distance: length mismatch");
  if (pred.empty()) throw InvalidArgument("average_compositional_distance: empty lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = aitchison_distance(pred[i], ref[i]);
    acc += how == AcdAggregation::rms ? d * d : d;
  }
  acc /= static_cast<double>(pred.size());
  return how == AcdAggregation::rms ? std::sqrt(acc) : acc;
}

}  // namespace landcover
