#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "landcover/compositional.hpp"
#include "landcover/error.hpp"
#include "landcover/inference.hpp"
#include "landcover/random.hpp"

namespace landcover {

enum class RegionMethod { gaussian, kde };

struct RegionOptions {
  int raster = 512;
  RegionMethod method = RegionMethod::gaussian;
  bool observation_noise = false;  // add Dirichlet noise to each sample
  std::uint64_t seed = 0;           // used only with observation_noise
  int boundary_points = 256;
};

// Credible region of one cell on the ternary triangle.
struct PredictiveRegion {
  Index cell = 0;
  double level = 0.95;
  std::vector<std::array<double, 2>> boundary;  // ternary (x, y) coordinates
  double coverage_fraction = 0.0;
  std::uint64_t covered_cells = 0;
  std::uint64_t triangle_cells = 0;
  int raster = 0;
  std::vector<std::uint8_t> mask;  // raster x raster, row-major, 1 = covered
};

// Ternary layout: part 1 at (0, 0), part 2 at (1, 0), part 3 at (1/2, sqrt(3)/2).
inline std::array<double, 2> ternary_point(const Composition& z) {
  const double h = std::sqrt(3.0) / 2.0;
  return {z[1] + 0.5 * z[2], h * z[2]};
}

namespace detail {

// Barycentric coordinates of a raster cell centre; false when outside.
inline bool raster_composition(int px, int py, int raster, double& z1, double& z2, double& z3) {
  const double h = std::sqrt(3.0) / 2.0;
  const double x = (px + 0.5) / raster;
  const double y = (py + 0.5) / raster * h;
  z3 = y / h;
  z2 = x - 0.5 * z3;
  z1 = 1.0 - z2 - z3;
  return z1 > 0.0 && z2 > 0.0 && z3 > 0.0;
}

inline std::pair<int, int> raster_cell_of(const Composition& z, int raster) {
  const double h = std::sqrt(3.0) / 2.0;
  const auto p = ternary_point(z);
  const int px = std::clamp(static_cast<int>(std::floor(p[0] * raster)), 0, raster - 1);
  const int py = std::clamp(static_cast<int>(std::floor(p[1] / h * raster)), 0, raster - 1);
  return {px, py};
}

}  // namespace detail

// Level-`level` predictive region for `cell`: a bivariate Gaussian (or KDE)
// fitted to the retained eta samples, pulled onto a raster of the ternary
// triangle; coverage_fraction = covered triangle cells / all triangle cells.
inline PredictiveRegion predictive_region(const PosteriorSummary& summary, Index cell, double level,
                                          const RegionOptions& options = {}) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("predictive_region: level must lie in (0, 1)");
  if (summary.fields != 2) throw InvalidArgument("predictive_region: ternary regions need three categories");
  if (cell < 0 || cell >= summary.nodes) throw InvalidArgument("predictive_region: cell outside the lattice");
  if (summary.eta_samples.size() < 10) throw InsufficientSamples("predictive_region: fewer than 10 retained samples");
  if (options.raster < 8) throw InvalidArgument("predictive_region: raster too small");

  const std::size_t ns = summary.eta_samples.size();
  std::vector<Eigen::Vector2d> pts(ns);
  Rng rng(options.seed);
  for (std::size_t s = 0; s < ns; ++s) {
    Eigen::Vector2d e = summary.eta_samples[s].row(cell).transpose();
    if (options.observation_noise) {
      const Composition z = alr_inverse(AlrVector(Eigen::VectorXd(e)));
      if (z.strictly_positive()) {
        const Composition y = dirichlet_sample(z, summary.sample_alpha[s], rng);
        if (y.strictly_positive()) e = alr_forward(y).values();
      }
    }
    pts[s] = e;
  }

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(ns);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(ns - 1);

  const double radius2 = -2.0 * std::log1p(-level);  // chi-square(2) quantile
  const Eigen::LLT<Eigen::Matrix2d> llt(cov);
  const bool degenerate = llt.info() != Eigen::Success || !(cov.determinant() > 1e-24);

  PredictiveRegion out;
  out.cell = cell;
  out.level = level;
  out.raster = options.raster;
  const int r = options.raster;
  out.mask.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(r), 0);

  // KDE setup: Scott bandwidth, threshold = (1 - level) quantile of sample densities.
  std::vector<Eigen::Vector2d> kde_pts;
  Eigen::Matrix2d kde_prec = Eigen::Matrix2d::Identity();
  double kde_threshold = 0.0;
  const bool use_kde = options.method == RegionMethod::kde && !degenerate;
  auto kde_density = [&](const Eigen::Vector2d& e) {
    double s = 0.0;
    for (const auto& p : kde_pts) {
      const Eigen::Vector2d d = e - p;
      s += std::exp(-0.5 * d.dot(kde_prec * d));
    }
    return s;
  };
  if (use_kde) {
    const std::size_t stride = std::max<std::size_t>(1, ns / 500);
    for (std::size_t s = 0; s < ns; s += stride) kde_pts.push_back(pts[s]);
    const double h2 = std::pow(static_cast<double>(kde_pts.size()), -1.0 / 3.0);
    kde_prec = (h2 * cov).inverse();
    std::vector<double> dens;
    for (const auto& p : kde_pts) dens.push_back(kde_density(p));
    std::sort(dens.begin(), dens.end());
    const auto idx = static_cast<std::size_t>(std::floor((1.0 - level) * static_cast<double>(dens.size())));
    kde_threshold = dens[std::min(idx, dens.size() - 1)];
  }
  const Eigen::Matrix2d prec = degenerate ? Eigen::Matrix2d::Zero() : Eigen::Matrix2d(cov.inverse());

  for (int py = 0; py < r; ++py) {
    for (int px = 0; px < r; ++px) {
      double z1, z2, z3;
      if (!detail::raster_composition(px, py, r, z1, z2, z3)) continue;
      ++out.triangle_cells;
      if (degenerate) continue;
      const Eigen::Vector2d e(std::log(z1 / z3), std::log(z2 / z3));
      bool inside = false;
      if (use_kde) {
        inside = kde_density(e) >= kde_threshold;
      } else {
        const Eigen::Vector2d d = e - mean;
        inside = d.dot(prec * d) <= radius2;
      }
      if (inside) out.mask[static_cast<std::size_t>(py) * r + px] = 1;
    }
  }
  // The cell holding the centre always belongs to the region.
  const Composition centre = alr_inverse(AlrVector(Eigen::VectorXd(mean)));
  const auto [cx, cy] = detail::raster_cell_of(centre, r);
  double z1, z2, z3;
  if (detail::raster_composition(cx, cy, r, z1, z2, z3)) out.mask[static_cast<std::size_t>(cy) * r + cx] = 1;
  for (auto v : out.mask) out.covered_cells += v;
  out.coverage_fraction = static_cast<double>(out.covered_cells) / static_cast<double>(out.triangle_cells);

  if (degenerate) {
    out.boundary.push_back(ternary_point(centre));
  } else {
    const Eigen::Matrix2d l = llt.matrixL();
    const double rad = std::sqrt(radius2);
    for (int t = 0; t < options.boundary_points; ++t) {
      const double ang = 2.0 * M_PI * t / options.boundary_points;
      const Eigen::Vector2d e = mean + rad * l * Eigen::Vector2d(std::cos(ang), std::sin(ang));
      out.boundary.push_back(ternary_point(alr_inverse(AlrVector(Eigen::VectorXd(e)))));
    }
  }
  return out;
}

}  // namespace landcover
