#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "landcover/compositional.hpp"
#include "landcover/gmrf.hpp"

namespace landcover {

// Regular plate-carree lattice. Row 0 is the southernmost row, column 0 the
// westernmost column; coordinates are cell centres in degrees.
struct GridGeometry {
  double lon_min = 0.0;
  double lat_min = 0.0;
  double resolution = 1.0;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  Index node(Index r, Index c) const { return r * cols + c; }
  Index row_of(Index node) const { return node / cols; }
  Index col_of(Index node) const { return node % cols; }
  double lon(Index node) const { return lon_min + static_cast<double>(col_of(node)) * resolution; }
  double lat(Index node) const { return lat_min + static_cast<double>(row_of(node)) * resolution; }

  // Lattice node at a cell centre; nullopt when the point is off the lattice
  // or outside the bounds.
  std::optional<Index> locate(double lon_c, double lat_c) const {
    const double fc = (lon_c - lon_min) / resolution;
    const double fr = (lat_c - lat_min) / resolution;
    const double c = std::round(fc);
    const double r = std::round(fr);
    constexpr double tol = 1e-6;
    if (std::abs(fc - c) > tol || std::abs(fr - r) > tol) return std::nullopt;
    if (c < 0 || r < 0 || c >= static_cast<double>(cols) || r >= static_cast<double>(rows)) return std::nullopt;
    return node(static_cast<Index>(r), static_cast<Index>(c));
  }

  bool operator==(const GridGeometry& o) const {
    return rows == o.rows && cols == o.cols && std::abs(lon_min - o.lon_min) < 1e-9 &&
           std::abs(lat_min - o.lat_min) < 1e-9 && std::abs(resolution - o.resolution) < 1e-12;
  }

  LatticeGraph graph() const { return LatticeGraph(rows, cols); }
};

// Reconstruction lattice with its covariates. Scalar covariates hold one
// value per node, compositional covariates one K-part row per node; NaN marks
// a missing value. `domain` flags the nodes to reconstruct.
struct LatticeGrid {
  GridGeometry geometry;
  std::vector<std::string> categories;
  std::map<std::string, Eigen::VectorXd> scalars;
  std::map<std::string, Eigen::MatrixXd> compositions;
  std::vector<bool> domain;

  Index size() const { return geometry.size(); }
  Index parts() const { return static_cast<Index>(categories.size()); }

  bool in_domain(Index node) const { return domain.empty() || domain[static_cast<std::size_t>(node)]; }

  bool has_covariate(const std::string& name) const {
    return scalars.count(name) != 0 || compositions.count(name) != 0;
  }
};

// One optional composition per lattice node.
struct CompositionMap {
  GridGeometry geometry;
  std::vector<std::string> categories;
  std::vector<std::optional<Composition>> cells;

  Index size() const { return static_cast<Index>(cells.size()); }
};

inline std::vector<std::string> default_categories(Index k) {
  if (k == 3) return {"CF", "BF", "UF"};
  std::vector<std::string> out;
  for (Index i = 0; i < k; ++i) out.push_back("p" + std::to_string(i + 1));
  return out;
}

}  // namespace landcover
