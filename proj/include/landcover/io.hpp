#pragma once

#include <openssl/evp.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "landcover/compositional.hpp"
#include "landcover/error.hpp"
#include "landcover/grid.hpp"
#include "landcover/inference.hpp"
#include "landcover/model.hpp"

namespace landcover {

inline constexpr const char* kSoftwareVersion = "0.1.0";

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

// Strict decimal parse: the whole token must be consumed and finite.
inline bool parse_double(const std::string& s, double& out) {
  if (s.empty() || s.size() > 64) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return false;
  out = v;
  return true;
}

inline std::string format_double(double x) {
  if (!std::isfinite(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string located(const std::string& path, std::size_t line, const std::string& msg) {
  return path + ":" + std::to_string(line) + ": " + msg;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // line number, fields
  std::optional<double> resolution;                                   // from a "# resolution:" comment
};

inline RawTable read_raw_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  RawTable t;
  std::string line;
  std::size_t line_no = 0;
  char delim = ',';
  while (std::getline(is, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const std::string body = trim(s.substr(1));
      const std::string key = "resolution:";
      if (body.rfind(key, 0) == 0) {
        double r = 0.0;
        if (!parse_double(trim(body.substr(key.size())), r) || !(r > 0.0)) {
          throw DataError(located(path, line_no, "invalid resolution comment"));
        }
        t.resolution = r;
      }
      continue;
    }
    if (t.header.empty()) {
      if (s.find(',') == std::string::npos && s.find('\t') != std::string::npos) delim = '\t';
      t.header = split_fields(s, delim);
      continue;
    }
    auto fields = split_fields(s, delim);
    if (fields.size() != t.header.size()) {
      throw DataError(located(path, line_no, "expected " + std::to_string(t.header.size()) + " fields, found " +
                                                 std::to_string(fields.size())));
    }
    t.rows.emplace_back(line_no, std::move(fields));
  }
  if (t.header.empty()) throw DataError(path + ": missing header");
  return t;
}

inline void require_coordinate_header(const RawTable& t, const std::string& path) {
  if (t.header.size() < 3 || t.header[0] != "cell_id" || t.header[1] != "lon" || t.header[2] != "lat") {
    throw DataError(path + ":1: header must start with cell_id, lon, lat");
  }
}

inline constexpr Index kMaxLatticeNodes = Index{1} << 26;

// Smallest positive spacing among distinct coordinate values.
inline std::optional<double> min_spacing(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::optional<double> best;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double d = v[i] - v[i - 1];
    if (d > 1e-9 && (!best || d < *best)) best = d;
  }
  return best;
}

}  // namespace detail

// Bounding lattice through the given cell centres. Without a declared
// resolution it is the smallest coordinate spacing present.
inline GridGeometry infer_geometry(const std::vector<double>& lons, const std::vector<double>& lats,
                                   std::optional<double> resolution = std::nullopt) {
  if (lons.empty() || lons.size() != lats.size()) throw DataError("cannot infer a lattice from no cells");
  double res = 1.0;
  if (resolution) {
    res = *resolution;
  } else {
    auto a = detail::min_spacing(lons);
    auto b = detail::min_spacing(lats);
    if (a && b) res = std::min(*a, *b);
    else if (a) res = *a;
    else if (b) res = *b;
  }
  if (!(res > 0.0) || !std::isfinite(res)) throw DataError("lattice resolution must be positive");
  GridGeometry g;
  g.resolution = res;
  g.lon_min = *std::min_element(lons.begin(), lons.end());
  g.lat_min = *std::min_element(lats.begin(), lats.end());
  const double span_c = (*std::max_element(lons.begin(), lons.end()) - g.lon_min) / res;
  const double span_r = (*std::max_element(lats.begin(), lats.end()) - g.lat_min) / res;
  if (!(span_c < 1e7 && span_r < 1e7)) throw DataError("lattice bounding box is too large for the resolution");
  g.cols = static_cast<Index>(std::llround(span_c)) + 1;
  g.rows = static_cast<Index>(std::llround(span_r)) + 1;
  if (g.rows * g.cols > detail::kMaxLatticeNodes) throw DataError("lattice has too many nodes");
  return g;
}

struct GridRow {
  std::string cell_id;
  double lon = 0.0;
  double lat = 0.0;
  std::vector<double> values;  // NaN marks missing
};

// Gridded table: cell_id, lon, lat and value columns. Compositional
// covariates use one column per part named "name:CATEGORY".
struct GridTable {
  double resolution = 1.0;
  std::vector<std::string> columns;
  std::vector<GridRow> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw DataError("grid table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }
};

inline GridTable read_grid_table(const std::string& path, std::optional<double> resolution = std::nullopt) {
  const auto raw = detail::read_raw_table(path);
  detail::require_coordinate_header(raw, path);
  GridTable t;
  t.columns.assign(raw.header.begin() + 3, raw.header.end());
  std::set<std::string> ids;
  std::vector<double> lons, lats;
  for (const auto& [line_no, f] : raw.rows) {
    GridRow r;
    r.cell_id = f[0];
    if (r.cell_id.empty()) throw DataError(detail::located(path, line_no, "empty cell_id"));
    if (!ids.insert(r.cell_id).second) throw DataError(detail::located(path, line_no, "duplicate cell_id '" + r.cell_id + "'"));
    if (!detail::parse_double(f[1], r.lon) || !detail::parse_double(f[2], r.lat)) {
      throw DataError(detail::located(path, line_no, "invalid coordinates"));
    }
    for (std::size_t j = 3; j < f.size(); ++j) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!detail::is_missing_token(f[j]) && !detail::parse_double(f[j], v)) {
        throw DataError(detail::located(path, line_no, "invalid value '" + f[j] + "' in column " + raw.header[j]));
      }
      r.values.push_back(v);
    }
    lons.push_back(r.lon);
    lats.push_back(r.lat);
    t.rows.push_back(std::move(r));
  }
  if (t.rows.empty()) throw DataError(path + ": no data rows");
  const auto geom = infer_geometry(lons, lats, resolution ? resolution : raw.resolution);
  t.resolution = geom.resolution;
  std::set<Index> nodes;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto node = geom.locate(t.rows[i].lon, t.rows[i].lat);
    if (!node) throw DataError(detail::located(path, raw.rows[i].first, "cell centre is off the lattice"));
    if (!nodes.insert(*node).second) throw DataError(detail::located(path, raw.rows[i].first, "duplicate lattice cell"));
  }
  return t;
}

inline void write_grid_table(const std::string& path, const GridTable& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "# resolution: " << detail::format_double(t.resolution) << "\n";
  os << "cell_id,lon,lat";
  for (const auto& c : t.columns) os << ',' << c;
  os << '\n';
  for (const auto& r : t.rows) {
    os << r.cell_id << ',' << detail::format_double(r.lon) << ',' << detail::format_double(r.lat);
    for (double v : r.values) os << ',' << detail::format_double(v);
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline GridGeometry table_geometry(const GridTable& t) {
  std::vector<double> lons, lats;
  for (const auto& r : t.rows) {
    lons.push_back(r.lon);
    lats.push_back(r.lat);
  }
  return infer_geometry(lons, lats, t.resolution);
}

// Covariate lattice from a grid table. Cells absent from the table fall
// outside the domain. Compositional groups must list `categories` in order.
inline LatticeGrid grid_from_table(const GridTable& t, const std::vector<std::string>& categories,
                                   std::optional<GridGeometry> geometry = std::nullopt) {
  LatticeGrid g;
  g.geometry = geometry ? *geometry : table_geometry(t);
  g.categories = categories;
  const Index n = g.geometry.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  g.domain.assign(static_cast<std::size_t>(n), false);

  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> groups;
  std::vector<std::string> group_order;
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    const auto& c = t.columns[j];
    const auto colon = c.find(':');
    if (colon == std::string::npos) {
      g.scalars[c] = Eigen::VectorXd::Constant(n, nan);
      continue;
    }
    const std::string name = c.substr(0, colon);
    if (groups.find(name) == groups.end()) group_order.push_back(name);
    groups[name].emplace_back(c.substr(colon + 1), j);
  }
  for (const auto& name : group_order) {
    const auto& parts = groups[name];
    if (parts.size() != categories.size()) throw DataError("covariate '" + name + "' has the wrong number of parts");
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (parts[k].first != categories[k]) {
        throw DataError("covariate '" + name + "' parts do not match the categories (" + parts[k].first + ")");
      }
    }
    g.compositions[name] = Eigen::MatrixXd::Constant(n, static_cast<Index>(categories.size()), nan);
  }

  for (const auto& r : t.rows) {
    const auto node = g.geometry.locate(r.lon, r.lat);
    if (!node) throw DataError("grid cell '" + r.cell_id + "' is off the target lattice");
    g.domain[static_cast<std::size_t>(*node)] = true;
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      const auto& c = t.columns[j];
      const auto colon = c.find(':');
      if (colon == std::string::npos) {
        g.scalars[c][*node] = r.values[j];
      }
    }
    for (const auto& name : group_order) {
      const auto& parts = groups[name];
      for (std::size_t k = 0; k < parts.size(); ++k) {
        g.compositions[name](*node, static_cast<Index>(k)) = r.values[parts[k].second];
      }
    }
  }
  return g;
}

struct ReadOptions {
  double epsilon = 1e-4;
  std::optional<GridGeometry> lattice;  // place observations on this lattice
  std::optional<double> resolution;
};

struct ObservationData {
  ObservationSet obs;
  GridGeometry geometry;
  std::vector<std::string> categories;
  std::vector<std::string> cell_ids;  // aligned with obs
  std::size_t renormalized = 0;      // rows whose sum was not exactly one
  std::size_t zero_replaced = 0;     // rows touched by zero replacement
};

// Observation table: cell_id, lon, lat, then one column per category.
inline ObservationData read_observations(const std::string& path, const ReadOptions& options = {}) {
  if (!(options.epsilon > 0.0 && options.epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  const auto raw = detail::read_raw_table(path);
  detail::require_coordinate_header(raw, path);
  const std::size_t k_parts = raw.header.size() - 3;
  if (k_parts < 2) throw DataError(path + ":1: need at least two composition columns");

  ObservationData out;
  out.categories.assign(raw.header.begin() + 3, raw.header.end());
  std::vector<double> lons, lats;
  std::set<std::string> ids;
  for (const auto& [line_no, f] : raw.rows) {
    if (f[0].empty()) throw DataError(detail::located(path, line_no, "empty cell_id"));
    if (!ids.insert(f[0]).second) throw DataError(detail::located(path, line_no, "duplicate cell_id '" + f[0] + "'"));
    double lon = 0.0, lat = 0.0;
    if (!detail::parse_double(f[1], lon) || !detail::parse_double(f[2], lat)) {
      throw DataError(detail::located(path, line_no, "invalid coordinates"));
    }
    Eigen::VectorXd v(static_cast<Index>(k_parts));
    for (std::size_t k = 0; k < k_parts; ++k) {
      double x = 0.0;
      if (!detail::parse_double(f[3 + k], x)) {
        throw DataError(detail::located(path, line_no, "invalid proportion '" + f[3 + k] + "'"));
      }
      if (x < 0.0 || x > 1.0 + 1e-12) throw DataError(detail::located(path, line_no, "proportion outside [0, 1]"));
      v[static_cast<Index>(k)] = x;
    }
    const double sum = v.sum();
    if (!(sum >= 0.99 && sum <= 1.01)) {
      throw DataError(detail::located(path, line_no, "row sums to " + detail::format_double(sum) + ", outside [0.99, 1.01]"));
    }
    if (sum != 1.0) ++out.renormalized;
    if ((v.array() < options.epsilon).any()) ++out.zero_replaced;
    out.obs.y.push_back(replace_zeros(v, options.epsilon));
    out.cell_ids.push_back(f[0]);
    lons.push_back(lon);
    lats.push_back(lat);
  }
  if (out.obs.y.empty()) throw DataError(path + ": no observations");

  out.geometry = options.lattice ? *options.lattice : infer_geometry(lons, lats, options.resolution ? options.resolution : raw.resolution);
  std::set<Index> nodes;
  for (std::size_t i = 0; i < lons.size(); ++i) {
    const auto node = out.geometry.locate(lons[i], lats[i]);
    if (!node) throw DataError(detail::located(path, raw.rows[i].first, "cell centre is off the lattice"));
    if (!nodes.insert(*node).second) throw DataError(detail::located(path, raw.rows[i].first, "duplicate lattice cell"));
    out.obs.cell_indices.push_back(*node);
  }
  return out;
}

inline CompositionMap read_composition_map(const std::string& path, std::optional<GridGeometry> lattice = std::nullopt) {
  ReadOptions opt;
  opt.lattice = lattice;
  const auto data = read_observations(path, opt);
  CompositionMap map;
  map.geometry = data.geometry;
  map.categories = data.categories;
  map.cells.assign(static_cast<std::size_t>(data.geometry.size()), std::nullopt);
  for (std::size_t i = 0; i < data.obs.size(); ++i) map.cells[static_cast<std::size_t>(data.obs.cell_indices[i])] = data.obs.y[i];
  return map;
}

enum class AreaWeighting { spherical, uniform };

// Cell area on the unit sphere (steradians) or 1 for uniform weighting.
inline double cell_area(double lat_centre, double res, AreaWeighting w) {
  if (w == AreaWeighting::uniform) return 1.0;
  constexpr double deg = 3.14159265358979323846 / 180.0;
  const double s = std::sin((lat_centre + 0.5 * res) * deg) - std::sin((lat_centre - 0.5 * res) * deg);
  return res * deg * s;
}

struct UpscaleResult {
  GridTable table;
  std::vector<std::string> empty_cells;  // target cells without any observed child
};

// Area-weighted aggregation onto a coarser lattice aligned with the fine
// lattice's south-west corner. A target value is missing when more than half
// of its children are missing.
inline UpscaleResult upscale(const GridTable& fine, double target_resolution,
                             AreaWeighting weighting = AreaWeighting::spherical) {
  if (!(target_resolution > 0.0)) throw ConfigError("target resolution must be positive");
  const double ratio_f = target_resolution / fine.resolution;
  const double ratio_r = std::round(ratio_f);
  if (ratio_r < 1.0 || std::abs(ratio_f - ratio_r) > 1e-9 * ratio_r) {
    throw ConfigError("target resolution is not an integer multiple of the source resolution");
  }
  const Index ratio = static_cast<Index>(ratio_r);
  const GridGeometry fg = table_geometry(fine);

  GridGeometry cg;
  cg.resolution = target_resolution;
  cg.lon_min = fg.lon_min - 0.5 * fg.resolution + 0.5 * target_resolution;
  cg.lat_min = fg.lat_min - 0.5 * fg.resolution + 0.5 * target_resolution;
  cg.rows = (fg.rows + ratio - 1) / ratio;
  cg.cols = (fg.cols + ratio - 1) / ratio;

  std::vector<const GridRow*> at(static_cast<std::size_t>(fg.size()), nullptr);
  for (const auto& r : fine.rows) at[static_cast<std::size_t>(*fg.locate(r.lon, r.lat))] = &r;

  // Columns grouped: compositional "name:CAT" columns average jointly.
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t j = 0; j < fine.columns.size(); ++j) {
    const auto colon = fine.columns[j].find(':');
    if (colon == std::string::npos) {
      groups.push_back({j});
      continue;
    }
    const std::string name = fine.columns[j].substr(0, colon);
    auto it = group_of.find(name);
    if (it == group_of.end()) {
      group_of[name] = groups.size();
      groups.push_back({j});
    } else {
      groups[it->second].push_back(j);
    }
  }

  UpscaleResult res;
  res.table.resolution = target_resolution;
  res.table.columns = fine.columns;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t children = static_cast<std::size_t>(ratio * ratio);
  for (Index node = 0; node < cg.size(); ++node) {
    const Index R = cg.row_of(node), C = cg.col_of(node);
    GridRow out;
    out.cell_id = std::to_string(node);
    out.lon = cg.lon(node);
    out.lat = cg.lat(node);
    out.values.assign(fine.columns.size(), nan);
    bool any_child = false;
    for (const auto& grp : groups) {
      std::vector<double> acc(grp.size(), 0.0);
      double wsum = 0.0;
      std::size_t present = 0;
      for (Index dr = 0; dr < ratio; ++dr) {
        for (Index dc = 0; dc < ratio; ++dc) {
          const Index r = R * ratio + dr, c = C * ratio + dc;
          if (r >= fg.rows || c >= fg.cols) continue;
          const GridRow* child = at[static_cast<std::size_t>(fg.node(r, c))];
          if (!child) continue;
          any_child = true;
          bool ok = true;
          for (std::size_t j : grp) ok = ok && std::isfinite(child->values[j]);
          if (!ok) continue;
          const double w = cell_area(child->lat, fg.resolution, weighting);
          for (std::size_t q = 0; q < grp.size(); ++q) acc[q] += w * child->values[grp[q]];
          wsum += w;
          ++present;
        }
      }
      if (present == 0 || 2 * (children - present) > children) continue;
      double total = 0.0;
      for (auto& a : acc) {
        a /= wsum;
        total += a;
      }
      const bool compositional = grp.size() > 1 || fine.columns[grp[0]].find(':') != std::string::npos;
      for (std::size_t q = 0; q < grp.size(); ++q) {
        out.values[grp[q]] = compositional && total > 0.0 ? acc[q] / total : acc[q];
      }
    }
    if (!any_child) {
      res.empty_cells.push_back(out.cell_id);
      continue;
    }
    res.table.rows.push_back(std::move(out));
  }
  return res;
}

// ---- digests -------------------------------------------------------------

inline std::string sha256_bytes(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string sha256_file(const std::string& path) { return sha256_bytes(read_file_bytes(path)); }

// ---- run outputs ---------------------------------------------------------

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
  std::vector<std::pair<std::string, std::string>> outputs;  // file name, digest
  std::string version = kSoftwareVersion;
  std::optional<double> elapsed_seconds;  // only written when requested
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "[run]\n";
  os << "command = " << m.command << "\n";
  os << "version = " << m.version << "\n";
  os << "config_digest = " << m.config_digest << "\n";
  if (m.elapsed_seconds) os << "elapsed_seconds = " << detail::format_double(*m.elapsed_seconds) << "\n";
  os << "\n[seeds]\n";
  for (const auto& [k, v] : m.seeds) os << k << " = " << v << "\n";
  os << "\n[inputs]\n";
  for (const auto& [k, v] : m.inputs) os << k << " = " << v << "\n";
  os << "\n[outputs]\n";
  for (const auto& [k, v] : m.outputs) os << k << " = " << v << "\n";
  if (!os) throw IoError("failed writing '" + path + "'");
}

using Metrics = std::vector<std::pair<std::string, std::string>>;

inline void write_metrics(const std::string& path, const Metrics& metrics) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& [k, v] : metrics) os << k << " = " << v << "\n";
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline Metrics read_metrics(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  Metrics out;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline void write_traces(const std::string& path, const TraceTable& t, std::int64_t first_iteration = 0) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "iteration";
  for (const auto& n : t.names) os << ',' << n;
  os << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    os << first_iteration + static_cast<std::int64_t>(r);
    for (std::size_t c = 0; c < t.columns(); ++c) os << ',' << detail::format_double(t.at(r, c));
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline GridTable composition_table(const CompositionMap& map) {
  GridTable t;
  t.resolution = map.geometry.resolution;
  t.columns = map.categories;
  for (Index i = 0; i < map.size(); ++i) {
    const auto& c = map.cells[static_cast<std::size_t>(i)];
    if (!c) continue;
    GridRow r;
    r.cell_id = std::to_string(i);
    r.lon = map.geometry.lon(i);
    r.lat = map.geometry.lat(i);
    r.values.assign(c->values().data(), c->values().data() + c->size());
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline void write_composition_map(const std::string& path, const CompositionMap& map) {
  write_grid_table(path, composition_table(map));
}

// Posterior-mean composition of every domain node.
inline CompositionMap reconstruction_map(const PosteriorSummary& summary, const LatticeGrid& grid) {
  if (static_cast<Index>(summary.z_mean.size()) != grid.size()) throw InvalidArgument("reconstruction does not match the grid");
  CompositionMap map;
  map.geometry = grid.geometry;
  map.categories = grid.categories;
  map.cells.assign(static_cast<std::size_t>(grid.size()), std::nullopt);
  for (Index i = 0; i < grid.size(); ++i) {
    if (grid.in_domain(i)) map.cells[static_cast<std::size_t>(i)] = summary.z_mean[static_cast<std::size_t>(i)];
  }
  return map;
}

// Exclusive ownership of an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir) : path_((std::filesystem::path(dir) / ".lock").string()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw IoError("output directory '" + dir + "' is locked by another run (" + path_ + ")");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string path_;
};

struct RunOutputs {
  std::optional<CompositionMap> reconstruction;
  const TraceTable* traces = nullptr;
  Metrics metrics;
  RunManifest manifest;
};

// Writes reconstruction.csv, traces.csv, metrics.txt and manifest.txt. The
// manifest lists digests of every file in the directory written before it.
inline void write_outputs(const std::string& out_dir, RunOutputs out) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
  const auto file = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  if (out.reconstruction) write_composition_map(file("reconstruction.csv"), *out.reconstruction);
  if (out.traces) write_traces(file("traces.csv"), *out.traces);
  write_metrics(file("metrics.txt"), out.metrics);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || name == "manifest.txt" || name == ".lock" || name.ends_with(".tmp")) continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  out.manifest.outputs.clear();
  for (const auto& n : names) out.manifest.outputs.emplace_back(n, sha256_file((fs::path(out_dir) / n).string()));
  write_manifest(file("manifest.txt"), out.manifest);
}

// ---- rasters -------------------------------------------------------------

inline std::uint8_t channel(double v) {
  const double s = std::floor(255.0 * v + 1e-9);
  return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

// Binary PPM. Each cell is a block x block square; north is up. Parts 1, 2, 3
// map to red, green and blue; missing cells are white.
inline void render_ternary_map(const CompositionMap& map, const std::string& path, int block = 1) {
  if (block < 1) throw InvalidArgument("render_ternary_map: block must be positive");
  if (map.categories.size() != 3 && !map.cells.empty()) {
    for (const auto& c : map.cells) {
      if (c && c->size() != 3) throw InvalidArgument("render_ternary_map: needs three-part compositions");
    }
  }
  const auto& g = map.geometry;
  const Index w = g.cols * block, h = g.rows * block;
  std::string px(static_cast<std::size_t>(w * h * 3), '\0');
  for (Index y = 0; y < h; ++y) {
    const Index r = g.rows - 1 - y / block;
    for (Index x = 0; x < w; ++x) {
      const auto& cell = map.cells[static_cast<std::size_t>(g.node(r, x / block))];
      const std::size_t o = static_cast<std::size_t>((y * w + x) * 3);
      for (Index k = 0; k < 3; ++k) {
        px[o + static_cast<std::size_t>(k)] = static_cast<char>(cell ? channel((*cell)[k]) : 255);
      }
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P6\n" << w << ' ' << h << "\n255\n";
  os.write(px.data(), static_cast<std::streamsize>(px.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

// Binary PGM of a non-negative per-cell value, 0 black and `max_value` (or
// the largest value) white. Missing cells are white.
inline void render_grayscale_map(const std::vector<std::optional<double>>& values, const GridGeometry& g,
                                 const std::string& path, int block = 1, std::optional<double> max_value = std::nullopt) {
  if (block < 1) throw InvalidArgument("render_grayscale_map: block must be positive");
  if (static_cast<Index>(values.size()) != g.size()) throw InvalidArgument("render_grayscale_map: size mismatch");
  double top = 0.0;
  if (max_value) {
    top = *max_value;
  } else {
    for (const auto& v : values) {
      if (v) top = std::max(top, *v);
    }
  }
  const Index w = g.cols * block, h = g.rows * block;
  std::string px(static_cast<std::size_t>(w * h), '\0');
  for (Index y = 0; y < h; ++y) {
    const Index r = g.rows - 1 - y / block;
    for (Index x = 0; x < w; ++x) {
      const auto& v = values[static_cast<std::size_t>(g.node(r, x / block))];
      std::uint8_t p = 255;
      if (v) p = top > 0.0 ? channel(std::min(*v / top, 1.0)) : 0;
      px[static_cast<std::size_t>(y * w + x)] = static_cast<char>(p);
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << w << ' ' << h << "\n255\n";
  os.write(px.data(), static_cast<std::streamsize>(px.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace landcover
