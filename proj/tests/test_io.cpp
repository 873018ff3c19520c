#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace landcover;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

GridTable fine_table(Index rows, Index cols, double res, double lat0, std::uint64_t seed) {
  Rng rng(seed);
  GridTable t;
  t.resolution = res;
  t.columns = {"elevation", "aux:CF", "aux:BF", "aux:UF"};
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      GridRow row;
      row.cell_id = "f" + std::to_string(r * cols + c);
      row.lon = 5.0 + res * (c + 0.5);
      row.lat = lat0 + res * (r + 0.5);
      const Composition z = dirichlet_sample(Composition{0.5, 0.3, 0.2}, 3.0, rng);
      row.values = {100.0 * rng.uniform(), z[0], z[1], z[2]};
      t.rows.push_back(row);
    }
  }
  return t;
}

double area(double lat, double res) {
  const double d = M_PI / 180.0;
  return res * d * (std::sin((lat + res / 2) * d) - std::sin((lat - res / 2) * d));
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("observation tables") {
  const auto dir = files::scratch("io_obs");
  write_text(dir / "ok.csv", "cell_id,lon,lat,CF,BF,UF\na,0.5,0.5,0.5,0.3,0.2\nb,1.5,0.5,1,0,0\nc,0.5,2.5,0.3,0.3,0.405\n");
  const ObservationData d = read_observations((dir / "ok.csv").string());
  CHECK(d.obs.size() == 3);
  CHECK(d.categories == std::vector<std::string>{"CF", "BF", "UF"});
  CHECK(d.obs.y[0].values() == Eigen::Vector3d(0.5, 0.3, 0.2));
  CHECK(d.geometry.rows == 3);
  CHECK(d.geometry.cols == 2);
  const double e = 1e-4 / (1.0 + 2e-4);
  CHECK(d.obs.y[1][1] == doctest::Approx(e).epsilon(1e-12));
  CHECK(d.obs.y[1][0] == doctest::Approx(1.0 - 2 * e).epsilon(1e-12));
  CHECK(d.renormalized == 1);
  CHECK(d.zero_replaced == 1);
  CHECK(d.obs.y[2].values().sum() == doctest::Approx(1.0).epsilon(1e-15));

  write_text(dir / "half.csv", "cell_id,lon,lat,CF,BF,UF\na,0.5,0.5,0.2,0.2,0.1\n");
  const std::string msg = error_of([&] { read_observations((dir / "half.csv").string()); });
  CHECK(msg.find(":2:") != std::string::npos);
  CHECK_THROWS_AS(read_observations((dir / "half.csv").string()), DataError);

  write_text(dir / "dup.csv", "cell_id,lon,lat,CF,BF,UF\na,0.5,0.5,0.5,0.3,0.2\nb,0.5,0.5,0.5,0.3,0.2\n");
  CHECK_THROWS_AS(read_observations((dir / "dup.csv").string()), DataError);
  write_text(dir / "neg.csv", "cell_id,lon,lat,CF,BF,UF\na,0.5,0.5,-0.1,0.9,0.2\n");
  CHECK_THROWS_AS(read_observations((dir / "neg.csv").string()), DataError);
  write_text(dir / "hdr.csv", "id,x,y,CF,BF,UF\na,0.5,0.5,0.5,0.3,0.2\n");
  CHECK_THROWS_AS(read_observations((dir / "hdr.csv").string()), DataError);
  write_text(dir / "tab.tsv", "# resolution: 0.5\ncell_id\tlon\tlat\tCF\tBF\tUF\na\t0.25\t0.25\t0.5\t0.3\t0.2\nb\t1.25\t0.25\t0.5\t0.3\t0.2\n");
  const ObservationData t = read_observations((dir / "tab.tsv").string());
  CHECK(t.geometry.resolution == 0.5);
  CHECK(t.geometry.cols == 3);
  CHECK_THROWS_AS(read_observations((dir / "missing.csv").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("malformed input never crashes the readers") {
  const auto dir = files::scratch("io_fuzz");
  const std::string base = "# resolution: 1\ncell_id,lon,lat,CF,BF,UF\na,0.5,0.5,0.5,0.3,0.2\nb,1.5,0.5,0.2,0.3,0.5\n";
  std::mt19937_64 gen(1);
  const std::string alphabet = "0123456789.,-e#\n\tNA:abc ";
  int errors = 0;
  for (int i = 0; i < 3000; ++i) {
    std::string s = base;
    const int edits = 1 + static_cast<int>(gen() % 6);
    for (int k = 0; k < edits; ++k) {
      const std::size_t pos = gen() % (s.size() + 1);
      switch (gen() % 3) {
        case 0: s.insert(pos, 1, alphabet[gen() % alphabet.size()]); break;
        case 1: if (pos < s.size()) s.erase(pos, 1); break;
        default: if (pos < s.size()) s[pos] = alphabet[gen() % alphabet.size()];
      }
    }
    write_text(dir / "f.csv", s);
    try {
      (void)read_observations((dir / "f.csv").string());
      (void)read_grid_table((dir / "f.csv").string());
    } catch (const Error&) {
      ++errors;
    }
  }
  CHECK(errors > 0);
  fs::remove_all(dir);
}

TEST_CASE("grid tables and lattice construction") {
  const auto dir = files::scratch("io_grid");
  GridTable t = fine_table(3, 4, 0.5, 50.0, 1);
  t.rows.erase(t.rows.begin() + 5);
  t.rows[2].values[0] = std::numeric_limits<double>::quiet_NaN();
  write_grid_table((dir / "g.csv").string(), t);
  const GridTable back = read_grid_table((dir / "g.csv").string());
  CHECK(back.resolution == 0.5);
  CHECK(back.rows.size() == 11);
  CHECK(std::isnan(back.rows[2].values[0]));
  CHECK(back.rows[7].values[3] == t.rows[7].values[3]);

  t.rows[2].values[0] = 1.0;
  const LatticeGrid g = grid_from_table(t, {"CF", "BF", "UF"});
  CHECK(g.size() == 12);
  CHECK_FALSE(g.in_domain(5));
  CHECK(g.in_domain(6));
  CHECK(g.compositions.at("aux").rows() == 12);
  CHECK(g.scalars.count("elevation") == 1);
  fs::remove_all(dir);
}

TEST_CASE("upscaling") {
  GridTable t;
  t.resolution = 1.0;
  t.columns = {"elevation"};
  const double elev[] = {0, 0, 0, 400};
  for (int i = 0; i < 4; ++i) t.rows.push_back({"c" + std::to_string(i), 0.5 + i % 2, 0.5 + i / 2, {elev[i]}});
  const UpscaleResult u = upscale(t, 2.0, AreaWeighting::uniform);
  REQUIRE(u.table.rows.size() == 1);
  CHECK(u.table.rows[0].values[0] == 100.0);
  CHECK(u.table.rows[0].lon == 1.0);
  CHECK(u.table.rows[0].lat == 1.0);

  GridTable flat = fine_table(4, 6, 0.25, 40.0, 2);
  for (auto& r : flat.rows) r.values = {7.5, 0.2, 0.3, 0.5};
  for (const auto& r : upscale(flat, 0.5).table.rows) {
    CHECK(r.values[0] == doctest::Approx(7.5).epsilon(1e-14));
    CHECK(r.values[3] == doctest::Approx(0.5).epsilon(1e-14));
  }
  CHECK_THROWS_AS(upscale(flat, 0.6), ConfigError);
}

TEST_CASE("upscaling matches a brute-force area-weighted average") {
  const GridTable fine = fine_table(6, 6, 0.5, 60.0, 3);
  const UpscaleResult u = upscale(fine, 1.5);
  REQUIRE(u.table.rows.size() == 4);
  double mass_fine = 0.0, mass_coarse = 0.0;
  for (const auto& r : fine.rows) mass_fine += area(r.lat, 0.5) * r.values[0];
  for (const auto& c : u.table.rows) {
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    double w = 0.0;
    for (const auto& r : fine.rows) {
      if (std::abs(r.lon - c.lon) < 0.75 && std::abs(r.lat - c.lat) < 0.75) {
        acc += area(r.lat, 0.5) * Eigen::Vector4d(r.values[0], r.values[1], r.values[2], r.values[3]);
        w += area(r.lat, 0.5);
      }
    }
    acc /= w;
    const double tot = acc.tail(3).sum();
    CHECK(c.values[0] == doctest::Approx(acc[0]).epsilon(1e-12));
    for (int k = 1; k < 4; ++k) CHECK(c.values[static_cast<std::size_t>(k)] == doctest::Approx(acc[k] / tot).epsilon(1e-12));
    mass_coarse += area(c.lat, 1.5) * c.values[0];
  }
  CHECK(mass_coarse == doctest::Approx(mass_fine).epsilon(1e-12));
}

TEST_CASE("upscaling marks sparse targets missing") {
  GridTable t = fine_table(4, 4, 1.0, 0.0, 4);
  // Coarse cell 0 keeps 1 of 4 children; coarse cell 3 loses every child.
  std::vector<GridRow> kept;
  for (const auto& r : t.rows) {
    const bool sw = r.lon < 7.0 && r.lat < 2.0, ne = r.lon > 7.0 && r.lat > 2.0;
    if (sw && !(r.lon < 6.0 && r.lat < 1.0)) continue;
    if (ne) continue;
    kept.push_back(r);
  }
  // keep one north-east corner cell so the lattice extent is unchanged
  GridRow corner = t.rows.back();
  corner.values = {std::numeric_limits<double>::quiet_NaN(), 0.2, 0.3, 0.5};
  kept.push_back(corner);
  t.rows = kept;
  const UpscaleResult u = upscale(t, 2.0, AreaWeighting::uniform);
  REQUIRE(u.table.rows.size() == 4);
  CHECK(std::isnan(u.table.rows[0].values[0]));
  CHECK(std::isfinite(u.table.rows[1].values[0]));
  CHECK(std::isnan(u.table.rows[3].values[0]));
  CHECK(std::isnan(u.table.rows[3].values[1]));
}

TEST_CASE("digests and manifests") {
  const auto dir = files::scratch("io_manifest");
  CHECK(sha256_bytes("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_text(dir / "in.csv", "hello");
  const std::string d1 = sha256_file((dir / "in.csv").string());
  write_text(dir / "in.csv", "hellp");
  CHECK(sha256_file((dir / "in.csv").string()) != d1);
  write_text(dir / "in.csv", "hello");
  CHECK(sha256_file((dir / "in.csv").string()) == d1);

  RunOutputs out;
  out.metrics = {{"acd", "0.5"}};
  out.manifest.command = "fit";
  out.manifest.seeds = {{"seed", 3}};
  out.manifest.inputs = {{"in.csv", d1}};
  write_outputs((dir / "run").string(), out);
  const std::string m = files::slurp(dir / "run" / "manifest.txt");
  CHECK(m.find("metrics.txt = " + sha256_file((dir / "run" / "metrics.txt").string())) != std::string::npos);
  CHECK(m.find("in.csv = " + d1) != std::string::npos);
  CHECK(m.find("elapsed") == std::string::npos);
  CHECK(read_metrics((dir / "run" / "metrics.txt").string()) == out.metrics);
  fs::remove_all(dir);
}

TEST_CASE("reconstruction tables round-trip through the observation reader") {
  const auto dir = files::scratch("io_roundtrip");
  CompositionMap map;
  map.geometry = GridGeometry{-3.0, 58.0, 0.5, 3, 4};
  map.categories = {"CF", "BF", "UF"};
  Rng rng(5);
  for (Index i = 0; i < 12; ++i) {
    if (i == 7) {
      map.cells.emplace_back();
    } else {
      map.cells.emplace_back(dirichlet_sample(Composition{0.3, 0.3, 0.4}, 6.0, rng));
    }
  }
  write_composition_map((dir / "m.csv").string(), map);
  const CompositionMap back = read_composition_map((dir / "m.csv").string());
  CHECK(back.geometry == map.geometry);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(back.cells[i].has_value() == map.cells[i].has_value());
    if (map.cells[i] && map.cells[i]->values().minCoeff() >= 1e-4) {
      CHECK((back.cells[i]->values() - map.cells[i]->values()).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("ternary rendering") {
  const auto dir = files::scratch("io_render");
  CHECK(channel(1.0) == 255);
  CHECK(channel(1.0 / 3.0) == 85);
  CHECK(channel(0.0) == 0);
  CompositionMap map;
  map.geometry = GridGeometry{0.0, 0.0, 1.0, 2, 3};
  map.categories = {"CF", "BF", "UF"};
  map.cells = {Composition{1.0, 0.0, 0.0}, Composition{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, std::nullopt,
               Composition{0.0, 1.0, 0.0}, Composition{0.0, 0.0, 1.0}, Composition{0.5, 0.5, 0.0}};
  render_ternary_map(map, (dir / "m.ppm").string(), 2);
  const std::string img = files::slurp(dir / "m.ppm");
  const std::string header = "P6\n6 4\n255\n";
  REQUIRE(img.size() == header.size() + 6 * 4 * 3);
  CHECK(img.substr(0, header.size()) == header);
  auto px = [&](int x, int y) {
    const std::size_t o = header.size() + static_cast<std::size_t>((y * 6 + x) * 3);
    return std::array<int, 3>{static_cast<unsigned char>(img[o]), static_cast<unsigned char>(img[o + 1]), static_cast<unsigned char>(img[o + 2])};
  };
  CHECK(px(0, 3) == std::array<int, 3>{255, 0, 0});  // south-west cell, bottom-left pixels
  CHECK(px(3, 2) == std::array<int, 3>{85, 85, 85});
  CHECK(px(5, 3) == std::array<int, 3>{255, 255, 255});
  CHECK(px(0, 0) == std::array<int, 3>{0, 255, 0});
  CHECK(px(4, 1) == std::array<int, 3>{127, 127, 0});

  render_grayscale_map({0.0, 1.0, std::nullopt, 2.0, 0.5, 0.0}, map.geometry, (dir / "g.pgm").string());
  const std::string g = files::slurp(dir / "g.pgm");
  CHECK(g.substr(0, 11) == "P5\n3 2\n255\n");
  CHECK(static_cast<unsigned char>(g[11]) == 255);  // north-west: 2.0 is the maximum
  CHECK(static_cast<unsigned char>(g[11 + 3]) == 0);
  fs::remove_all(dir);
}

TEST_CASE("output directory lock") {
  const auto dir = files::scratch("io_lock");
  {
    OutputLock a(dir.string());
    CHECK_THROWS_AS(OutputLock(dir.string()), IoError);
  }
  CHECK_NOTHROW(OutputLock(dir.string()));
  fs::remove_all(dir);
}

}  // TEST_SUITE
