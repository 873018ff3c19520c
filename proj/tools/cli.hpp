#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "landcover.hpp"

namespace landcover::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

namespace fs = std::filesystem;

struct ConfigEntry {
  std::string section, key, value;
  std::size_t line = 0;
};

// Flat key = value text grouped under [section] headers.
inline std::vector<ConfigEntry> read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<ConfigEntry> out;
  std::string line, section;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(path + ":" + std::to_string(no) + ": malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
    std::string value = detail::trim(s.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out.push_back({section, detail::trim(s.substr(0, eq)), value, no});
  }
  return out;
}

struct Settings {
  // run
  std::string config_path;
  std::uint64_t seed = 1;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool record_timing = false;

  // data
  std::string observations;
  std::string covariates;
  double resolution = 0.0;  // 0: infer
  double epsilon = 1e-4;

  // model
  std::string preset = "Constant";
  std::vector<std::string> covariate_list;
  std::string encoding = "alr";

  // chain
  std::int64_t n_samples = 100000;
  std::int64_t burn_in = 10000;
  std::int64_t thin = 10;
  std::size_t chains = 4;
  std::int64_t checkpoint_every = 0;
  bool resume = false;

  // cv
  std::size_t folds = 6;
  double cv_factor = 0.25;
  std::vector<std::string> models;

  // compare
  std::vector<std::string> maps;
  std::string reference;

  // output
  std::string out = "out";
  std::vector<Index> region_cells;
  std::vector<double> region_levels{0.5, 0.95};
  std::string region_method = "gaussian";
  int block = 4;
  std::string map_path;
  std::string image_path;

  // simulate
  Index rows = 15;
  Index cols = 15;
  double lon_min = -10.0;
  double lat_min = 45.0;
  double observed_fraction = 0.6;
  double sim_alpha = 20.0;
  double sim_kappa = 0.5;
  double sim_sigma = 0.7;
  double signal = 0.8;
  std::size_t noise_covariates = 0;
};

struct Registered {
  std::string section;
  CLI::Option* option = nullptr;
  bool digest = true;  // part of the configuration digest
};

class Registry {
 public:
  void add(CLI::App* sub, const std::string& section, CLI::Option* opt, bool digest = true) {
    const std::string key = key_of(opt);
    per_sub_[sub][key] = {section, opt, digest};
    known_.insert(section + "." + key);
  }

  // Applies config values to options not given on the command line.
  void apply(CLI::App* sub, const std::vector<ConfigEntry>& entries) const {
    const auto& mine = per_sub_.at(sub);
    for (const auto& e : entries) {
      if (!known_.count(e.section + "." + e.key)) {
        throw ConfigError("config line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in section [" + e.section + "]");
      }
      const auto it = mine.find(e.key);
      if (it == mine.end() || it->second.section != e.section) continue;  // belongs to another subcommand
      CLI::Option* opt = it->second.option;
      if (opt->count() > 0) continue;
      try {
        opt->add_result(e.value);
        opt->run_callback();
      } catch (const CLI::Error& err) {
        throw ConfigError("config line " + std::to_string(e.line) + ": " + e.key + ": " + err.what());
      }
    }
  }

  // Canonical text of the effective configuration (sorted keys).
  std::string canonical(CLI::App* sub) const {
    std::map<std::string, std::string> kv;
    for (const auto& [key, reg] : per_sub_.at(sub)) {
      if (!reg.digest) continue;
      std::string joined;
      for (const auto& r : reg.option->results()) joined += (joined.empty() ? "" : ",") + r;
      if (reg.option->count() == 0) joined = "<default:" + reg.option->get_default_str() + ">";
      kv[reg.section + "." + key] = joined;
    }
    std::string out = sub->get_name() + "\n";
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
  }

 private:
  static std::string key_of(const CLI::Option* opt) {
    std::string k = opt->get_lnames().front();
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
  }

  std::map<CLI::App*, std::map<std::string, Registered>> per_sub_;
  std::set<std::string> known_;
};

// ---- shared helpers --------------------------------------------------------

inline ChainConfig chain_config(const Settings& s) {
  ChainConfig c;
  c.n_samples = s.n_samples;
  c.burn_in = s.burn_in;
  c.thin = s.thin;
  c.seed = s.seed;
  c.validate();
  return c;
}

inline std::vector<std::string> model_covariates(const Settings& s, const std::string& preset) {
  if (preset == "custom") return s.covariate_list;
  if (!s.covariate_list.empty() && preset == s.preset) {
    throw ConfigError("explicit covariates require preset = custom");
  }
  return covariate_preset(preset);
}

inline DesignOptions design_options(const Settings& s) {
  DesignOptions d;
  if (s.encoding == "alr") d.encoding = CovariateEncoding::alr;
  else if (s.encoding == "raw") d.encoding = CovariateEncoding::raw;
  else throw ConfigError("encoding must be alr or raw");
  d.epsilon = s.epsilon;
  return d;
}

struct LoadedData {
  ObservationData data;
  LatticeGrid grid;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
};

inline LoadedData load_inputs(const Settings& s) {
  if (s.observations.empty()) throw ConfigError("an observations file is required");
  LoadedData out;
  ReadOptions opt;
  opt.epsilon = s.epsilon;
  if (s.resolution > 0.0) opt.resolution = s.resolution;
  if (!s.covariates.empty()) {
    const GridTable table = read_grid_table(s.covariates, opt.resolution);
    const GridGeometry geom = table_geometry(table);
    opt.lattice = geom;
    out.data = read_observations(s.observations, opt);
    out.grid = grid_from_table(table, out.data.categories, geom);
    out.inputs.emplace_back(s.covariates, sha256_file(s.covariates));
  } else {
    out.data = read_observations(s.observations, opt);
    out.grid.geometry = out.data.geometry;
    out.grid.categories = out.data.categories;
    out.grid.domain.assign(static_cast<std::size_t>(out.grid.size()), true);
  }
  for (Index c : out.data.obs.cell_indices) {
    if (!out.grid.in_domain(c)) throw DataError("observation at node " + std::to_string(c) + " lies outside the covariate domain");
  }
  out.inputs.emplace(out.inputs.begin(), s.observations, sha256_file(s.observations));
  return out;
}

inline std::string fmt(double x) { return detail::format_double(x); }

inline ModelPriors default_priors() { return ModelPriors{}; }

inline RunManifest base_manifest(const std::string& command, const Registry& reg, CLI::App* sub, const Settings& s) {
  RunManifest m;
  m.command = command;
  m.config_digest = sha256_bytes(reg.canonical(sub));
  m.seeds.emplace_back("seed", s.seed);
  return m;
}

inline void finish(const std::string& out_dir, RunOutputs outputs, const Settings& s,
                   std::chrono::steady_clock::time_point start) {
  if (s.record_timing) {
    outputs.manifest.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  write_outputs(out_dir, std::move(outputs));
}

// ---- subcommands -----------------------------------------------------------

inline void cmd_simulate(const Settings& s, const Registry& reg, CLI::App* sub, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  if (s.rows < 2 || s.cols < 2) throw ConfigError("simulate: the grid needs at least 2 x 2 cells");
  if (!(s.observed_fraction > 0.0 && s.observed_fraction <= 1.0)) throw ConfigError("observed_fraction must lie in (0, 1]");
  OutputLock lock(s.out);
  const Index k_parts = 3;
  const Index m = k_parts - 1;
  const auto categories = default_categories(k_parts);

  GridGeometry geom;
  geom.lon_min = s.lon_min;
  geom.lat_min = s.lat_min;
  geom.resolution = s.resolution > 0.0 ? s.resolution : 1.0;
  geom.rows = s.rows;
  geom.cols = s.cols;
  const Index n = geom.size();

  Rng cov_rng(derive_seed(s.seed, 1));
  LatticeGrid grid;
  grid.geometry = geom;
  grid.categories = categories;
  grid.domain.assign(static_cast<std::size_t>(n), true);
  const GmrfSpec smooth{0.3, Eigen::MatrixXd::Identity(1, 1), geom.graph()};
  const Eigen::MatrixXd elev = sample_field(smooth, cov_rng).values();
  grid.scalars[kElevation] = (elev.col(0).array() / elev.col(0).array().abs().maxCoeff() * 600.0 + 800.0).matrix();
  std::vector<std::string> covs{kElevation};
  for (std::size_t q = 0; q < s.noise_covariates; ++q) {
    const std::string name = "noise" + std::to_string(q + 1);
    grid.scalars[name] = sample_field(smooth, cov_rng).values().col(0);
  }

  const DesignMatrix design = build_design(grid, covs, {}, design_options(s));
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(design.predictors(), m);
  beta(0, 0) = 0.3;
  beta(0, 1) = -0.2;
  beta(1, 0) = s.signal;
  beta(1, 1) = -0.75 * s.signal;

  Rng rng(derive_seed(s.seed, 2));
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  {
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    const auto n_obs = static_cast<std::size_t>(std::max<double>(1.0, std::round(s.observed_fraction * static_cast<double>(n))));
    for (std::size_t i = 0; i < n_obs; ++i) mask[static_cast<std::size_t>(order[i])] = true;
  }
  const GmrfSpec spec{s.sim_kappa, s.sim_sigma * s.sim_sigma * Eigen::MatrixXd::Identity(m, m), geom.graph()};
  const SimulatedDataset sim = simulate_dataset(spec, design, beta, s.sim_alpha, mask, rng, s.epsilon);

  // Auxiliary land-cover maps: noisy versions of the truth.
  Rng aux_rng(derive_seed(s.seed, 3));
  for (const char* name : {"K-L_ESM", "K-L_RCA3", "H-L_ESM", "H-L_RCA3"}) {
    Eigen::MatrixXd comp(n, k_parts);
    for (Index i = 0; i < n; ++i) {
      const Composition y = replace_zeros(dirichlet_sample(sim.z[static_cast<std::size_t>(i)], 30.0, aux_rng).values(), s.epsilon);
      comp.row(i) = y.values().transpose();
    }
    grid.compositions[name] = comp;
  }

  const fs::path dir(s.out);
  GridTable cov_table;
  cov_table.resolution = geom.resolution;
  for (const auto& [name, v] : grid.scalars) cov_table.columns.push_back(name);
  for (const auto& [name, c] : grid.compositions) {
    for (const auto& cat : categories) cov_table.columns.push_back(name + ":" + cat);
  }
  GridTable truth_table;
  truth_table.resolution = geom.resolution;
  truth_table.columns = categories;
  for (Index i = 0; i < n; ++i) {
    GridRow r;
    r.cell_id = std::to_string(i);
    r.lon = geom.lon(i);
    r.lat = geom.lat(i);
    for (const auto& [name, v] : grid.scalars) r.values.push_back(v[i]);
    for (const auto& [name, c] : grid.compositions) {
      for (Index k = 0; k < k_parts; ++k) r.values.push_back(c(i, k));
    }
    cov_table.rows.push_back(r);
    GridRow t = r;
    const auto& z = sim.z[static_cast<std::size_t>(i)];
    t.values.assign(z.values().data(), z.values().data() + k_parts);
    truth_table.rows.push_back(std::move(t));
  }
  GridTable obs_table;
  obs_table.resolution = geom.resolution;
  obs_table.columns = categories;
  for (std::size_t j = 0; j < sim.obs.size(); ++j) {
    const Index i = sim.obs.cell_indices[j];
    GridRow r;
    r.cell_id = std::to_string(i);
    r.lon = geom.lon(i);
    r.lat = geom.lat(i);
    r.values.assign(sim.obs.y[j].values().data(), sim.obs.y[j].values().data() + k_parts);
    obs_table.rows.push_back(std::move(r));
  }
  std::sort(obs_table.rows.begin(), obs_table.rows.end(),
            [](const GridRow& a, const GridRow& b) { return std::stoll(a.cell_id) < std::stoll(b.cell_id); });
  write_grid_table((dir / "covariates.csv").string(), cov_table);
  write_grid_table((dir / "truth.csv").string(), truth_table);
  write_grid_table((dir / "observations.csv").string(), obs_table);

  RunOutputs outputs;
  outputs.metrics = {{"rows", std::to_string(s.rows)},
                     {"cols", std::to_string(s.cols)},
                     {"observed", std::to_string(sim.obs.size())},
                     {"alpha", fmt(s.sim_alpha)},
                     {"kappa", fmt(s.sim_kappa)},
                     {"sigma", fmt(s.sim_sigma)}};
  for (Index l = 0; l < beta.rows(); ++l) {
    for (Index k = 0; k < m; ++k) outputs.metrics.emplace_back("beta[" + design.column_names[static_cast<std::size_t>(l)] + "," + std::to_string(k + 1) + "]", fmt(beta(l, k)));
  }
  outputs.manifest = base_manifest("simulate", reg, sub, s);
  finish(s.out, std::move(outputs), s, start);
  log << "simulate: wrote " << sim.obs.size() << " observations on a " << s.rows << "x" << s.cols << " grid to " << s.out << "\n";
}

inline PosteriorSummary fit_model(const HierarchicalModel& model, const Settings& s, const std::string& checkpoint) {
  ChainConfig c = chain_config(s);
  c.checkpoint_path = checkpoint;
  c.checkpoint_every = s.checkpoint_every > 0 ? s.checkpoint_every : c.n_samples;
  return run_chains(model, c, s.chains, s.jobs, s.resume);
}

inline void write_region_table(const std::string& path, const std::vector<PredictiveRegion>& regions) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "cell,level,coverage_fraction,covered_cells,triangle_cells\n";
  for (const auto& r : regions) {
    os << r.cell << ',' << fmt(r.level) << ',' << fmt(r.coverage_fraction) << ',' << r.covered_cells << ','
       << r.triangle_cells << '\n';
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline void cmd_fit(const Settings& s, const Registry& reg, CLI::App* sub, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  OutputLock lock(s.out);
  const LoadedData in = load_inputs(s);
  const auto covs = model_covariates(s, s.preset);
  const DesignMatrix design = build_design(in.grid, covs, in.data.obs.cell_indices, design_options(s));
  const HierarchicalModel model(in.grid.geometry.graph(), design, in.data.obs, in.grid.parts(), default_priors());

  const fs::path dir(s.out);
  const PosteriorSummary summary = fit_model(model, s, (dir / "checkpoint.bin").string());
  const DicResult d = dic(summary, model);

  const CompositionMap recon = reconstruction_map(summary, in.grid);
  render_ternary_map(recon, (dir / "reconstruction.ppm").string(), s.block);

  for (const auto& stage : decompose_predictor(summary, model)) {
    CompositionMap m = recon;
    for (Index i = 0; i < in.grid.size(); ++i) {
      if (in.grid.in_domain(i)) m.cells[static_cast<std::size_t>(i)] = stage.cells[static_cast<std::size_t>(i)];
    }
    write_composition_map((dir / ("decomposition_" + stage.name + ".csv")).string(), m);
    render_ternary_map(m, (dir / ("decomposition_" + stage.name + ".ppm")).string(), s.block);
  }

  RegionOptions ropt;
  ropt.seed = derive_seed(s.seed, 77);
  if (s.region_method == "kde") ropt.method = RegionMethod::kde;
  else if (s.region_method != "gaussian") throw ConfigError("region_method must be gaussian or kde");
  std::vector<PredictiveRegion> regions;
  for (Index cell : s.region_cells) {
    if (cell < 0 || cell >= in.grid.size()) throw ConfigError("region cell " + std::to_string(cell) + " is outside the lattice");
    for (double level : s.region_levels) regions.push_back(predictive_region(summary, cell, level, ropt));
  }
  write_region_table((dir / "regions.csv").string(), regions);

  RunOutputs outputs;
  outputs.reconstruction = recon;
  outputs.traces = &summary.traces;
  double min_ess = std::numeric_limits<double>::infinity();
  for (const auto& [k, v] : summary.ess) min_ess = std::min(min_ess, v);
  outputs.metrics = {{"preset", s.preset},
                     {"observations", std::to_string(in.data.obs.size())},
                     {"nodes", std::to_string(in.grid.size())},
                     {"predictors", std::to_string(design.predictors())},
                     {"chains", std::to_string(s.chains)},
                     {"retained_per_chain", std::to_string(s.n_samples - s.burn_in)},
                     {"dic", fmt(d.dic)},
                     {"mean_deviance", fmt(d.mean_deviance)},
                     {"p_d", fmt(d.p_d)},
                     {"acceptance_mala", fmt(summary.acceptance.mala)},
                     {"acceptance_alpha", fmt(summary.acceptance.alpha)},
                     {"acceptance_kappa", fmt(summary.acceptance.kappa)},
                     {"alpha_mean", fmt(summary.traces.mean("alpha"))},
                     {"kappa_mean", fmt(summary.traces.mean("kappa"))},
                     {"min_ess", fmt(min_ess)},
                     {"rows_renormalized", std::to_string(in.data.renormalized)},
                     {"rows_zero_replaced", std::to_string(in.data.zero_replaced)}};
  for (std::size_t j = 0; j < design.column_names.size(); ++j) outputs.metrics.emplace_back("design_column_" + std::to_string(j), design.column_names[j]);
  outputs.manifest = base_manifest("fit", reg, sub, s);
  for (std::size_t c = 0; c < s.chains; ++c) outputs.manifest.seeds.emplace_back("chain_" + std::to_string(c), derive_seed(s.seed, c));
  outputs.manifest.inputs = in.inputs;
  finish(s.out, std::move(outputs), s, start);
  log << "fit: " << s.preset << " DIC " << fmt(d.dic) << ", outputs in " << s.out << "\n";
}

inline void cmd_cv(const Settings& s, const Registry& reg, CLI::App* sub, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  OutputLock lock(s.out);
  const LoadedData in = load_inputs(s);
  const CvPlan plan = make_folds(in.data.obs.size(), s.folds, derive_seed(s.seed, 500));
  const std::vector<std::string> models = s.models.empty() ? std::vector<std::string>{s.preset} : s.models;
  ChainConfig base = chain_config(s);
  CvOptions opt;
  opt.chain_factor = s.cv_factor;
  opt.jobs = s.jobs;

  const fs::path dir(s.out);
  std::ofstream os((dir / "cv.csv").string(), std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write cv.csv");
  os << "model,pooled_acd,fold_mean_acd";
  for (std::size_t f = 0; f < plan.n_folds; ++f) os << ",fold_" << f + 1;
  os << '\n';
  Metrics metrics{{"folds", std::to_string(plan.n_folds)}, {"observations", std::to_string(in.data.obs.size())}};
  auto emit = [&](const std::string& name, const CvResult& r) {
    os << name << ',' << fmt(r.pooled_acd) << ',' << fmt(r.fold_mean_acd);
    for (double a : r.fold_acd) os << ',' << fmt(a);
    os << '\n';
    metrics.emplace_back("cv_acd[" + name + "]", fmt(r.pooled_acd));
  };
  for (const auto& preset : models) {
    ModelSpec spec;
    spec.grid = in.grid;
    spec.covariates = model_covariates(s, preset);
    spec.design_options = design_options(s);
    const CvResult r = cross_validate(spec, in.data.obs, base, plan, opt);
    emit(preset, r);
    log << "cv: " << preset << " pooled ACD " << fmt(r.pooled_acd) << "\n";
  }
  emit("pooled_mean", cross_validate_pooled_mean(in.data.obs, plan));
  os.close();

  {
    std::ofstream fo((dir / "folds.csv").string(), std::ios::binary | std::ios::trunc);
    fo << "cell_id,fold\n";
    for (std::size_t i = 0; i < plan.assignments.size(); ++i) fo << in.data.cell_ids[i] << ',' << plan.assignments[i] + 1 << '\n';
    if (!fo) throw IoError("cannot write folds.csv");
  }

  RunOutputs outputs;
  outputs.metrics = std::move(metrics);
  outputs.manifest = base_manifest("cv", reg, sub, s);
  outputs.manifest.seeds.emplace_back("folds", derive_seed(s.seed, 500));
  outputs.manifest.inputs = in.inputs;
  finish(s.out, std::move(outputs), s, start);
}

inline std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) c = '_';
  }
  return s;
}

inline void cmd_compare(const Settings& s, const Registry& reg, CLI::App* sub, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  if (s.maps.size() < 2) throw ConfigError("compare needs at least two maps (name=path)");
  OutputLock lock(s.out);
  std::vector<NamedMap> maps;
  RunManifest manifest = base_manifest("compare", reg, sub, s);
  for (const auto& spec : s.maps) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("map '" + spec + "' must be given as name=path");
    const std::string path = spec.substr(eq + 1);
    maps.push_back({spec.substr(0, eq), read_composition_map(path)});
    manifest.inputs.emplace_back(path, sha256_file(path));
  }
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (!(maps[i].map.geometry == maps[0].map.geometry)) throw DataError("compare: grid mismatch between '" + maps[0].name + "' and '" + maps[i].name + "'");
  }
  std::optional<CompositionMap> reference;
  if (!s.reference.empty()) {
    reference = read_composition_map(s.reference, maps[0].map.geometry);
    manifest.inputs.emplace_back(s.reference, sha256_file(s.reference));
  }
  const ComparisonReport rep = compare_maps(maps, reference ? &*reference : nullptr);

  const fs::path dir(s.out);
  {
    std::ofstream os((dir / "comparison.csv").string(), std::ios::binary | std::ios::trunc);
    os << "model";
    for (const auto& n : rep.names) os << ',' << n;
    if (rep.to_reference) os << ",reference";
    os << '\n';
    for (std::size_t i = 0; i < rep.names.size(); ++i) {
      os << rep.names[i];
      for (std::size_t j = 0; j < rep.names.size(); ++j) os << ',' << fmt(rep.pairwise(static_cast<Index>(i), static_cast<Index>(j)));
      if (rep.to_reference) os << ',' << fmt((*rep.to_reference)[static_cast<Index>(i)]);
      os << '\n';
    }
    if (!os) throw IoError("cannot write comparison.csv");
  }
  {
    std::ofstream os((dir / "comparison.txt").string(), std::ios::binary | std::ios::trunc);
    os << "[comparison]\nmaps = " << rep.names.size() << "\ncommon_cells = " << rep.cells
       << "\nreference = " << (rep.to_reference ? "yes" : "no") << "\n\n[pairwise_acd]\n";
    for (std::size_t i = 0; i < rep.names.size(); ++i) {
      for (std::size_t j = i + 1; j < rep.names.size(); ++j) {
        os << rep.names[i] << " / " << rep.names[j] << " = " << fmt(rep.pairwise(static_cast<Index>(i), static_cast<Index>(j))) << "\n";
      }
    }
    if (rep.to_reference) {
      os << "\n[reference_acd]\n";
      for (std::size_t i = 0; i < rep.names.size(); ++i) os << rep.names[i] << " = " << fmt((*rep.to_reference)[static_cast<Index>(i)]) << "\n";
    }
    if (!os) throw IoError("cannot write comparison.txt");
  }
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (std::size_t j = i + 1; j < maps.size(); ++j) {
      const auto dm = distance_map(maps[i].map, maps[j].map);
      render_grayscale_map(dm, maps[0].map.geometry,
                           (dir / ("distance_" + safe_name(maps[i].name) + "__" + safe_name(maps[j].name) + ".pgm")).string(), s.block);
    }
    if (reference) {
      const auto dm = distance_map(maps[i].map, *reference);
      render_grayscale_map(dm, maps[0].map.geometry, (dir / ("distance_" + safe_name(maps[i].name) + "__reference.pgm")).string(), s.block);
    }
  }
  RunOutputs outputs;
  outputs.metrics = {{"maps", std::to_string(rep.names.size())}, {"common_cells", std::to_string(rep.cells)}};
  outputs.manifest = std::move(manifest);
  finish(s.out, std::move(outputs), s, start);
  log << "compare: " << rep.names.size() << " maps over " << rep.cells << " cells\n";
}

inline void cmd_render(const Settings& s, std::ostream& log) {
  if (s.map_path.empty() || s.image_path.empty()) throw ConfigError("render needs --map and --image");
  const CompositionMap map = read_composition_map(s.map_path);
  render_ternary_map(map, s.image_path, s.block);
  log << "render: wrote " << s.image_path << "\n";
}

// ---- entry point -------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Settings s;
  Registry reg;
  CLI::App app{"Bayesian reconstruction of gridded land-cover compositions from sparse observations", "landcover"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic benchmark dataset");
  auto* fit = app.add_subcommand("fit", "Fit the model and write the reconstruction");
  auto* cv = app.add_subcommand("cv", "K-fold cross-validation of one or more model presets");
  auto* compare = app.add_subcommand("compare", "Pairwise compositional distances between fitted maps");
  auto* render = app.add_subcommand("render", "Render a composition table as a PPM image");

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", s.config_path, "INI config file; command-line flags override its values")->check(CLI::ExistingFile);
    reg.add(sub, "run", sub->add_option("--seed", s.seed, "Base random seed")->capture_default_str());
    reg.add(sub, "run", sub->add_option("--jobs", s.jobs, "Worker threads for chains or folds")->check(CLI::PositiveNumber)->capture_default_str(), false);
    reg.add(sub, "output", sub->add_option("--out", s.out, "Output directory")->capture_default_str(), false);
    reg.add(sub, "output", sub->add_flag("--record-timing", s.record_timing, "Record wall time in the manifest"), false);
    reg.add(sub, "data", sub->add_option("--epsilon", s.epsilon, "Zero-replacement threshold")->capture_default_str());
    reg.add(sub, "data", sub->add_option("--resolution", s.resolution, "Lattice resolution in degrees (0: infer)")->capture_default_str());
  };
  const auto data = [&](CLI::App* sub) {
    reg.add(sub, "data", sub->add_option("--observations", s.observations, "Observation table (cell_id, lon, lat, parts)"));
    reg.add(sub, "data", sub->add_option("--covariates", s.covariates, "Covariate grid table"));
    reg.add(sub, "model", sub->add_option("--preset", s.preset, "Model preset: Constant, Elevation, K-L_ESM, K-L_RCA3, H-L_ESM, H-L_RCA3 or custom")->capture_default_str());
    reg.add(sub, "model", sub->add_option("--covariate", s.covariate_list, "Covariate names for preset = custom")->delimiter(','));
    reg.add(sub, "model", sub->add_option("--encoding", s.encoding, "Compositional covariate encoding: alr or raw")->capture_default_str());
    reg.add(sub, "chain", sub->add_option("--n-samples", s.n_samples, "Total MCMC iterations per chain, burn-in included")->capture_default_str());
    reg.add(sub, "chain", sub->add_option("--burn-in", s.burn_in, "Burn-in iterations")->capture_default_str());
    reg.add(sub, "chain", sub->add_option("--thin", s.thin, "Thinning of stored field samples")->capture_default_str());
    reg.add(sub, "chain", sub->add_option("--chains", s.chains, "Independent chains")->check(CLI::PositiveNumber)->capture_default_str());
  };

  common(simulate);
  reg.add(simulate, "grid", simulate->add_option("--rows", s.rows, "Lattice rows")->capture_default_str());
  reg.add(simulate, "grid", simulate->add_option("--cols", s.cols, "Lattice columns")->capture_default_str());
  reg.add(simulate, "grid", simulate->add_option("--lon-min", s.lon_min, "Longitude of the westernmost cell centre")->capture_default_str());
  reg.add(simulate, "grid", simulate->add_option("--lat-min", s.lat_min, "Latitude of the southernmost cell centre")->capture_default_str());
  reg.add(simulate, "simulate", simulate->add_option("--observed-fraction", s.observed_fraction, "Fraction of cells observed")->capture_default_str());
  reg.add(simulate, "simulate", simulate->add_option("--alpha", s.sim_alpha, "Dirichlet concentration")->capture_default_str());
  reg.add(simulate, "simulate", simulate->add_option("--kappa", s.sim_kappa, "Field range parameter")->capture_default_str());
  reg.add(simulate, "simulate", simulate->add_option("--sigma", s.sim_sigma, "Field cross-covariance scale")->capture_default_str());
  reg.add(simulate, "simulate", simulate->add_option("--signal", s.signal, "Elevation coefficient")->capture_default_str());
  reg.add(simulate, "simulate", simulate->add_option("--noise-covariates", s.noise_covariates, "Extra unrelated covariates")->capture_default_str());

  for (auto* sub : {fit, cv}) {
    common(sub);
    data(sub);
  }
  reg.add(fit, "chain", fit->add_option("--checkpoint-every", s.checkpoint_every, "Checkpoint interval (0: final state only)")->capture_default_str());
  reg.add(fit, "chain", fit->add_flag("--resume", s.resume, "Continue chains from checkpoints in the output directory"), false);
  reg.add(fit, "output", fit->add_option("--region-cells", s.region_cells, "Lattice nodes that get predictive regions")->delimiter(','));
  reg.add(fit, "output", fit->add_option("--region-levels", s.region_levels, "Predictive region levels")->delimiter(',')->capture_default_str());
  reg.add(fit, "output", fit->add_option("--region-method", s.region_method, "gaussian or kde")->capture_default_str());
  reg.add(fit, "output", fit->add_option("--block", s.block, "Pixels per cell in rendered maps")->check(CLI::PositiveNumber)->capture_default_str());

  reg.add(cv, "cv", cv->add_option("--folds", s.folds, "Number of folds")->check(CLI::PositiveNumber)->capture_default_str());
  reg.add(cv, "cv", cv->add_option("--cv-factor", s.cv_factor, "Chain length factor for refits")->capture_default_str());
  reg.add(cv, "cv", cv->add_option("--models", s.models, "Presets to cross-validate (default: --preset)")->delimiter(','));

  common(compare);
  reg.add(compare, "compare", compare->add_option("--maps", s.maps, "name=path reconstruction tables")->delimiter(','));
  reg.add(compare, "compare", compare->add_option("--reference", s.reference, "Reference map table"));
  reg.add(compare, "output", compare->add_option("--block", s.block, "Pixels per cell in distance maps")->check(CLI::PositiveNumber)->capture_default_str());

  reg.add(render, "render", render->add_option("--map", s.map_path, "Composition table")->required());
  reg.add(render, "render", render->add_option("--image", s.image_path, "Output PPM path")->required());
  reg.add(render, "render", render->add_option("--block", s.block, "Pixels per cell")->check(CLI::PositiveNumber)->capture_default_str());

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!s.config_path.empty()) reg.apply(sub, read_config_file(s.config_path));
    if (sub == simulate) cmd_simulate(s, reg, sub, err);
    else if (sub == fit) cmd_fit(s, reg, sub, err);
    else if (sub == cv) cmd_cv(s, reg, sub, err);
    else if (sub == compare) cmd_compare(s, reg, sub, err);
    else cmd_render(s, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace landcover::cli
