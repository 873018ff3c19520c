#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "landcover/compositional.hpp"
#include "landcover/error.hpp"
#include "landcover/grid.hpp"
#include "landcover/inference.hpp"
#include "landcover/model.hpp"
#include "landcover/random.hpp"

namespace landcover {

struct CvPlan {
  std::size_t n_folds = 6;
  std::vector<std::size_t> assignments;  // fold of each observation
  std::uint64_t seed = 0;

  std::vector<std::size_t> fold(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == f) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> complement(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != f) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(n_folds, 0);
    for (auto a : assignments) ++s[a];
    return s;
  }
};

// Uniform random partition into balanced folds: a seeded permutation dealt
// round-robin.
inline CvPlan make_folds(std::size_t n_obs, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds == 0) throw InvalidArgument("make_folds: n_folds must be positive");
  if (n_folds > n_obs) throw InvalidArgument("make_folds: more folds than observations");
  std::vector<std::size_t> perm(n_obs);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n_obs; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  CvPlan plan;
  plan.n_folds = n_folds;
  plan.seed = seed;
  plan.assignments.assign(n_obs, 0);
  for (std::size_t pos = 0; pos < n_obs; ++pos) plan.assignments[perm[pos]] = pos % n_folds;
  return plan;
}

// What to refit inside cross-validation. With fixed_design set, B is used
// as-is; otherwise it is rebuilt per fold from `grid`, standardized over the
// training cells.
struct ModelSpec {
  LatticeGrid grid;
  std::vector<std::string> covariates;
  DesignOptions design_options;
  ModelPriors priors;
  std::optional<DesignMatrix> fixed_design;

  DesignMatrix design_for(const ObservationSet& training) const {
    if (fixed_design) return *fixed_design;
    return build_design(grid, covariates, training.cell_indices, design_options);
  }

  HierarchicalModel model_for(const ObservationSet& training) const {
    return HierarchicalModel(grid.geometry.graph(), design_for(training), training, grid.parts(), priors);
  }
};

struct CvOptions {
  double chain_factor = 0.25;  // refits run this fraction of the full chain
  std::size_t jobs = 1;
};

struct CvResult {
  double pooled_acd = 0.0;     // one ACD over all held-out pairs
  double fold_mean_acd = 0.0;  // mean of per-fold ACDs
  std::vector<double> fold_acd;
  std::vector<Composition> predictions;  // aligned with the observations
  std::size_t pairs = 0;
};

inline ChainConfig shortened(const ChainConfig& config, double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("chain factor must lie in (0, 1]");
  ChainConfig c = config;
  c.n_samples = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::llround(static_cast<double>(config.n_samples) * factor)));
  c.burn_in = std::min<std::int64_t>(c.n_samples - 1, static_cast<std::int64_t>(std::llround(static_cast<double>(config.burn_in) * factor)));
  c.thin = std::max<std::int64_t>(1, std::min<std::int64_t>(config.thin, c.n_samples - c.burn_in));
  c.checkpoint_every = 0;
  c.halt_after = 0;
  c.checkpoint_path.clear();
  return c;
}

inline double acd_from_pairs(const std::vector<Composition>& pred, const std::vector<Composition>& truth) {
  return average_compositional_distance(pred, truth);
}

// Predictions for held-out cells produced by `predict(fold, training, held_out)`.
template <typename Predictor>
CvResult cross_validate_with(const ObservationSet& obs, const CvPlan& plan, Predictor&& predict, std::size_t jobs = 1) {
  if (plan.assignments.size() != obs.size()) throw InvalidArgument("cross_validate: plan does not match the observations");
  std::vector<std::vector<Composition>> fold_pred(plan.n_folds);
  std::vector<std::exception_ptr> errors(plan.n_folds);
  auto work = [&](std::size_t f) {
    try {
      const auto train_idx = plan.complement(f);
      const auto test_idx = plan.fold(f);
      if (train_idx.empty()) throw InvalidArgument("cross_validate: fold " + std::to_string(f) + " has an empty complement");
      fold_pred[f] = predict(f, obs.subset(train_idx), obs.subset(test_idx));
      if (fold_pred[f].size() != test_idx.size()) throw InvalidArgument("cross_validate: predictor returned the wrong count");
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < plan.n_folds; start += jobs) {
    if (jobs == 1) {
      work(start);
      continue;
    }
    std::vector<std::thread> pool;
    for (std::size_t f = start; f < std::min(plan.n_folds, start + jobs); ++f) pool.emplace_back(work, f);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CvResult res;
  res.predictions.resize(obs.size());
  std::vector<Composition> pooled_pred, pooled_truth;
  for (std::size_t f = 0; f < plan.n_folds; ++f) {
    const auto test_idx = plan.fold(f);
    std::vector<Composition> truth;
    for (std::size_t t = 0; t < test_idx.size(); ++t) {
      res.predictions[test_idx[t]] = fold_pred[f][t];
      truth.push_back(obs.y[test_idx[t]]);
      pooled_pred.push_back(fold_pred[f][t]);
      pooled_truth.push_back(obs.y[test_idx[t]]);
    }
    res.fold_acd.push_back(test_idx.empty() ? 0.0 : acd_from_pairs(fold_pred[f], truth));
  }
  res.pairs = pooled_pred.size();
  res.pooled_acd = acd_from_pairs(pooled_pred, pooled_truth);
  res.fold_mean_acd = std::accumulate(res.fold_acd.begin(), res.fold_acd.end(), 0.0) / static_cast<double>(plan.n_folds);
  return res;
}

// K-fold CV of the hierarchical model: refit on each complement, predict the
// held-out cells by their posterior-mean composition.
inline CvResult cross_validate(const ModelSpec& spec, const ObservationSet& obs, const ChainConfig& config,
                               const CvPlan& plan, const CvOptions& options = {}) {
  const ChainConfig base = shortened(config, options.chain_factor);
  auto predict = [&](std::size_t f, const ObservationSet& train, const ObservationSet& test) {
    const HierarchicalModel model = spec.model_for(train);
    ChainConfig c = base;
    c.seed = derive_seed(config.seed, 1000 + f);
    const PosteriorSummary summary = run_chain(model, c);
    std::vector<Composition> out;
    for (Index cell : test.cell_indices) out.push_back(summary.z_mean[static_cast<std::size_t>(cell)]);
    return out;
  };
  return cross_validate_with(obs, plan, predict, options.jobs);
}

// Baseline: every held-out cell predicted by the closed arithmetic mean of the
// training compositions.
inline CvResult cross_validate_pooled_mean(const ObservationSet& obs, const CvPlan& plan) {
  auto predict = [](std::size_t, const ObservationSet& train, const ObservationSet& test) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(train.y.front().size());
    for (const auto& y : train.y) acc += y.values();
    const Composition mean = Composition::closure(acc);
    return std::vector<Composition>(test.size(), mean);
  };
  return cross_validate_with(obs, plan, predict);
}

struct DicResult {
  double dic = 0.0;
  double mean_deviance = 0.0;   // D-bar
  double plugin_deviance = 0.0; // D at posterior-mean eta and alpha
  double p_d = 0.0;
};

// DIC = D-bar + p_D with p_D = D-bar - D(mean eta, mean alpha).
inline DicResult dic(const PosteriorSummary& summary, const HierarchicalModel& model) {
  if (summary.recorded == 0 || summary.traces.rows() == 0) throw InsufficientSamples("dic: no stored deviances");
  const auto dev = summary.traces.column("deviance");
  DicResult r;
  r.mean_deviance = sample_mean(dev);
  const Eigen::MatrixXd eta_mean = summary.eta_mean();
  const auto& obs = model.observations();
  Eigen::MatrixXd obs_eta(static_cast<Index>(obs.size()), model.fields());
  for (std::size_t i = 0; i < obs.size(); ++i) obs_eta.row(static_cast<Index>(i)) = eta_mean.row(obs.cell_indices[i]);
  const double alpha_mean = summary.traces.mean("alpha");
  r.plugin_deviance = -2.0 * model.log_likelihood_at(obs_eta, alpha_mean);
  r.p_d = r.mean_deviance - r.plugin_deviance;
  r.dic = r.mean_deviance + r.p_d;
  return r;
}

struct NamedMap {
  std::string name;
  CompositionMap map;
};

struct ComparisonReport {
  std::vector<std::string> names;
  Eigen::MatrixXd pairwise;                   // symmetric, zero diagonal
  std::optional<Eigen::VectorXd> to_reference;
  std::size_t cells = 0;                      // cells present in every map
};

inline std::vector<Index> common_cells(const std::vector<const CompositionMap*>& maps) {
  std::vector<Index> out;
  const Index n = maps.front()->size();
  for (Index i = 0; i < n; ++i) {
    bool all = true;
    for (const auto* m : maps) {
      const auto& c = m->cells[static_cast<std::size_t>(i)];
      if (!c || !c->strictly_positive()) {
        all = false;
        break;
      }
    }
    if (all) out.push_back(i);
  }
  return out;
}

inline double map_acd(const CompositionMap& a, const CompositionMap& b, const std::vector<Index>& cells) {
  std::vector<Composition> pa, pb;
  for (Index i : cells) {
    pa.push_back(*a.cells[static_cast<std::size_t>(i)]);
    pb.push_back(*b.cells[static_cast<std::size_t>(i)]);
  }
  return average_compositional_distance(pa, pb);
}

// Pairwise ACD between fitted maps (and each map's ACD to an optional
// reference) over the cells present in all of them.
inline ComparisonReport compare_maps(const std::vector<NamedMap>& maps, const CompositionMap* reference = nullptr) {
  if (maps.empty()) throw InvalidArgument("compare_maps: no maps");
  std::vector<const CompositionMap*> all;
  for (const auto& m : maps) all.push_back(&m.map);
  if (reference) all.push_back(reference);
  for (const auto* m : all) {
    if (!(m->geometry == all.front()->geometry) || m->size() != all.front()->size()) {
      throw DataError("compare_maps: grid mismatch");
    }
  }
  const auto cells = common_cells(all);
  if (cells.empty()) throw DataError("compare_maps: the maps share no cells");
  ComparisonReport rep;
  rep.cells = cells.size();
  const Index k = static_cast<Index>(maps.size());
  rep.pairwise = Eigen::MatrixXd::Zero(k, k);
  for (const auto& m : maps) rep.names.push_back(m.name);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      const double d = map_acd(maps[static_cast<std::size_t>(i)].map, maps[static_cast<std::size_t>(j)].map, cells);
      rep.pairwise(i, j) = d;
      rep.pairwise(j, i) = d;
    }
  }
  if (reference) {
    Eigen::VectorXd col(k);
    for (Index i = 0; i < k; ++i) col[i] = map_acd(maps[static_cast<std::size_t>(i)].map, *reference, cells);
    rep.to_reference = col;
  }
  return rep;
}

// Per-cell Aitchison distance between two maps; nullopt where either is missing.
inline std::vector<std::optional<double>> distance_map(const CompositionMap& a, const CompositionMap& b) {
  if (!(a.geometry == b.geometry) || a.size() != b.size()) throw DataError("distance_map: grid mismatch");
  std::vector<std::optional<double>> out(static_cast<std::size_t>(a.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.cells[i] && b.cells[i] && a.cells[i]->strictly_positive() && b.cells[i]->strictly_positive()) {
      out[i] = aitchison_distance(*a.cells[i], *b.cells[i]);
    }
  }
  return out;
}

}  // namespace landcover
