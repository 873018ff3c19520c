#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "landcover/binary.hpp"
#include "landcover/compositional.hpp"
#include "landcover/diagnostics.hpp"
#include "landcover/error.hpp"
#include "landcover/model.hpp"
#include "landcover/random.hpp"
#include "landcover/sampler.hpp"

namespace landcover {

// n_samples counts every iteration including burn-in; thinning applies to the
// stored linear-predictor samples, scalar traces keep every post-burn-in
// iteration.
struct ChainConfig {
  std::int64_t n_samples = 100000;
  std::int64_t burn_in = 10000;
  std::int64_t thin = 10;
  std::uint64_t seed = 1;
  AdaptationTargets targets;
  SamplerBlocks blocks;
  std::int64_t checkpoint_every = 0;
  std::string checkpoint_path;
  std::int64_t halt_after = 0;  // stop after this many iterations (0: run to the end)
  std::int64_t progress_every = 0;

  std::int64_t retained_iterations() const { return n_samples - burn_in; }

  void validate() const {
    if (n_samples <= 0) throw ConfigError("n_samples must be positive");
    if (burn_in < 0 || burn_in >= n_samples) throw ConfigError("burn_in must satisfy 0 <= burn_in < n_samples");
    if (thin <= 0) throw ConfigError("thin must be positive");
    if (checkpoint_every < 0 || halt_after < 0) throw ConfigError("checkpoint_every and halt_after must be >= 0");
    if ((checkpoint_every > 0 || halt_after > 0) && checkpoint_path.empty()) {
      throw ConfigError("checkpointing requires a checkpoint path");
    }
  }
};

// Row-per-iteration table of scalar parameter traces.
struct TraceTable {
  std::vector<std::string> names;
  std::vector<double> values;  // row-major

  std::size_t columns() const { return names.size(); }
  std::size_t rows() const { return names.empty() ? 0 : values.size() / names.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * names.size() + col]; }

  std::size_t index(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("trace has no column '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }

  std::vector<double> column(const std::string& name) const {
    const std::size_t c = index(name);
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
    return out;
  }

  double mean(const std::string& name) const {
    const auto col = column(name);
    return sample_mean(col);
  }
};

struct AcceptanceSummary {
  double mala = 0.0;
  double alpha = 0.0;
  double kappa = 0.0;
  double mala_step = 0.0;
  double alpha_step = 0.0;
  double kappa_step = 0.0;
};

struct PosteriorSummary {
  Index nodes = 0;
  Index fields = 0;
  Index predictors = 0;
  std::vector<std::string> predictor_names;

  TraceTable traces;
  std::vector<Eigen::MatrixXd> eta_samples;  // thinned, n x (K-1) each
  std::vector<double> sample_alpha;          // alpha aligned with eta_samples
  Eigen::MatrixXd eta_sum;                   // over every post-burn-in iteration
  Eigen::MatrixXd x_sum;
  std::uint64_t recorded = 0;

  AcceptanceSummary acceptance;
  std::map<std::string, double> ess;
  ModelState final_state;
  std::vector<Composition> z_mean;
  std::uint64_t chains = 1;

  Eigen::MatrixXd eta_mean() const { return eta_sum / static_cast<double>(recorded); }
  Eigen::MatrixXd x_mean() const { return x_sum / static_cast<double>(recorded); }

  Eigen::MatrixXd beta_mean() const {
    Eigen::MatrixXd b(predictors, fields);
    for (Index l = 0; l < predictors; ++l) {
      for (Index k = 0; k < fields; ++k) b(l, k) = traces.mean(beta_name(l, k));
    }
    return b;
  }

  std::string beta_name(Index l, Index k) const {
    return "beta[" + predictor_names[static_cast<std::size_t>(l)] + "," + std::to_string(k + 1) + "]";
  }
};

inline std::vector<std::string> trace_names(const HierarchicalModel& model) {
  std::vector<std::string> names{"log_likelihood", "deviance", "alpha", "kappa"};
  const Index m = model.fields();
  for (Index a = 0; a < m; ++a) {
    for (Index b = a; b < m; ++b) names.push_back("sigma[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]");
  }
  const auto& cols = model.design().column_names;
  for (Index l = 0; l < model.predictors(); ++l) {
    for (Index k = 0; k < m; ++k) names.push_back("beta[" + cols[static_cast<std::size_t>(l)] + "," + std::to_string(k + 1) + "]");
  }
  names.push_back("tau");
  for (Index l = 1; l < model.predictors(); ++l) names.push_back("lambda[" + cols[static_cast<std::size_t>(l)] + "]");
  return names;
}

struct ProgressInfo {
  std::int64_t iteration = 0;
  double log_posterior = 0.0;
  double mala_acceptance = 0.0;
  double alpha_acceptance = 0.0;
  double kappa_acceptance = 0.0;
};

using ProgressCallback = std::function<void(const ProgressInfo&)>;

// Everything needed to continue a chain exactly where it stopped.
struct ChainCheckpoint {
  static constexpr std::uint64_t kVersion = 1;
  std::uint64_t iteration = 0;
  std::int64_t n_samples = 0, burn_in = 0, thin = 0;
  std::uint64_t seed = 0;
  std::string rng_state;
  ModelState state;
  SamplerTuning tuning;
  PosteriorSummary partial;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'L', 'C', 'C', 'H', 'A', 'I', 'N', '\0'};

inline void write_stats(BinaryWriter& w, const BlockStats& s) {
  w.u64(s.proposed);
  w.u64(s.accepted);
}
inline BlockStats read_stats(BinaryReader& r) {
  BlockStats s;
  s.proposed = r.u64();
  s.accepted = r.u64();
  return s;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const ChainCheckpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint '" + tmp + "' for writing");
    BinaryWriter w(os);
    w.raw(detail::kCheckpointMagic, 8);
    w.u64(ChainCheckpoint::kVersion);
    w.u64(ck.iteration);
    w.i64(ck.n_samples);
    w.i64(ck.burn_in);
    w.i64(ck.thin);
    w.u64(ck.seed);
    w.str(ck.rng_state);

    const ModelState& s = ck.state;
    w.matrix(s.x.values());
    w.matrix(s.coeffs.beta);
    w.vector(s.coeffs.local_scales);
    w.f64(s.coeffs.global_scale);
    w.vector(s.coeffs.local_aux);
    w.f64(s.coeffs.global_aux);
    w.f64(s.alpha);
    w.f64(s.kappa);
    w.matrix(s.sigma);

    const SamplerTuning& t = ck.tuning;
    w.f64(t.mala_step);
    w.f64(t.alpha_step);
    w.f64(t.kappa_step);
    w.u64(t.adapt_iterations);
    for (const BlockStats* b : {&t.mala_burn, &t.alpha_burn, &t.kappa_burn, &t.mala, &t.alpha, &t.kappa}) {
      detail::write_stats(w, *b);
    }

    const PosteriorSummary& p = ck.partial;
    w.u64(p.traces.names.size());
    for (const auto& nm : p.traces.names) w.str(nm);
    w.doubles(p.traces.values);
    w.u64(p.eta_samples.size());
    for (const auto& e : p.eta_samples) w.matrix(e);
    w.doubles(p.sample_alpha);
    w.matrix(p.eta_sum);
    w.matrix(p.x_sum);
    w.u64(p.recorded);
    if (!os) throw IoError("failed writing checkpoint '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

inline ChainCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  BinaryReader r(is);
  char magic[8];
  r.raw(magic, 8);
  if (!std::equal(magic, magic + 8, detail::kCheckpointMagic)) throw IoError("'" + path + "' is not a chain checkpoint");
  const std::uint64_t version = r.u64();
  if (version != ChainCheckpoint::kVersion) {
    throw IoError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                  std::to_string(ChainCheckpoint::kVersion));
  }
  ChainCheckpoint ck;
  ck.iteration = r.u64();
  ck.n_samples = r.i64();
  ck.burn_in = r.i64();
  ck.thin = r.i64();
  ck.seed = r.u64();
  ck.rng_state = r.str();

  ModelState& s = ck.state;
  s.x = LatentField(r.matrix());
  s.coeffs.beta = r.matrix();
  s.coeffs.local_scales = r.vector();
  s.coeffs.global_scale = r.f64();
  s.coeffs.local_aux = r.vector();
  s.coeffs.global_aux = r.f64();
  s.alpha = r.f64();
  s.kappa = r.f64();
  s.sigma = r.matrix();

  SamplerTuning& t = ck.tuning;
  t.mala_step = r.f64();
  t.alpha_step = r.f64();
  t.kappa_step = r.f64();
  t.adapt_iterations = r.u64();
  for (BlockStats* b : {&t.mala_burn, &t.alpha_burn, &t.kappa_burn, &t.mala, &t.alpha, &t.kappa}) *b = detail::read_stats(r);

  PosteriorSummary& p = ck.partial;
  const std::uint64_t n_names = r.u64();
  if (n_names > (1u << 20)) throw IoError("checkpoint: corrupt trace header");
  for (std::uint64_t i = 0; i < n_names; ++i) p.traces.names.push_back(r.str());
  p.traces.values = r.doubles();
  const std::uint64_t n_eta = r.u64();
  if (n_eta > (1u << 26)) throw IoError("checkpoint: corrupt sample count");
  for (std::uint64_t i = 0; i < n_eta; ++i) p.eta_samples.push_back(r.matrix());
  p.sample_alpha = r.doubles();
  p.eta_sum = r.matrix();
  p.x_sum = r.matrix();
  p.recorded = r.u64();
  return ck;
}

inline std::vector<Composition> reconstruct(const PosteriorSummary& summary);

namespace detail {

inline void finalize_summary(PosteriorSummary& s) {
  for (const auto& name : s.traces.names) {
    const auto col = s.traces.column(name);
    s.ess[name] = effective_sample_size(col);
  }
  if (!s.eta_samples.empty()) s.z_mean = reconstruct(s);
}

// Drives a BlockedSampler and records the posterior.
class ChainDriver {
 public:
  ChainDriver(const HierarchicalModel& model, const ChainConfig& config)
      : model_(model), config_(config), rng_(config.seed) {
    config_.validate();
    if (model.observations().size() == 0) throw InvalidArgument("run_chain: at least one observation is required");
    ModelState init = model.initial_state();
    model.check_state(init);
    try {
      const double lp = model.log_posterior(init);
      if (!std::isfinite(lp)) throw NumericError("non-finite");
    } catch (const NumericError& e) {
      throw NumericError(std::string("chain initialization: ") + e.what());
    }
    sampler_.emplace(model, std::move(init), config.blocks, SamplerTuning{}, config.targets);
    init_summary();
  }

  ChainDriver(const HierarchicalModel& model, const ChainConfig& config, const ChainCheckpoint& ck)
      : model_(model), config_(config) {
    config_.validate();
    if (ck.n_samples != config.n_samples || ck.burn_in != config.burn_in || ck.thin != config.thin || ck.seed != config.seed) {
      throw ConfigError("checkpoint was written with a different chain configuration");
    }
    rng_.restore(ck.rng_state);
    sampler_.emplace(model, ck.state, config.blocks, ck.tuning, config.targets);
    sampler_->set_iteration(ck.iteration);
    summary_ = ck.partial;
    fill_meta();
  }

  PosteriorSummary run(const ProgressCallback& progress) {
    const auto total = static_cast<std::uint64_t>(config_.n_samples);
    const auto burn = static_cast<std::uint64_t>(config_.burn_in);
    while (sampler_->iteration() < total) {
      const std::uint64_t it = sampler_->iteration();
      const bool adapt = it < burn;
      sampler_->sweep(rng_, adapt);
      if (!adapt) record(it - burn);
      const std::uint64_t done = sampler_->iteration();
      if (progress && config_.progress_every > 0 && done % static_cast<std::uint64_t>(config_.progress_every) == 0) {
        report(progress, done);
      }
      const bool halt = config_.halt_after > 0 && done == static_cast<std::uint64_t>(config_.halt_after) && done < total;
      if ((config_.checkpoint_every > 0 && done % static_cast<std::uint64_t>(config_.checkpoint_every) == 0) || halt) {
        write_checkpoint(config_.checkpoint_path, checkpoint());
      }
      if (halt) break;
    }
    summary_.final_state = sampler_->state();
    fill_acceptance();
    PosteriorSummary out = summary_;
    finalize_summary(out);
    return out;
  }

  ChainCheckpoint checkpoint() const {
    ChainCheckpoint ck;
    ck.iteration = sampler_->iteration();
    ck.n_samples = config_.n_samples;
    ck.burn_in = config_.burn_in;
    ck.thin = config_.thin;
    ck.seed = config_.seed;
    ck.rng_state = rng_.state();
    ck.state = sampler_->state();
    ck.tuning = sampler_->tuning();
    ck.partial.traces = summary_.traces;
    ck.partial.eta_samples = summary_.eta_samples;
    ck.partial.sample_alpha = summary_.sample_alpha;
    ck.partial.eta_sum = summary_.eta_sum;
    ck.partial.x_sum = summary_.x_sum;
    ck.partial.recorded = summary_.recorded;
    return ck;
  }

 private:
  void fill_meta() {
    summary_.nodes = model_.nodes();
    summary_.fields = model_.fields();
    summary_.predictors = model_.predictors();
    summary_.predictor_names = model_.design().column_names;
  }

  void init_summary() {
    fill_meta();
    summary_.traces.names = trace_names(model_);
    summary_.eta_sum = Eigen::MatrixXd::Zero(model_.nodes(), model_.fields());
    summary_.x_sum = Eigen::MatrixXd::Zero(model_.nodes(), model_.fields());
    const auto rows = static_cast<std::size_t>(config_.retained_iterations());
    summary_.traces.values.reserve(rows * summary_.traces.names.size());
  }

  void record(std::uint64_t post_index) {
    const ModelState& s = sampler_->state();
    const Index m = model_.fields();
    auto& v = summary_.traces.values;
    const double ll = sampler_->log_likelihood();
    v.push_back(ll);
    v.push_back(-2.0 * ll);
    v.push_back(s.alpha);
    v.push_back(s.kappa);
    for (Index a = 0; a < m; ++a) {
      for (Index b = a; b < m; ++b) v.push_back(s.sigma(a, b));
    }
    for (Index l = 0; l < model_.predictors(); ++l) {
      for (Index k = 0; k < m; ++k) v.push_back(s.coeffs.beta(l, k));
    }
    v.push_back(s.coeffs.global_scale);
    for (Index l = 1; l < model_.predictors(); ++l) v.push_back(s.coeffs.local_scales[l - 1]);

    const Eigen::MatrixXd eta = model_.eta(s);
    summary_.eta_sum += eta;
    summary_.x_sum += s.x.values();
    ++summary_.recorded;
    if (post_index % static_cast<std::uint64_t>(config_.thin) == 0) {
      summary_.eta_samples.push_back(eta);
      summary_.sample_alpha.push_back(s.alpha);
    }
  }

  void fill_acceptance() {
    const SamplerTuning& t = sampler_->tuning();
    auto pick = [](const BlockStats& post, const BlockStats& burn) { return post.proposed > 0 ? post.rate() : burn.rate(); };
    summary_.acceptance.mala = pick(t.mala, t.mala_burn);
    summary_.acceptance.alpha = pick(t.alpha, t.alpha_burn);
    summary_.acceptance.kappa = pick(t.kappa, t.kappa_burn);
    summary_.acceptance.mala_step = t.mala_step;
    summary_.acceptance.alpha_step = t.alpha_step;
    summary_.acceptance.kappa_step = t.kappa_step;
  }

  void report(const ProgressCallback& progress, std::uint64_t done) const {
    const SamplerTuning& t = sampler_->tuning();
    ProgressInfo info;
    info.iteration = static_cast<std::int64_t>(done);
    info.log_posterior = model_.log_posterior(sampler_->state());
    const bool burn = t.mala.proposed == 0;
    info.mala_acceptance = burn ? t.mala_burn.rate() : t.mala.rate();
    info.alpha_acceptance = burn ? t.alpha_burn.rate() : t.alpha.rate();
    info.kappa_acceptance = burn ? t.kappa_burn.rate() : t.kappa.rate();
    progress(info);
  }

  const HierarchicalModel& model_;
  ChainConfig config_;
  Rng rng_;
  std::optional<BlockedSampler> sampler_;
  PosteriorSummary summary_;
};

}  // namespace detail

// Runs one MCMC chain and returns its posterior summary.
inline PosteriorSummary run_chain(const HierarchicalModel& model, const ChainConfig& config,
                                  const ProgressCallback& progress = {}) {
  detail::ChainDriver driver(model, config);
  return driver.run(progress);
}

// Continues a chain from a checkpoint; the result equals the uninterrupted run.
inline PosteriorSummary resume_chain(const HierarchicalModel& model, const ChainConfig& config, const ChainCheckpoint& ck,
                                     const ProgressCallback& progress = {}) {
  detail::ChainDriver driver(model, config, ck);
  return driver.run(progress);
}

// Pools several chains into one summary (traces and samples concatenated in
// chain order).
inline PosteriorSummary merge_summaries(const std::vector<PosteriorSummary>& parts) {
  if (parts.empty()) throw InvalidArgument("merge_summaries: nothing to merge");
  PosteriorSummary out = parts.front();
  out.ess.clear();
  double mala = out.acceptance.mala, alpha = out.acceptance.alpha, kappa = out.acceptance.kappa;
  for (std::size_t c = 1; c < parts.size(); ++c) {
    const PosteriorSummary& p = parts[c];
    if (p.traces.names != out.traces.names || p.nodes != out.nodes) throw InvalidArgument("merge_summaries: incompatible chains");
    out.traces.values.insert(out.traces.values.end(), p.traces.values.begin(), p.traces.values.end());
    out.eta_samples.insert(out.eta_samples.end(), p.eta_samples.begin(), p.eta_samples.end());
    out.sample_alpha.insert(out.sample_alpha.end(), p.sample_alpha.begin(), p.sample_alpha.end());
    out.eta_sum += p.eta_sum;
    out.x_sum += p.x_sum;
    out.recorded += p.recorded;
    mala += p.acceptance.mala;
    alpha += p.acceptance.alpha;
    kappa += p.acceptance.kappa;
  }
  const double nc = static_cast<double>(parts.size());
  out.acceptance.mala = mala / nc;
  out.acceptance.alpha = alpha / nc;
  out.acceptance.kappa = kappa / nc;
  out.chains = parts.size();
  detail::finalize_summary(out);
  return out;
}

// Runs `chains` independent chains (seeds derived from config.seed) on up to
// `jobs` threads and merges them.
// With `resume`, chains whose checkpoint file exists continue from it.
inline PosteriorSummary run_chains(const HierarchicalModel& model, const ChainConfig& config, std::size_t chains,
                                   std::size_t jobs, bool resume = false) {
  if (chains == 0) throw ConfigError("at least one chain is required");
  auto one = [&](std::size_t c) {
    ChainConfig cc = config;
    cc.seed = derive_seed(config.seed, c);
    if (!cc.checkpoint_path.empty() && chains > 1) cc.checkpoint_path += "." + std::to_string(c);
    if (resume && !cc.checkpoint_path.empty() && std::filesystem::exists(cc.checkpoint_path)) {
      return resume_chain(model, cc, read_checkpoint(cc.checkpoint_path));
    }
    return run_chain(model, cc);
  };
  if (chains == 1) return one(0);
  jobs = std::max<std::size_t>(1, std::min(jobs, chains));
  std::vector<PosteriorSummary> results(chains);
  std::vector<std::exception_ptr> errors(chains);
  auto work = [&](std::size_t c) {
    try {
      results[c] = one(c);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  for (std::size_t start = 0; start < chains; start += jobs) {
    std::vector<std::thread> pool;
    for (std::size_t c = start; c < std::min(chains, start + jobs); ++c) pool.emplace_back(work, c);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return merge_summaries(results);
}

// Posterior-mean composition per node: average of alr^{-1}(eta) over the
// retained samples, closed again.
inline std::vector<Composition> reconstruct(const PosteriorSummary& summary) {
  if (summary.eta_samples.empty()) throw InsufficientSamples("reconstruct: no retained samples");
  const Index n = summary.eta_samples.front().rows();
  const Index m = summary.eta_samples.front().cols();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, m + 1);
  Eigen::VectorXd z(m + 1);
  for (const auto& eta : summary.eta_samples) {
    for (Index i = 0; i < n; ++i) {
      const Eigen::VectorXd e = eta.row(i).transpose();
      detail::alr_inverse_into(e.data(), m, z.data());
      acc.row(i) += z.transpose();
    }
  }
  std::vector<Composition> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(Composition::closure(acc.row(i).transpose()));
  return out;
}

struct DecompositionStage {
  std::string name;
  std::vector<Composition> cells;
};

namespace detail {

inline std::vector<Composition> map_alr_inverse(const Eigen::MatrixXd& eta) {
  std::vector<Composition> out;
  out.reserve(static_cast<std::size_t>(eta.rows()));
  for (Index i = 0; i < eta.rows(); ++i) out.push_back(alr_inverse(AlrVector(eta.row(i).transpose())));
  return out;
}

}  // namespace detail

// Cumulative build-up of the predictor as compositional maps:
//   covariate      raw auxiliary composition(s) (after zero replacement)
//   scaled         auxiliary block times posterior-mean beta
//   mean_structure mu = B beta_mean
//   full           mu + posterior-mean X = alr^{-1}(posterior-mean eta)
// The first two stages exist only when the design holds auxiliary
// compositions.
inline std::vector<DecompositionStage> decompose_predictor(const PosteriorSummary& summary, const HierarchicalModel& model) {
  if (summary.recorded == 0) throw InsufficientSamples("decompose_predictor: empty summary");
  const DesignMatrix& d = model.design();
  const Index n = model.nodes();
  const Index m = model.fields();
  const Eigen::MatrixXd beta = summary.beta_mean();
  std::vector<DecompositionStage> stages;

  const auto comp_blocks = d.composition_blocks();
  if (!comp_blocks.empty()) {
    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, m);
    Eigen::MatrixXd scaled = Eigen::MatrixXd::Zero(n, m);
    const ColumnBlock& first = comp_blocks.front();
    for (Index j = 0; j < first.count; ++j) {
      const Index col = first.first + j;
      raw.col(j) = d.b.col(col) * d.scale[col] + Eigen::VectorXd::Constant(n, d.center[col]);
    }
    for (const auto& blk : comp_blocks) {
      scaled += d.b.middleCols(blk.first, blk.count) * beta.middleRows(blk.first, blk.count);
    }
    if (d.encoding == CovariateEncoding::alr) {
      stages.push_back({"covariate", detail::map_alr_inverse(raw)});
    } else {
      std::vector<Composition> cells;
      for (Index i = 0; i < n; ++i) {
        Eigen::VectorXd z(m + 1);
        z.head(m) = raw.row(i).transpose().cwiseMax(0.0);
        z[m] = std::max(0.0, 1.0 - z.head(m).sum());
        cells.push_back(Composition::closure(z));
      }
      stages.push_back({"covariate", std::move(cells)});
    }
    stages.push_back({"scaled", detail::map_alr_inverse(scaled)});
  }
  const Eigen::MatrixXd mu = d.b * beta;
  stages.push_back({"mean_structure", detail::map_alr_inverse(mu)});
  stages.push_back({"full", detail::map_alr_inverse(mu + summary.x_mean())});
  return stages;
}

}  // namespace landcover
