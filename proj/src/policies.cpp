#include "coopgrid/policies.hpp"

#include "coopgrid/errors.hpp"
#include "coopgrid/features.hpp"
#include "coopgrid/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coopgrid {

std::vector<Candidate> candidate_lattice(const GridGeometry& g, int rows, int cols, const std::vector<double>& sizes) {
  if (rows < 2 || cols < 2 || sizes.empty()) throw ParameterError("candidate lattice needs >= 2x2 anchors and a size");
  std::vector<Candidate> out;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      for (double s : sizes) {
        BoundingBoxAction a{double(j) / (cols - 1), double(i) / (rows - 1), s, s};
        out.push_back({a, cells_of(a, g.height, g.width)});
      }
    }
  }
  out.push_back({BoundingBoxAction::none(), CellBox{}});
  return out;
}

std::size_t select_best(const std::vector<Candidate>& candidates, const std::vector<double>& scores) {
  if (candidates.empty()) throw ParameterError("empty candidate set", "select_best");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i].box;
    const auto& b = candidates[best].box;
    if (scores[i] > scores[best]) {
      best = i;
    } else if (scores[i] == scores[best]) {
      const auto key_a = std::make_tuple(a.count(), a.row0, a.col0);
      const auto key_b = std::make_tuple(b.count(), b.row0, b.col0);
      if (key_a < key_b) best = i;
    }
  }
  return best;
}

double uniform_prior_rbar(const RewardParams& p) { return p.r_obj.mean(); }

PolicyOutput broadcast_policy(const PolicyInput&) { return {BoundingBoxAction::broadcast(), 0.0}; }

PolicyOutput silent_policy(const PolicyInput& in) { return {BoundingBoxAction::none(), in.params.penalty}; }

PolicyOutput random_policy(const PolicyInput&, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < 0.5) return {BoundingBoxAction::none(), 0.0};
  BoundingBoxAction a;
  a.u = unit(rng);
  a.v = unit(rng);
  a.w = unit(rng);
  a.h = unit(rng);
  return {a, 0.0};
}

std::vector<double> greedy_scores(const PolicyInput& in, const std::vector<Candidate>& candidates, double rbar) {
  const GridGeometry& g = in.knowledge.geometry();
  const RewardParams& p = in.params;
  const Eigen::ArrayXd value = in.filter.values * in.knowledge.cells().col(kOmega).array().pow(p.w_exp) * rbar;
  const BoxSums sums(value, g.height, g.width);
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const CellBox& b = candidates[i].box;
    scores[i] = b.empty() ? p.penalty
                          : sums.sum(b) - p.eta * p.r_min * b.count() - p.k_min_cells * (1.0 - p.eta) * p.r_min;
  }
  return scores;
}

PolicyOutput greedy_ignorance_policy(const PolicyInput& in, const std::vector<Candidate>& candidates, double rbar) {
  const auto scores = greedy_scores(in, candidates, rbar);
  const auto i = select_best(candidates, scores);
  return {candidates[i].action, scores[i]};
}

std::vector<double> oracle_scores(const StepPreview& peek, const std::vector<Candidate>& candidates,
                                  const GridGeometry& g, const RewardParams& p) {
  const BoxSums sums(peek.full_density, g.height, g.width);
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const CellBox& b = candidates[i].box;
    scores[i] = b.empty() ? p.penalty : sums.sum(b) - p.k_min_cells * (1.0 - p.eta) * p.r_min;
  }
  return scores;
}

PolicyOutput oracle_greedy_policy(const PolicyInput& in, const StepPreview& peek,
                                  const std::vector<Candidate>& candidates) {
  const auto scores = oracle_scores(peek, candidates, in.knowledge.geometry(), in.params);
  const auto i = select_best(candidates, scores);
  return {candidates[i].action, scores[i]};
}

// ---------------------------------------------------------------------------
// Affine policy

AffinePolicy AffinePolicy::zeros(int blocks_r, int blocks_c) {
  AffinePolicy p;
  p.blocks_r = blocks_r;
  p.blocks_c = blocks_c;
  p.weights = Eigen::MatrixXd::Zero(5, blocks_r * blocks_c);
  p.bias = Eigen::VectorXd::Zero(5);
  return p;
}

Eigen::VectorXd AffinePolicy::flatten() const {
  Eigen::VectorXd theta(num_params());
  theta.head(5) = bias;
  for (int k = 0; k < 5; ++k) theta.segment(5 + k * num_features(), num_features()) = weights.row(k).transpose();
  return theta;
}

AffinePolicy AffinePolicy::unflatten(const Eigen::VectorXd& theta, int blocks_r, int blocks_c) {
  AffinePolicy p = zeros(blocks_r, blocks_c);
  if (theta.size() != p.num_params()) throw ParameterError("affine policy parameter count mismatch");
  p.bias = theta.head(5);
  for (int k = 0; k < 5; ++k) p.weights.row(k) = theta.segment(5 + k * p.num_features(), p.num_features()).transpose();
  return p;
}

Eigen::VectorXd AffinePolicy::features(const SemanticGrid& g) const {
  return average_pool(g, blocks_r, blocks_c, kOmega);
}

BoundingBoxAction AffinePolicy::act(const Eigen::VectorXd& f) const {
  const Eigen::VectorXd z = weights * f + bias;
  const Eigen::ArrayXd y = 1.0 / (1.0 + (-z.array()).exp());
  if (!(y[4] > 0.5)) return BoundingBoxAction::none();
  return {y[0], y[1], y[2], y[3]};
}

Checkpoint AffinePolicy::to_checkpoint() const {
  Checkpoint ck;
  ck.put_scalar("policy.blocks_r", blocks_r);
  ck.put_scalar("policy.blocks_c", blocks_c);
  ck.put("policy.weights", weights);
  ck.put("policy.bias", bias);
  return ck;
}

AffinePolicy AffinePolicy::from_checkpoint(const Checkpoint& ck) {
  AffinePolicy p = zeros(static_cast<int>(ck.scalar("policy.blocks_r")), static_cast<int>(ck.scalar("policy.blocks_c")));
  const Eigen::MatrixXd w = ck.matrix("policy.weights");
  const Eigen::VectorXd b = ck.vector("policy.bias");
  if (w.rows() != 5 || w.cols() != p.num_features() || b.size() != 5) {
    throw IoError("affine policy checkpoint has inconsistent shapes");
  }
  p.weights = w;
  p.bias = b;
  return p;
}

// ---------------------------------------------------------------------------
// Runner-facing wrappers

namespace {

PolicyInput input_of(const Environment& env) {
  return {env.knowledge(), env.filter(), env.config().reward, nullptr};
}

class BroadcastPolicy final : public Policy {
 public:
  std::string id() const override { return "broadcast"; }
  PolicyOutput act(const Environment& env, const StepPreview&) override { return broadcast_policy(input_of(env)); }
};

class SilentPolicy final : public Policy {
 public:
  std::string id() const override { return "silent"; }
  PolicyOutput act(const Environment& env, const StepPreview&) override { return silent_policy(input_of(env)); }
};

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  std::string id() const override { return "random"; }
  PolicyOutput act(const Environment& env, const StepPreview&) override { return random_policy(input_of(env), rng_); }

 private:
  std::mt19937_64 rng_;
};

class GreedyPolicy final : public Policy {
 public:
  GreedyPolicy(const GridGeometry& g, double rbar) : candidates_(candidate_lattice(g)), rbar_(rbar) {}
  std::string id() const override { return "greedy"; }
  // Scores ignorance in G~: memory plus the agent's own perception of the
  // step being requested, nothing from the complete grid.
  PolicyOutput act(const Environment& env, const StepPreview& peek) override {
    const PolicyInput in{peek.g_tilde, env.filter(), env.config().reward, nullptr};
    return greedy_ignorance_policy(in, candidates_, rbar_);
  }

 private:
  std::vector<Candidate> candidates_;
  double rbar_;
};

class OraclePolicy final : public Policy {
 public:
  explicit OraclePolicy(const GridGeometry& g) : candidates_(candidate_lattice(g)) {}
  std::string id() const override { return "oracle"; }
  PolicyOutput act(const Environment& env, const StepPreview& peek) override {
    return oracle_greedy_policy(input_of(env), peek, candidates_);
  }

 private:
  std::vector<Candidate> candidates_;
};

class CemPolicy final : public Policy {
 public:
  explicit CemPolicy(AffinePolicy p) : policy_(std::move(p)) {}
  std::string id() const override { return "cem"; }
  PolicyOutput act(const Environment& env, const StepPreview&) override {
    return {policy_.act(policy_.features(env.knowledge())), 0.0};
  }

 private:
  AffinePolicy policy_;
};

}  // namespace

std::vector<std::string> policy_names() { return {"broadcast", "silent", "random", "greedy", "oracle", "cem"}; }

std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyOptions& opts, const EnvConfig& env) {
  if (name == "broadcast") return std::make_unique<BroadcastPolicy>();
  if (name == "silent") return std::make_unique<SilentPolicy>();
  if (name == "random") return std::make_unique<RandomPolicy>(opts.seed);
  if (name == "greedy") {
    return std::make_unique<GreedyPolicy>(env.geometry, opts.rbar >= 0.0 ? opts.rbar : uniform_prior_rbar(env.reward));
  }
  if (name == "oracle") return std::make_unique<OraclePolicy>(env.geometry);
  if (name == "cem") {
    if (opts.checkpoint.empty()) throw ConfigError("policy 'cem' needs a checkpoint", "policy");
    return std::make_unique<CemPolicy>(AffinePolicy::from_checkpoint(Checkpoint::load(opts.checkpoint)));
  }
  throw ConfigError("unknown policy '" + name + "'", "policy");
}

// ---------------------------------------------------------------------------
// Cross-entropy method

double evaluate_affine(const AffinePolicy& policy, const EnvConfig& env, std::uint64_t seed0, int episodes,
                       int steps) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Environment sim(env, seed0 + static_cast<std::uint64_t>(e));
    for (int t = 0; t < steps; ++t) total += sim.step(policy.act(policy.features(sim.knowledge()))).reward;
  }
  return total / episodes;
}

CemResult train_cem(const EnvConfig& env, const CemConfig& cfg, const AffinePolicy* init) {
  if (cfg.population < 2 || cfg.generations < 0 || cfg.episodes < 1 || cfg.episode_steps < 1) {
    throw ParameterError("CEM needs population >= 2, generations >= 0, episodes >= 1, steps >= 1");
  }
  if (!(cfg.elite_fraction > 0.0 && cfg.elite_fraction <= 1.0)) {
    throw ParameterError("CEM elite fraction must lie in (0,1]");
  }
  const AffinePolicy start = init ? *init : AffinePolicy::zeros();
  const int n_elite = std::max(1, static_cast<int>(std::round(cfg.elite_fraction * cfg.population)));
  // Training episodes use seeds disjoint from the usual evaluation range.
  const std::uint64_t train_seed0 = cfg.seed * 1000003ULL + 500000ULL;

  CemResult result;
  result.policy = start;
  result.best_return = evaluate_affine(start, env, train_seed0, cfg.episodes, cfg.episode_steps);

  Eigen::VectorXd mean = start.flatten();
  Eigen::VectorXd stddev = Eigen::VectorXd::Constant(mean.size(), cfg.init_std);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Eigen::VectorXd> pop(static_cast<std::size_t>(cfg.population));
    for (auto& theta : pop) {
      theta.resize(mean.size());
      for (Eigen::Index i = 0; i < mean.size(); ++i) theta[i] = mean[i] + stddev[i] * gauss(rng);
    }
    std::vector<double> returns(pop.size());
    parallel_for(cfg.population, cfg.jobs, [&](int i) {
      returns[static_cast<std::size_t>(i)] = evaluate_affine(AffinePolicy::unflatten(pop[static_cast<std::size_t>(i)], start.blocks_r, start.blocks_c),
                                                             env, train_seed0, cfg.episodes, cfg.episode_steps);
    });
    for (std::size_t i = 0; i < returns.size(); ++i) {
      if (!std::isfinite(returns[i])) {
        throw NumericalError("non-finite CEM return at generation " + std::to_string(gen) + ", candidate " +
                                 std::to_string(i),
                             "train_cem");
      }
    }
    std::vector<int> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return returns[a] > returns[b]; });

    Eigen::VectorXd elite_mean = Eigen::VectorXd::Zero(mean.size());
    double elite_return = 0.0;
    for (int e = 0; e < n_elite; ++e) {
      elite_mean += pop[static_cast<std::size_t>(order[e])];
      elite_return += returns[static_cast<std::size_t>(order[e])];
    }
    elite_mean /= n_elite;
    Eigen::VectorXd elite_var = Eigen::VectorXd::Zero(mean.size());
    for (int e = 0; e < n_elite; ++e) {
      elite_var += (pop[static_cast<std::size_t>(order[e])] - elite_mean).array().square().matrix();
    }
    elite_var /= n_elite;
    mean = elite_mean;
    stddev = elite_var.array().sqrt().max(cfg.min_std).matrix();

    const double best = returns[static_cast<std::size_t>(order[0])];
    if (best > result.best_return) {
      result.best_return = best;
      result.policy = AffinePolicy::unflatten(pop[static_cast<std::size_t>(order[0])], start.blocks_r, start.blocks_c);
    }
    CemGeneration g;
    g.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
    g.elite_mean_return = elite_return / n_elite;
    g.best_return = best;
    g.mean_std = stddev.mean();
    result.trace.push_back(g);
  }
  return result;
}

}  // namespace coopgrid
