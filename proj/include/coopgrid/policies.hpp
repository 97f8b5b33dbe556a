#pragma once

#include "coopgrid/checkpoint.hpp"
#include "coopgrid/environment.hpp"
#include "coopgrid/request_mdp.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace coopgrid {

struct PolicyInput {
  const SemanticGrid& knowledge;  // G_t, or G~_{t+1} for the greedy scorer
  const SpatialFilterGrid& filter;
  const RewardParams& params;
  const Eigen::VectorXd* features = nullptr;
};

struct PolicyOutput {
  BoundingBoxAction action;
  double score = 0.0;
};

struct Candidate {
  BoundingBoxAction action;
  CellBox box;
};

/// Anchors v = i/(rows-1), u = j/(cols-1) on a rows x cols lattice, each with
/// w = h = s for every s in `sizes`, followed by the empty box.
std::vector<Candidate> candidate_lattice(const GridGeometry& g, int rows = 8, int cols = 12,
                                         const std::vector<double>& sizes = {0.125, 0.25, 0.5, 1.0});

/// Argmax of `scores` with ties broken by smallest area, then lowest (row, col).
std::size_t select_best(const std::vector<Candidate>& candidates, const std::vector<double>& scores);

/// Mean per-cell class reward under a uniform class prior.
double uniform_prior_rbar(const RewardParams& p);

PolicyOutput broadcast_policy(const PolicyInput& in);
PolicyOutput silent_policy(const PolicyInput& in);
PolicyOutput random_policy(const PolicyInput& in, std::mt19937_64& rng);

/// Scores sum_box S Omega^w rbar - eta r_min |box| - K (1-eta) r_min, empty
/// box at the penalty.
PolicyOutput greedy_ignorance_policy(const PolicyInput& in, const std::vector<Candidate>& candidates, double rbar);
std::vector<double> greedy_scores(const PolicyInput& in, const std::vector<Candidate>& candidates, double rbar);

/// True next-step reward of every candidate, read off a preview.
std::vector<double> oracle_scores(const StepPreview& peek, const std::vector<Candidate>& candidates,
                                  const GridGeometry& g, const RewardParams& p);
PolicyOutput oracle_greedy_policy(const PolicyInput& in, const StepPreview& peek,
                                  const std::vector<Candidate>& candidates);

/// Affine map from pooled Omega features to sigmoid (u, v, w, h, gate); a
/// request is made only when gate > 0.5.
struct AffinePolicy {
  int blocks_r = 4;
  int blocks_c = 6;
  Eigen::MatrixXd weights;  // 5 x (blocks_r * blocks_c)
  Eigen::VectorXd bias;     // 5

  static AffinePolicy zeros(int blocks_r = 4, int blocks_c = 6);
  int num_features() const { return blocks_r * blocks_c; }
  int num_params() const { return 5 * (num_features() + 1); }
  Eigen::VectorXd flatten() const;
  static AffinePolicy unflatten(const Eigen::VectorXd& theta, int blocks_r = 4, int blocks_c = 6);

  Eigen::VectorXd features(const SemanticGrid& g) const;
  BoundingBoxAction act(const Eigen::VectorXd& features) const;

  Checkpoint to_checkpoint() const;
  static AffinePolicy from_checkpoint(const Checkpoint& ck);
};

/// Runtime-polymorphic policy used by the episode runner.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string id() const = 0;
  /// `peek` is the preview of the step the action will be applied to.
  virtual PolicyOutput act(const Environment& env, const StepPreview& peek) = 0;
};

struct PolicyOptions {
  std::uint64_t seed = 0;
  double rbar = -1.0;  // < 0 selects the configured default
  std::string checkpoint;
};

/// broadcast | silent | random | greedy | oracle | cem
std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyOptions& opts, const EnvConfig& env);
std::vector<std::string> policy_names();

struct CemConfig {
  int population = 24;
  double elite_fraction = 0.25;
  int generations = 10;
  std::uint64_t seed = 0;
  double init_std = 1.0;
  double min_std = 0.05;
  int episodes = 3;       // training episodes per candidate, shared across candidates
  int episode_steps = 20;
  int jobs = 1;
};

struct CemGeneration {
  double mean_return = 0.0;
  double elite_mean_return = 0.0;
  double best_return = 0.0;
  double mean_std = 0.0;
};

struct CemResult {
  AffinePolicy policy;
  double best_return = 0.0;
  std::vector<CemGeneration> trace;
};

/// Mean undiscounted return of `policy` over episodes seeded seed0, seed0+1, ...
double evaluate_affine(const AffinePolicy& policy, const EnvConfig& env, std::uint64_t seed0, int episodes,
                       int steps);

/// Cross-entropy search starting at `init` (zeros when omitted). Returns the
/// best candidate seen by mean training return.
CemResult train_cem(const EnvConfig& env, const CemConfig& cfg, const AffinePolicy* init = nullptr);

}  // namespace coopgrid
