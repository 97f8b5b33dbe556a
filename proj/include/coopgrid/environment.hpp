#pragma once

#include "coopgrid/config.hpp"
#include "coopgrid/memory.hpp"
#include "coopgrid/microworld.hpp"
#include "coopgrid/request_mdp.hpp"

#include <array>
#include <cstdint>

namespace coopgrid {

using ClassGains = Eigen::Array<double, Eigen::Dynamic, kNumClasses, Eigen::RowMajor>;

struct EnvConfig {
  ScenarioConfig scenario;
  RewardParams reward = RewardParams::defaults();
  MemoryParams memory;
  GridGeometry geometry;
  int episode_steps = 50;

  /// Scenario, reward and memory keys plus `episode_steps`.
  static EnvConfig from_config(const Config& cfg);
  static std::vector<std::string_view> keys();
};

/// Everything about t+1 that does not depend on the request.
struct StepPreview {
  WorldState world;
  EgoState ego;
  ObservationBundle obs;
  MemoryBuffer memory;   // after transform, age and integration of the partial grid
  SemanticGrid g_tilde;  // memory-integrated perception before any grant
  ClassGains full_gains;        // per-cell class gains if the whole grid were granted
  Eigen::ArrayXd full_density;  // reward density under the whole-grid grant
};

struct StepOutcome {
  BoundingBoxAction action;
  CellBox box;
  double reward = 0.0;
  std::array<double, kNumClasses> gained{};      // summed class gains of the grant
  std::array<double, kNumClasses> achievable{};  // same under a whole-grid grant
  double mean_omega = 0.0;                       // over G_{t+1}
  ObservationBundle obs;
  SemanticGrid g_tilde;
  SemanticGrid g_next;
};

/// The request MDP on top of the micro-world. Step order per transition:
/// world step, memory transform -> age -> integrate partial (G~), grant the
/// box from the complete grid, fuse (G), memory absorbs G.
class Environment {
 public:
  Environment(const EnvConfig& cfg, std::uint64_t seed);

  /// Next-step quantities; a copy, the environment is unchanged.
  StepPreview preview() const;
  StepOutcome step(const BoundingBoxAction& a);
  /// Grants `a` on a preview obtained from this environment's current state.
  StepOutcome commit(StepPreview p, const BoundingBoxAction& a);

  int time() const { return world_.time; }
  /// Current knowledge G_t (includes the grant that arrived at t).
  const SemanticGrid& knowledge() const { return memory_.grid; }
  const ObservationBundle& observation() const { return obs_; }
  const SpatialFilterGrid& filter() const { return filter_; }
  const EnvConfig& config() const { return cfg_; }
  const WorldState& world() const { return world_; }
  const EgoState& ego() const { return ego_; }

 private:
  EnvConfig cfg_;
  SpatialFilterGrid filter_;
  WorldState world_;
  EgoState ego_;
  ObservationBundle obs_;
  MemoryBuffer memory_;
};

}  // namespace coopgrid
