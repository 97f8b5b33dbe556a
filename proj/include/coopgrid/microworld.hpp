#pragma once

#include "coopgrid/config.hpp"
#include "coopgrid/evidential_grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace coopgrid {

/// Seconds per simulation step.
inline constexpr double kStepSeconds = 0.1;
/// Mass given to the true class of a perceived cell; the rest goes to Omega.
inline constexpr double kPerceptionMass = 0.99;

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Ego motion since the previous step, expressed in the previous ego frame
/// (dx forward, dy left).
struct Motion {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
};

/// Driving-policy outputs. Acceleration and steering lie in [-1, 1]; the
/// global direction is the mean of the next 10 route points (1 m apart) in
/// the ego frame, in meters.
struct Controls {
  double acceleration = 0.0;
  double steering = 0.0;
  double dir_x = 0.0;
  double dir_y = 0.0;
};

/// Scenario schema (config keys in parentheses):
///   layout (layout)             default | crossing | straight | open
///   cars, pedestrians           agent counts
///   car_speed_min/max (m/s)     uniform speed range per car
///   ped_step_sigma (m)          std of the per-step velocity perturbation
///   ped_max_step (m)            bound on a pedestrian's displacement per step
///   ego_speed (m/s)             constant ego speed along its route
///   ego_route                   straight | right | left | random
///   fov_deg, max_range_m        partial-perception wedge
///   world_size_m                side of the square world
struct ScenarioConfig {
  std::string layout = "crossing";
  int cars = 10;
  int pedestrians = 14;
  double car_speed_min = 5.0;
  double car_speed_max = 10.0;
  double ped_step_sigma = 0.04;
  double ped_max_step = 0.2;
  double ego_speed = 8.0;
  std::string ego_route = "random";
  double fov_deg = 135.0;
  double max_range_m = 30.0;
  double world_size_m = 160.0;

  /// Reads the keys above, throwing ConfigError on malformed values.
  static ScenarioConfig from_config(const Config& cfg);
  static std::vector<std::string_view> keys();
  void validate() const;
};

/// Static classes on a square world raster, origin at the world center.
class StaticLayout {
 public:
  StaticLayout() = default;
  StaticLayout(double size_m, double meters_per_cell);

  SemanticClass at(double x, double y) const;
  void paint_rect(double x0, double y0, double x1, double y1, SemanticClass c);

  double size_m() const { return size_m_; }
  double meters_per_cell() const { return meters_per_cell_; }
  int cells_per_side() const { return n_; }

 private:
  double size_m_ = 0.0;
  double meters_per_cell_ = 0.5;
  int n_ = 0;
  std::vector<std::uint8_t> labels_;
};

struct Car {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double speed = 0.0;
  Eigen::Vector2d footprint{3.0, 1.8};  // length along heading, width
  Eigen::Vector2d path_start = Eigen::Vector2d::Zero();
  Eigen::Vector2d path_end = Eigen::Vector2d::Zero();
};

struct Pedestrian {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // meters per step
  double heading = 0.0;
  Eigen::Vector2d footprint{0.7, 1.6};
};

struct WorldState {
  ScenarioConfig scenario;
  StaticLayout layout;
  std::vector<Car> cars;
  std::vector<Pedestrian> pedestrians;
  int time = 0;
  std::mt19937_64 rng;
};

/// Scripted ego: a dense polyline route followed at constant speed.
struct EgoState {
  Pose2 pose;
  double speed = 0.0;
  double route_s = 0.0;
  std::vector<Eigen::Vector2d> route;  // 0.1 m spacing
  Controls controls;
  Motion motion;
};

struct ObservationBundle {
  SemanticGrid partial;   // occlusion-limited perception
  SemanticGrid complete;  // fully informed, Omega = 0.01 everywhere
  Motion motion;
  Controls controls;
};

std::pair<WorldState, EgoState> world_init(std::uint64_t seed, const ScenarioConfig& scenario);

/// Advances agents and ego by one step.
std::pair<WorldState, EgoState> world_step(const WorldState& w, const EgoState& ego);

/// Ego-frame coordinates (forward, left) in meters of the center of a cell.
Eigen::Vector2d cell_center_ego(const GridGeometry& g, int row, int col);
/// World coordinates of a cell center.
Eigen::Vector2d cell_center_world(const GridGeometry& g, const Pose2& ego, int row, int col);

/// Ground-truth class per cell (row-major), agents drawn over the layout.
std::vector<SemanticClass> render_classes(const WorldState& w, const EgoState& ego,
                                          const GridGeometry& g = {});

SemanticGrid render_complete(const WorldState& w, const EgoState& ego, const GridGeometry& g = {});

inline bool blocks_view(SemanticClass c) {
  return c == SemanticClass::Other || c == SemanticClass::Car || c == SemanticClass::Pedestrian;
}

/// Per-cell visibility (row-major) from the ego cell center: inside the
/// forward wedge, within range, and the straight segment to the cell center
/// crosses no blocking cell with positive length (endpoints excluded).
std::vector<bool> visibility_mask(const std::vector<SemanticClass>& classes, const GridGeometry& g,
                                  double fov_deg, double max_range_m);

SemanticGrid render_partial(const WorldState& w, const EgoState& ego, double fov_deg,
                            double max_range_m, const GridGeometry& g = {});

/// Complete and partial grids plus the ego's motion and controls.
ObservationBundle observe(const WorldState& w, const EgoState& ego, const GridGeometry& g = {});

/// FNV-1a digest of every agent and ego pose, for determinism checks.
std::uint64_t state_digest(const WorldState& w, const EgoState& ego);

}  // namespace coopgrid
