#include "coopgrid/microworld.hpp"

#include "coopgrid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace coopgrid {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRoadHalfWidth = 7.0;
constexpr double kLaneOffset = 3.5;
constexpr double kRouteSpacing = 0.1;
constexpr double kWheelbase = 2.7;
constexpr double kMaxSteerAngle = 0.6;
constexpr double kMaxAccel = 3.0;

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

void paint_default_roads(StaticLayout& layout, bool with_cross_road) {
  const double h = layout.size_m() / 2.0;
  layout.paint_rect(-kRoadHalfWidth, -h, kRoadHalfWidth, h, SemanticClass::Road);
  if (with_cross_road) {
    layout.paint_rect(-h, -kRoadHalfWidth, h, kRoadHalfWidth, SemanticClass::Road);
  }
  // Dashed center lines (3 m on, 3 m off), interrupted by the junction.
  for (double s = -h; s < h; s += 6.0) {
    const double s1 = std::min(s + 3.0, h);
    const bool in_junction = with_cross_road && s1 > -kRoadHalfWidth && s < kRoadHalfWidth;
    if (in_junction) continue;
    layout.paint_rect(-0.25, s, 0.25, s1, SemanticClass::RoadLines);
    if (with_cross_road) layout.paint_rect(s, -0.25, s1, 0.25, SemanticClass::RoadLines);
  }
}

// Zebra stripes on all four approaches, 1 m stripes, 3 m deep.
std::vector<Eigen::Vector4d> paint_crossings(StaticLayout& layout) {
  std::vector<Eigen::Vector4d> zones;
  const double d0 = kRoadHalfWidth + 1.0;
  const double d1 = d0 + 3.0;
  for (double s = -kRoadHalfWidth; s < kRoadHalfWidth; s += 2.0) {
    layout.paint_rect(s, d0, s + 1.0, d1, SemanticClass::RoadLines);
    layout.paint_rect(s, -d1, s + 1.0, -d0, SemanticClass::RoadLines);
    layout.paint_rect(d0, s, d1, s + 1.0, SemanticClass::RoadLines);
    layout.paint_rect(-d1, s, -d0, s + 1.0, SemanticClass::RoadLines);
  }
  zones.emplace_back(-kRoadHalfWidth, d0, -kRoadHalfWidth + 1.0, d1);
  zones.emplace_back(-kRoadHalfWidth, -d1, -kRoadHalfWidth + 1.0, -d0);
  zones.emplace_back(d0, -kRoadHalfWidth, d1, -kRoadHalfWidth + 1.0);
  zones.emplace_back(-d1, -kRoadHalfWidth, -d0, -kRoadHalfWidth + 1.0);
  return zones;
}

void append_line(std::vector<Eigen::Vector2d>& route, const Eigen::Vector2d& a,
                 const Eigen::Vector2d& b) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::round(len / kRouteSpacing)));
  for (int i = route.empty() ? 0 : 1; i <= n; ++i) route.push_back(a + (b - a) * (double(i) / n));
}

void append_arc(std::vector<Eigen::Vector2d>& route, const Eigen::Vector2d& center, double radius,
                double a0, double a1) {
  const double len = std::abs(a1 - a0) * radius;
  const int n = std::max(1, static_cast<int>(std::round(len / kRouteSpacing)));
  for (int i = 1; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * (double(i) / n);
    route.push_back(center + radius * Eigen::Vector2d(std::cos(a), std::sin(a)));
  }
}

std::vector<Eigen::Vector2d> build_route(const std::string& kind, double half_size) {
  std::vector<Eigen::Vector2d> r;
  const double far = half_size - 2.0;
  if (kind == "straight") {
    append_line(r, {kLaneOffset, -far}, {kLaneOffset, far});
  } else if (kind == "right") {
    const double radius = 4.5;
    append_line(r, {kLaneOffset, -far}, {kLaneOffset, -kLaneOffset - radius});
    append_arc(r, {kLaneOffset + radius, -kLaneOffset - radius}, radius, kPi, kPi / 2.0);
    append_line(r, r.back(), {far, -kLaneOffset});
  } else {  // left
    const double radius = 2.0 * kLaneOffset;
    append_line(r, {kLaneOffset, -far}, {kLaneOffset, -kLaneOffset});
    append_arc(r, {-kLaneOffset, -kLaneOffset}, radius, 0.0, kPi / 2.0);
    append_line(r, r.back(), {-far, kLaneOffset});
  }
  return r;
}

// Position and heading at arc length s (extrapolates past the last point).
std::pair<Eigen::Vector2d, double> route_pose(const std::vector<Eigen::Vector2d>& route, double s) {
  const int n = static_cast<int>(route.size());
  const double fi = s / kRouteSpacing;
  int i = static_cast<int>(std::floor(fi));
  i = std::clamp(i, 0, n - 2);
  const Eigen::Vector2d seg = route[i + 1] - route[i];
  const double seg_len = seg.norm();
  const Eigen::Vector2d dir = seg_len > 0 ? Eigen::Vector2d(seg / seg_len) : Eigen::Vector2d(1, 0);
  const Eigen::Vector2d p = route[i] + dir * (s - i * kRouteSpacing);
  return {p, std::atan2(dir.y(), dir.x())};
}

Eigen::Vector2d to_ego_frame(const Pose2& ego, const Eigen::Vector2d& p) {
  const double c = std::cos(ego.theta), s = std::sin(ego.theta);
  const Eigen::Vector2d d = p - Eigen::Vector2d(ego.x, ego.y);
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

Controls compute_controls(const EgoState& ego, double prev_speed, double dtheta) {
  Controls c;
  c.acceleration = std::clamp((ego.speed - prev_speed) / kStepSeconds / kMaxAccel, -1.0, 1.0);
  const double dist = ego.speed * kStepSeconds;
  if (dist > 0.0) {
    const double curvature = dtheta / dist;
    c.steering = std::clamp(std::atan(curvature * kWheelbase) / kMaxSteerAngle, -1.0, 1.0);
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int k = 1; k <= 10; ++k) {
    mean += to_ego_frame(ego.pose, route_pose(ego.route, ego.route_s + k * 1.0).first);
  }
  mean /= 10.0;
  c.dir_x = mean.x();
  c.dir_y = mean.y();
  return c;
}

}  // namespace

std::vector<std::string_view> ScenarioConfig::keys() {
  return {"layout",    "cars",         "pedestrians", "car_speed_min", "car_speed_max",
          "ped_step_sigma", "ped_max_step", "ego_speed",  "ego_route",     "fov_deg",
          "max_range_m", "world_size_m"};
}

ScenarioConfig ScenarioConfig::from_config(const Config& cfg) {
  ScenarioConfig s;
  s.layout = cfg.get_string("layout", s.layout);
  s.cars = cfg.get_int("cars", s.cars);
  s.pedestrians = cfg.get_int("pedestrians", s.pedestrians);
  s.car_speed_min = cfg.get_double("car_speed_min", s.car_speed_min);
  s.car_speed_max = cfg.get_double("car_speed_max", s.car_speed_max);
  s.ped_step_sigma = cfg.get_double("ped_step_sigma", s.ped_step_sigma);
  s.ped_max_step = cfg.get_double("ped_max_step", s.ped_max_step);
  s.ego_speed = cfg.get_double("ego_speed", s.ego_speed);
  s.ego_route = cfg.get_string("ego_route", s.ego_route);
  s.fov_deg = cfg.get_double("fov_deg", s.fov_deg);
  s.max_range_m = cfg.get_double("max_range_m", s.max_range_m);
  s.world_size_m = cfg.get_double("world_size_m", s.world_size_m);
  s.validate();
  return s;
}

void ScenarioConfig::validate() const {
  static const std::vector<std::string> layouts{"default", "crossing", "straight", "open"};
  static const std::vector<std::string> routes{"straight", "right", "left", "random"};
  if (std::find(layouts.begin(), layouts.end(), layout) == layouts.end()) {
    throw ConfigError("unknown layout template '" + layout + "'", "layout");
  }
  if (std::find(routes.begin(), routes.end(), ego_route) == routes.end()) {
    throw ConfigError("unknown ego route '" + ego_route + "'", "ego_route");
  }
  if (cars < 0 || pedestrians < 0) throw ConfigError("agent counts must be nonnegative");
  if (car_speed_min < 0 || car_speed_max < car_speed_min) {
    throw ConfigError("car speed range must satisfy 0 <= min <= max");
  }
  if (ped_step_sigma < 0 || ped_max_step < 0) throw ConfigError("pedestrian step parameters must be >= 0");
  if (ego_speed < 0) throw ConfigError("ego_speed must be >= 0");
  if (!(fov_deg > 0 && fov_deg <= 360)) throw ConfigError("fov_deg must lie in (0, 360]");
  if (!(max_range_m > 0)) throw ConfigError("max_range_m must be positive");
  if (!(world_size_m >= 60)) throw ConfigError("world_size_m must be at least 60");
}

StaticLayout::StaticLayout(double size_m, double meters_per_cell)
    : size_m_(size_m),
      meters_per_cell_(meters_per_cell),
      n_(static_cast<int>(std::ceil(size_m / meters_per_cell))),
      labels_(static_cast<std::size_t>(n_) * n_, static_cast<std::uint8_t>(SemanticClass::Other)) {}

SemanticClass StaticLayout::at(double x, double y) const {
  const int i = static_cast<int>(std::floor((x + size_m_ / 2.0) / meters_per_cell_));
  const int j = static_cast<int>(std::floor((y + size_m_ / 2.0) / meters_per_cell_));
  if (i < 0 || j < 0 || i >= n_ || j >= n_) return SemanticClass::Other;
  return static_cast<SemanticClass>(labels_[static_cast<std::size_t>(j) * n_ + i]);
}

void StaticLayout::paint_rect(double x0, double y0, double x1, double y1, SemanticClass c) {
  // A world cell takes the class when its center lies in the rectangle.
  for (int j = 0; j < n_; ++j) {
    const double y = -size_m_ / 2.0 + (j + 0.5) * meters_per_cell_;
    if (y < y0 || y > y1) continue;
    for (int i = 0; i < n_; ++i) {
      const double x = -size_m_ / 2.0 + (i + 0.5) * meters_per_cell_;
      if (x >= x0 && x <= x1) labels_[static_cast<std::size_t>(j) * n_ + i] = static_cast<std::uint8_t>(c);
    }
  }
}

std::pair<WorldState, EgoState> world_init(std::uint64_t seed, const ScenarioConfig& scenario) {
  scenario.validate();
  WorldState w;
  w.scenario = scenario;
  w.rng.seed(seed);
  w.layout = StaticLayout(scenario.world_size_m, 0.5);
  const double half = scenario.world_size_m / 2.0;

  std::vector<Eigen::Vector4d> crossing_zones;
  if (scenario.layout == "open") {
    w.layout.paint_rect(-half, -half, half, half, SemanticClass::Road);
  } else {
    paint_default_roads(w.layout, scenario.layout != "straight");
    if (scenario.layout == "crossing") crossing_zones = paint_crossings(w.layout);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(w.rng); };

  std::string route_kind = scenario.ego_route;
  if (scenario.layout == "straight") route_kind = "straight";
  if (route_kind == "random") {
    const double u = unit(w.rng);
    route_kind = u < 1.0 / 3.0 ? "straight" : (u < 2.0 / 3.0 ? "right" : "left");
  }

  // Lanes: (start, end) pairs, right-hand traffic. Lanes the ego drives on
  // carry no traffic; the ego is scripted and cannot brake for cars.
  std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> lanes{
      {{-kLaneOffset, half}, {-kLaneOffset, -half}}};
  if (scenario.layout != "straight") {
    if (route_kind != "right") lanes.push_back({{-half, -kLaneOffset}, {half, -kLaneOffset}});
    if (route_kind != "left") lanes.push_back({{half, kLaneOffset}, {-half, kLaneOffset}});
  }
  for (int i = 0; i < scenario.cars; ++i) {
    const auto& lane = lanes[static_cast<std::size_t>(i) % lanes.size()];
    Car car;
    car.path_start = lane.first;
    car.path_end = lane.second;
    car.position = lane.first + (lane.second - lane.first) * unit(w.rng);
    const Eigen::Vector2d d = lane.second - lane.first;
    car.heading = std::atan2(d.y(), d.x());
    car.speed = uniform(scenario.car_speed_min, scenario.car_speed_max);
    w.cars.push_back(car);
  }

  for (int i = 0; i < scenario.pedestrians; ++i) {
    Pedestrian p;
    if (!crossing_zones.empty() && i < static_cast<int>(crossing_zones.size())) {
      // Start on a zebra stripe.
      const auto& z = crossing_zones[static_cast<std::size_t>(i)];
      p.position = {uniform(z[0] + 0.25, z[2] - 0.25), uniform(z[1] + 0.25, z[3] - 0.25)};
    } else {
      // Sidewalk band along either road edge.
      const double along = uniform(-half + 2.0, half - 2.0);
      const double side = unit(w.rng) < 0.5 ? -1.0 : 1.0;
      const double across = side * uniform(kRoadHalfWidth - 1.0, kRoadHalfWidth + 2.0);
      const bool vertical = scenario.layout == "straight" || unit(w.rng) < 0.5;
      p.position = vertical ? Eigen::Vector2d(across, along) : Eigen::Vector2d(along, across);
    }
    p.heading = uniform(-kPi, kPi);
    w.pedestrians.push_back(p);
  }

  EgoState ego;
  ego.route = build_route(route_kind, half);
  ego.speed = scenario.ego_speed;
  // 15 to 30 m before the junction, so a 50-step episode crosses it.
  ego.route_s = uniform(42.0, 57.0);
  auto [p, th] = route_pose(ego.route, ego.route_s);
  ego.pose = {p.x(), p.y(), th};
  ego.controls = compute_controls(ego, ego.speed, 0.0);
  return {std::move(w), std::move(ego)};
}

std::pair<WorldState, EgoState> world_step(const WorldState& w0, const EgoState& ego0) {
  WorldState w = w0;
  EgoState ego = ego0;
  const double half = w.scenario.world_size_m / 2.0;

  const Eigen::Vector2d ego_xy(ego0.pose.x, ego0.pose.y);
  for (auto& car : w.cars) {
    const Eigen::Vector2d dir(std::cos(car.heading), std::sin(car.heading));
    const Eigen::Vector2d next = car.position + dir * car.speed * kStepSeconds;
    // Yield: hold position when the ego is just ahead in the car's path.
    const Eigen::Vector2d rel = ego_xy - next;
    const double along = rel.dot(dir);
    if (along > 0.0 && along < 6.0 && std::abs(rel.x() * dir.y() - rel.y() * dir.x()) < 2.5) continue;
    car.position = next;
    // Loop back to the lane entry once past the lane end.
    if ((car.position - car.path_start).dot(car.path_end - car.path_start) >
        (car.path_end - car.path_start).squaredNorm()) {
      car.position = car.path_start;
    }
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = w.scenario.ped_step_sigma;
  const double max_step = w.scenario.ped_max_step;
  for (auto& p : w.pedestrians) {
    const double ex = gauss(w.rng), ey = gauss(w.rng);
    p.velocity = 0.9 * p.velocity + sigma * Eigen::Vector2d(ex, ey);
    const double n = p.velocity.norm();
    if (n > max_step) p.velocity *= max_step / n;
    p.position += p.velocity;
    p.position.x() = std::clamp(p.position.x(), -half, half);
    p.position.y() = std::clamp(p.position.y(), -half, half);
    if (p.velocity.norm() > 1e-3) p.heading = std::atan2(p.velocity.y(), p.velocity.x());
  }

  const Pose2 prev = ego.pose;
  const double prev_speed = ego0.speed;
  ego.route_s += ego.speed * kStepSeconds;
  auto [pos, th] = route_pose(ego.route, ego.route_s);
  ego.pose = {pos.x(), pos.y(), th};
  const Eigen::Vector2d d = to_ego_frame(prev, pos);
  ego.motion = {d.x(), d.y(), wrap_angle(ego.pose.theta - prev.theta)};
  ego.controls = compute_controls(ego, prev_speed, ego.motion.dtheta);
  ++w.time;
  return {std::move(w), std::move(ego)};
}

Eigen::Vector2d cell_center_ego(const GridGeometry& g, int row, int col) {
  return {(g.ego_row - row) * g.meters_per_cell, (g.ego_col - col) * g.meters_per_cell};
}

Eigen::Vector2d cell_center_world(const GridGeometry& g, const Pose2& ego, int row, int col) {
  const Eigen::Vector2d e = cell_center_ego(g, row, col);
  const double c = std::cos(ego.theta), s = std::sin(ego.theta);
  return {ego.x + c * e.x() - s * e.y(), ego.y + s * e.x() + c * e.y()};
}

namespace {

// Overwrites cells whose center lies inside the agent's oriented rectangle.
void stamp_agent(std::vector<SemanticClass>& classes, const GridGeometry& g, const Pose2& ego,
                 const Eigen::Vector2d& position, double heading, const Eigen::Vector2d& footprint,
                 SemanticClass cls) {
  const Eigen::Vector2d center = to_ego_frame(ego, position);
  const double rel = heading - ego.theta;
  const Eigen::Vector2d axis(std::cos(rel), std::sin(rel));
  const Eigen::Vector2d perp(-axis.y(), axis.x());
  const double reach = 0.5 * footprint.norm();
  const double m = g.meters_per_cell;
  // Ego-frame forward f -> row = ego_row - f/m; left l -> col = ego_col - l/m.
  const int r0 = std::max(0, static_cast<int>(std::floor(g.ego_row - (center.x() + reach) / m)));
  const int r1 = std::min(g.height - 1, static_cast<int>(std::ceil(g.ego_row - (center.x() - reach) / m)));
  const int c0 = std::max(0, static_cast<int>(std::floor(g.ego_col - (center.y() + reach) / m)));
  const int c1 = std::min(g.width - 1, static_cast<int>(std::ceil(g.ego_col - (center.y() - reach) / m)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const Eigen::Vector2d d = cell_center_ego(g, r, c) - center;
      if (std::abs(d.dot(axis)) <= footprint.x() / 2.0 && std::abs(d.dot(perp)) <= footprint.y() / 2.0) {
        classes[static_cast<std::size_t>(r) * g.width + c] = cls;
      }
    }
  }
}

}  // namespace

std::vector<SemanticClass> render_classes(const WorldState& w, const EgoState& ego,
                                          const GridGeometry& g) {
  std::vector<SemanticClass> classes(static_cast<std::size_t>(g.cell_count()));
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const Eigen::Vector2d p = cell_center_world(g, ego.pose, r, c);
      classes[static_cast<std::size_t>(r) * g.width + c] = w.layout.at(p.x(), p.y());
    }
  }
  for (const auto& car : w.cars) {
    stamp_agent(classes, g, ego.pose, car.position, car.heading, car.footprint, SemanticClass::Car);
  }
  for (const auto& p : w.pedestrians) {
    stamp_agent(classes, g, ego.pose, p.position, p.heading, p.footprint, SemanticClass::Pedestrian);
  }
  return classes;
}

namespace {

SemanticGrid grid_from_classes(const std::vector<SemanticClass>& classes, const GridGeometry& g,
                               const std::vector<bool>* visible) {
  GridBuilder b(g);
  auto& cells = b.cells();
  for (int i = 0; i < g.cell_count(); ++i) {
    if (visible && !(*visible)[static_cast<std::size_t>(i)]) continue;
    cells.row(i).setZero();
    cells(i, channel(classes[static_cast<std::size_t>(i)])) = kPerceptionMass;
    cells(i, kOmega) = 1.0 - kPerceptionMass;
  }
  return std::move(b).build();
}

}  // namespace

SemanticGrid render_complete(const WorldState& w, const EgoState& ego, const GridGeometry& g) {
  return grid_from_classes(render_classes(w, ego, g), g, nullptr);
}

std::vector<bool> visibility_mask(const std::vector<SemanticClass>& classes, const GridGeometry& g,
                                  double fov_deg, double max_range_m) {
  const double half_fov = fov_deg / 2.0 * kPi / 180.0;
  const double range_cells = max_range_m / g.meters_per_cell;
  std::vector<bool> visible(static_cast<std::size_t>(g.cell_count()), false);
  // Continuous cell coordinates: cell (r, c) spans [r, r+1) x [c, c+1).
  const double r_start = g.ego_row + 0.5;
  const double c_start = g.ego_col + 0.5;
  constexpr double kTie = 1e-12;

  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const auto idx = static_cast<std::size_t>(r) * g.width + c;
      if (r == g.ego_row && c == g.ego_col) {
        visible[idx] = true;
        continue;
      }
      const double fwd = g.ego_row - r;
      const double left = g.ego_col - c;
      if (std::hypot(fwd, left) > range_cells) continue;
      if (std::abs(std::atan2(left, fwd)) > half_fov) continue;

      // Grid traversal along the segment from the ego center to the cell center.
      const double dr = (r + 0.5) - r_start;
      const double dc = (c + 0.5) - c_start;
      const int step_r = dr > 0 ? 1 : (dr < 0 ? -1 : 0);
      const int step_c = dc > 0 ? 1 : (dc < 0 ? -1 : 0);
      const double t_delta_r = step_r ? 1.0 / std::abs(dr) : INFINITY;
      const double t_delta_c = step_c ? 1.0 / std::abs(dc) : INFINITY;
      // Start is a cell center, so the first boundary is half a cell away.
      double t_max_r = step_r ? 0.5 * t_delta_r : INFINITY;
      double t_max_c = step_c ? 0.5 * t_delta_c : INFINITY;
      int cr = g.ego_row, cc = g.ego_col;
      bool blocked = false;
      while (true) {
        if (std::abs(t_max_r - t_max_c) <= kTie) {
          // Through a lattice corner: the side cells are only touched.
          cr += step_r;
          cc += step_c;
          t_max_r += t_delta_r;
          t_max_c += t_delta_c;
        } else if (t_max_r < t_max_c) {
          cr += step_r;
          t_max_r += t_delta_r;
        } else {
          cc += step_c;
          t_max_c += t_delta_c;
        }
        if (cr == r && cc == c) break;
        if (blocks_view(classes[static_cast<std::size_t>(cr) * g.width + cc])) {
          blocked = true;
          break;
        }
      }
      visible[idx] = !blocked;
    }
  }
  return visible;
}

SemanticGrid render_partial(const WorldState& w, const EgoState& ego, double fov_deg,
                            double max_range_m, const GridGeometry& g) {
  const auto classes = render_classes(w, ego, g);
  const auto visible = visibility_mask(classes, g, fov_deg, max_range_m);
  return grid_from_classes(classes, g, &visible);
}

ObservationBundle observe(const WorldState& w, const EgoState& ego, const GridGeometry& g) {
  const auto classes = render_classes(w, ego, g);
  const auto visible = visibility_mask(classes, g, w.scenario.fov_deg, w.scenario.max_range_m);
  return {grid_from_classes(classes, g, &visible), grid_from_classes(classes, g, nullptr),
          ego.motion, ego.controls};
}

std::uint64_t state_digest(const WorldState& w, const EgoState& ego) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : w.cars) {
    mix(c.position.x());
    mix(c.position.y());
    mix(c.heading);
  }
  for (const auto& p : w.pedestrians) {
    mix(p.position.x());
    mix(p.position.y());
  }
  mix(ego.pose.x);
  mix(ego.pose.y);
  mix(ego.pose.theta);
  mix(static_cast<double>(w.time));
  return h;
}

}  // namespace coopgrid
