#include "coopgrid/errors.hpp"
#include "coopgrid/microworld.hpp"

#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

using namespace coopgrid;

namespace {

ScenarioConfig no_agents() {
  ScenarioConfig s;
  s.cars = 0;
  s.pedestrians = 0;
  return s;
}

// Independent world-frame position of a cell center.
Eigen::Vector2d world_point(const GridGeometry& g, const Pose2& p, int r, int c) {
  const double f = (g.ego_row - r) * g.meters_per_cell;
  const double l = (g.ego_col - c) * g.meters_per_cell;
  return {p.x + f * std::cos(p.theta) - l * std::sin(p.theta), p.y + f * std::sin(p.theta) + l * std::cos(p.theta)};
}

bool inside_rect(const Eigen::Vector2d& q, const Eigen::Vector2d& center, double heading, double len, double wid) {
  const Eigen::Vector2d d = q - center;
  const double a = d.x() * std::cos(heading) + d.y() * std::sin(heading);
  const double b = -d.x() * std::sin(heading) + d.y() * std::cos(heading);
  return std::abs(a) <= len / 2 && std::abs(b) <= wid / 2;
}

// Dense sampling of the segment at a tenth of a cell.
std::vector<bool> sampled_visibility(const std::vector<SemanticClass>& cls, const GridGeometry& g, double fov_deg,
                                     double range_m) {
  std::vector<bool> vis(cls.size(), false);
  const double r0 = g.ego_row + 0.5, c0 = g.ego_col + 0.5;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const double fwd = g.ego_row - r, left = g.ego_col - c;
      if (r == g.ego_row && c == g.ego_col) {
        vis[r * g.width + c] = true;
        continue;
      }
      if (std::hypot(fwd, left) * g.meters_per_cell > range_m) continue;
      if (std::abs(std::atan2(left, fwd)) * 180.0 / M_PI > fov_deg / 2) continue;
      const double len = std::hypot(fwd, left);
      const int n = static_cast<int>(std::ceil(len * 10));
      bool blocked = false;
      for (int i = 1; i < n && !blocked; ++i) {
        const double t = double(i) / n;
        const int sr = static_cast<int>(std::floor(r0 + t * (r + 0.5 - r0)));
        const int sc = static_cast<int>(std::floor(c0 + t * (c + 0.5 - c0)));
        if ((sr == r && sc == c) || (sr == g.ego_row && sc == g.ego_col)) continue;
        if (blocks_view(cls[sr * g.width + sc])) blocked = true;
      }
      vis[r * g.width + c] = !blocked;
    }
  }
  return vis;
}

// Length (in cells) of the part of segment a->b inside cell (row, col).
double crossing_length(const Eigen::Vector2d& a, const Eigen::Vector2d& b, int row, int col) {
  double t0 = 0, t1 = 1;
  const Eigen::Vector2d d = b - a;
  const double lo[2] = {double(row), double(col)};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0) {
      if (a[k] < lo[k] || a[k] > lo[k] + 1) return 0;
      continue;
    }
    double ta = (lo[k] - a[k]) / d[k], tb = (lo[k] + 1 - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return std::max(0.0, t1 - t0) * d.norm();
}

// Largest crossing length over blocking cells strictly between ego and target.
double worst_blocker(const std::vector<SemanticClass>& cls, const GridGeometry& g, int r, int c) {
  const Eigen::Vector2d a(g.ego_row + 0.5, g.ego_col + 0.5), b(r + 0.5, c + 0.5);
  double worst = 0;
  for (int rr = std::min(r, g.ego_row); rr <= std::max(r, g.ego_row); ++rr) {
    for (int cc = std::min(c, g.ego_col); cc <= std::max(c, g.ego_col); ++cc) {
      if ((rr == r && cc == c) || (rr == g.ego_row && cc == g.ego_col)) continue;
      if (blocks_view(cls[rr * g.width + cc])) worst = std::max(worst, crossing_length(a, b, rr, cc));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("world_init is deterministic") {
  ScenarioConfig s;
  auto [w1, e1] = world_init(42, s);
  auto [w2, e2] = world_init(42, s);
  CHECK(state_digest(w1, e1) == state_digest(w2, e2));
  for (int t = 0; t < 50; ++t) {
    std::tie(w1, e1) = world_step(w1, e1);
    std::tie(w2, e2) = world_step(w2, e2);
  }
  CHECK(state_digest(w1, e1) == state_digest(w2, e2));
  const auto o1 = observe(w1, e1), o2 = observe(w2, e2);
  CHECK(o1.partial.approx_equal(o2.partial, 0.0));
  CHECK(o1.complete.approx_equal(o2.complete, 0.0));
  auto [w3, e3] = world_init(43, s);
  CHECK(state_digest(w3, e3) != state_digest(world_init(42, s).first, world_init(42, s).second));
}

TEST_CASE("golden trajectory digest") {
  auto [w, e] = world_init(42, ScenarioConfig{});
  for (int t = 0; t < 50; ++t) std::tie(w, e) = world_step(w, e);
  CHECK(state_digest(w, e) == 17048198297106232859ULL);
}

TEST_CASE("zero-agent scenario holds only the static layout") {
  auto [w, e] = world_init(42, no_agents());
  CHECK(w.cars.empty());
  CHECK(w.pedestrians.empty());
  const GridGeometry g;
  const auto grid = render_complete(w, e, g);
  for (int r = 0; r < g.height; r += 3) {
    for (int c = 0; c < g.width; c += 3) {
      const auto p = world_point(g, e.pose, r, c);
      const int k = channel(w.layout.at(p.x(), p.y()));
      CHECK(std::abs(grid.mass(r, c, k) - 0.99) < 1e-12);
      CHECK(std::abs(grid.omega(r, c) - 0.01) < 1e-12);
    }
  }
}

TEST_CASE("crossing template places a pedestrian on a crosswalk") {
  ScenarioConfig s;
  s.layout = "crossing";
  auto [w, e] = world_init(7, s);
  int on_crossing = 0;
  for (const auto& p : w.pedestrians) {
    if (w.layout.at(p.position.x(), p.position.y()) == SemanticClass::RoadLines) ++on_crossing;
  }
  CHECK(on_crossing >= 1);
}

TEST_CASE("malformed scenarios are rejected") {
  ScenarioConfig s;
  s.layout = "moon";
  CHECK_THROWS_AS(world_init(1, s), ConfigError);
  s = ScenarioConfig{};
  s.cars = -1;
  CHECK_THROWS_AS(world_init(1, s), ConfigError);
  Config cfg = Config::parse("cars = many\n");
  CHECK_THROWS_AS(ScenarioConfig::from_config(cfg), ConfigError);
}

TEST_CASE("kinematics") {
  ScenarioConfig s;
  s.car_speed_min = s.car_speed_max = 0.0;
  s.ped_step_sigma = 0.0;
  auto [w, e] = world_init(3, s);
  auto [w1, e1] = world_step(w, e);
  for (std::size_t i = 0; i < w.cars.size(); ++i) CHECK((w1.cars[i].position - w.cars[i].position).norm() == 0.0);
  for (std::size_t i = 0; i < w.pedestrians.size(); ++i) {
    CHECK((w1.pedestrians[i].position - w.pedestrians[i].position).norm() == 0.0);
  }
  CHECK(std::hypot(e1.motion.dx, e1.motion.dy) == doctest::Approx(s.ego_speed * kStepSeconds).epsilon(1e-6));

  s.car_speed_min = s.car_speed_max = 10.0;
  std::tie(w, e) = world_init(3, s);
  // Keep the car well inside its lane so the loop-back cannot trigger.
  w.cars[0].position = (w.cars[0].path_start + w.cars[0].path_end) / 2;
  std::tie(w1, e1) = world_step(w, e);
  const Eigen::Vector2d d = w1.cars[0].position - w.cars[0].position;
  CHECK(d.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::atan2(d.y(), d.x()) == doctest::Approx(w.cars[0].heading).epsilon(1e-12));
}

TEST_CASE("ego motion matches consecutive poses and controls stay bounded") {
  for (const char* route : {"straight", "right", "left"}) {
    ScenarioConfig s;
    s.ego_route = route;
    auto [w, e] = world_init(11, s);
    double total_turn = 0;
    for (int t = 0; t < 60; ++t) {
      const Pose2 p = e.pose;
      std::tie(w, e) = world_step(w, e);
      const double dx = e.pose.x - p.x, dy = e.pose.y - p.y;
      CHECK(std::abs(e.motion.dx - (dx * std::cos(p.theta) + dy * std::sin(p.theta))) < 1e-9);
      CHECK(std::abs(e.motion.dy - (-dx * std::sin(p.theta) + dy * std::cos(p.theta))) < 1e-9);
      CHECK(std::abs(std::remainder(e.pose.theta - p.theta - e.motion.dtheta, 2 * M_PI)) < 1e-9);
      CHECK(std::abs(e.controls.acceleration) <= 1.0);
      CHECK(std::abs(e.controls.steering) <= 1.0);
      total_turn += e.motion.dtheta;
    }
    if (std::string(route) == "right") CHECK(total_turn < -1.0);
    if (std::string(route) == "left") CHECK(total_turn > 1.0);
  }
}

TEST_CASE("agents stay inside the world") {
  ScenarioConfig s;
  s.ped_step_sigma = 0.5;
  s.ped_max_step = 2.0;
  auto [w, e] = world_init(5, s);
  const double half = s.world_size_m / 2;
  for (int t = 0; t < 300; ++t) {
    std::tie(w, e) = world_step(w, e);
    for (const auto& p : w.pedestrians) {
      CHECK(std::abs(p.position.x()) <= half);
      CHECK(std::abs(p.position.y()) <= half);
    }
    for (const auto& c : w.cars) {
      CHECK(std::abs(c.position.x()) <= half + 1.5);
      CHECK(std::abs(c.position.y()) <= half + 1.5);
    }
  }
}

TEST_CASE("car rasterization") {
  ScenarioConfig s = no_agents();
  s.layout = "open";
  auto [w, e] = world_init(1, s);
  const GridGeometry g;
  for (double heading_offset : {0.0, M_PI / 2, 0.3, -1.1}) {
    Car car;
    // Offset by a quarter cell so no cell center sits on the footprint boundary.
    const double f = 10.25, l = 0.25;
    car.position = {e.pose.x + f * std::cos(e.pose.theta) - l * std::sin(e.pose.theta),
                    e.pose.y + f * std::sin(e.pose.theta) + l * std::cos(e.pose.theta)};
    car.heading = e.pose.theta + heading_offset;
    w.cars = {car};
    const auto grid = render_complete(w, e, g);
    int count = 0;
    int rmin = g.height, rmax = -1, cmin = g.width, cmax = -1;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const bool expect = inside_rect(world_point(g, e.pose, r, c), car.position, car.heading, 3.0, 1.8);
        const bool is_car = grid.mass(r, c, channel(SemanticClass::Car)) > 0.5;
        REQUIRE(expect == is_car);
        if (is_car) {
          ++count;
          rmin = std::min(rmin, r), rmax = std::max(rmax, r), cmin = std::min(cmin, c), cmax = std::max(cmax, c);
        }
      }
    }
    if (heading_offset == 0.0) {
      CHECK(count == 24);
      CHECK(rmax - rmin + 1 == 6);
      CHECK(cmax - cmin + 1 == 4);
    }
    if (heading_offset == M_PI / 2) CHECK(count == 24);
  }
}

TEST_CASE("partial perception: occlusion and clear line of sight") {
  ScenarioConfig s = no_agents();
  s.layout = "open";
  auto [w, e] = world_init(1, s);
  const GridGeometry g;
  // Straight-ahead cells in ego frame; paint a wall 10 m ahead across the view.
  auto ahead = [&](double f, double l) {
    return Eigen::Vector2d(e.pose.x + f * std::cos(e.pose.theta) - l * std::sin(e.pose.theta),
                           e.pose.y + f * std::sin(e.pose.theta) + l * std::cos(e.pose.theta));
  };
  const auto p1 = ahead(9.9, -3.0), p2 = ahead(10.6, 3.0);
  w.layout.paint_rect(std::min(p1.x(), p2.x()), std::min(p1.y(), p2.y()), std::max(p1.x(), p2.x()),
                      std::max(p1.y(), p2.y()), SemanticClass::Other);
  const auto part = render_partial(w, e, 135.0, 30.0, g);
  // 5 m straight ahead: visible road.
  const int r5 = g.ego_row - 10;
  CHECK(std::abs(part.mass(r5, g.ego_col, channel(SemanticClass::Road)) - 0.99) < 1e-12);
  // 15 m straight ahead: behind the wall.
  const int r15 = g.ego_row - 30;
  CHECK(part.omega(r15, g.ego_col) == 1.0);
  // The wall itself is seen.
  CHECK(part.mass(g.ego_row - 20, g.ego_col, channel(SemanticClass::Other)) > 0.98);
  // Outside the wedge: directly to the side of the ego.
  CHECK(part.omega(g.ego_row, g.ego_col + 20) == 1.0);
  // Beyond range.
  CHECK(part.omega(0, g.ego_col) == 1.0);
}

TEST_CASE("visibility equals line-sampling and exact clipping oracles") {
  for (std::uint64_t seed : {42ULL, 7ULL, 19ULL}) {
    ScenarioConfig s;
    auto [w, e] = world_init(seed, s);
    for (int t = 0; t < 20; ++t) std::tie(w, e) = world_step(w, e);
    const GridGeometry g;
    const auto cls = render_classes(w, e, g);
    const auto fast = visibility_mask(cls, g, s.fov_deg, s.max_range_m);
    const auto sampled = sampled_visibility(cls, g, s.fov_deg, s.max_range_m);
    int grazing = 0, corner = 0;
    const double half_fov = s.fov_deg / 2 * M_PI / 180;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const auto i = static_cast<std::size_t>(r * g.width + c);
        const int dr = r - g.ego_row, dc = c - g.ego_col;
        if (dr == 0 && dc == 0) {
          REQUIRE(fast[i]);
          continue;
        }
        const bool in_wedge = std::hypot(dr, dc) * g.meters_per_cell <= s.max_range_m &&
                              std::abs(std::atan2(-dc, -dr)) <= half_fov;
        if (!in_wedge) {
          REQUIRE_FALSE(fast[i]);
          REQUIRE_FALSE(sampled[i]);
          continue;
        }
        // Exact rule: no blocker crossed with positive length.
        const double worst = worst_blocker(cls, g, r, c);
        REQUIRE(fast[i] == (worst <= 1e-12));
        if (fast[i] == sampled[i]) continue;
        if (!fast[i]) {
          // The sampler steps a tenth of a cell and can only miss shorter clips.
          REQUIRE(worst < 0.1);
          ++grazing;
        } else {
          // A sample sitting exactly on a lattice corner is binned into a cell
          // the segment only touches; that needs both reduced steps odd.
          const int n = std::gcd(std::abs(dr), std::abs(dc));
          REQUIRE((dr / n) % 2 != 0);
          REQUIRE((dc / n) % 2 != 0);
          ++corner;
        }
      }
    }
    MESSAGE("seed " << seed << ": " << grazing << " grazing, " << corner << " corner cells");
  }
}

TEST_CASE("partial perception is consistent with the complete view") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto [w, e] = world_init(seed, ScenarioConfig{});
    for (int t = 0; t < 10; ++t) {
      std::tie(w, e) = world_step(w, e);
      const auto obs = observe(w, e);
      CHECK(obs.partial.geometry() == obs.complete.geometry());
      for (int i = 0; i < obs.complete.size(); ++i) {
        REQUIRE(std::abs(obs.complete.cells()(i, kOmega) - 0.01) < 1e-12);
        if (obs.partial.cells()(i, kOmega) < 1.0) {
          Eigen::Index kp, kc;
          obs.partial.cells().row(i).head<kNumClasses>().maxCoeff(&kp);
          obs.complete.cells().row(i).head<kNumClasses>().maxCoeff(&kc);
          REQUIRE(kp == kc);
        }
      }
    }
  }
}

TEST_CASE("visibility is star-shaped on lattice points") {
  std::mt19937_64 rng(77);
  for (std::uint64_t seed : {4ULL, 5ULL, 6ULL, 8ULL}) {
    auto [w, e] = world_init(seed, ScenarioConfig{});
    for (int t = 0; t < 15; ++t) std::tie(w, e) = world_step(w, e);
    const GridGeometry g;
    const auto cls = render_classes(w, e, g);
    const auto vis = visibility_mask(cls, g, 135.0, 30.0);
    int checked = 0;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        if (!vis[r * g.width + c]) continue;
        const int dr = r - g.ego_row, dc = c - g.ego_col;
        const int n = std::gcd(std::abs(dr), std::abs(dc));
        for (int k = 1; k < n; ++k) {
          const int rr = g.ego_row + dr / n * k, cc = g.ego_col + dc / n * k;
          if (blocks_view(cls[rr * g.width + cc])) continue;
          REQUIRE(vis[rr * g.width + cc]);
          ++checked;
        }
      }
    }
    CHECK(checked > 100);
  }
}
