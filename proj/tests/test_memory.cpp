#include "coopgrid/errors.hpp"
#include "coopgrid/memory.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>

using namespace coopgrid;

namespace {

// Random grid; roughly a quarter of the cells are left vacuous.
SemanticGrid random_grid(const GridGeometry& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SemanticGrid::CellMatrix cells(g.cell_count(), kNumChannels);
  for (int i = 0; i < g.cell_count(); ++i) {
    if (u(rng) < 0.25) {
      cells.row(i).setZero();
      cells(i, kOmega) = 1.0;
      continue;
    }
    double s = 0;
    for (int k = 0; k < kNumChannels; ++k) s += (cells(i, k) = u(rng) + 0.01);
    cells.row(i) /= s;
  }
  return SemanticGrid(g, cells);
}

MemoryBuffer random_buffer(const GridGeometry& g, std::mt19937_64& rng, const MemoryParams& p = {}) {
  MemoryBuffer b(g, p);
  b.grid = random_grid(g, rng);
  std::uniform_int_distribution<int> a(0, p.max_age_steps - 1);
  for (int i = 0; i < g.cell_count(); ++i) b.ages[i] = b.grid.cells()(i, kOmega) >= 1.0 ? p.max_age_steps : a(rng);
  return b;
}

bool rows_equal(const SemanticGrid& a, int ia, const SemanticGrid& b, int ib) {
  return a.cells().row(ia) == b.cells().row(ib);
}

}  // namespace

TEST_CASE("zero motion leaves the buffer untouched") {
  std::mt19937_64 rng(1);
  const MemoryBuffer b = random_buffer(GridGeometry{}, rng);
  const MemoryBuffer t = transform(b, Motion{});
  CHECK(t.grid.cells() == b.grid.cells());
  CHECK((t.ages == b.ages).all());
}

TEST_CASE("integral shift round trip preserves interior cells exactly") {
  std::mt19937_64 rng(2);
  const GridGeometry g;
  const MemoryBuffer b = random_buffer(g, rng);
  for (const auto& [kf, kl] : std::vector<std::pair<int, int>>{{3, 0}, {0, -5}, {4, 7}, {-2, 3}}) {
    const Motion fwd{kf * g.meters_per_cell, kl * g.meters_per_cell, 0.0};
    const Motion back{-fwd.dx, -fwd.dy, 0.0};
    const MemoryBuffer once = transform(b, fwd);
    const MemoryBuffer twice = transform(once, back);
    int interior = 0;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        // Moving forward kf meters shifts content kf rows down (toward the ego).
        const int r1 = r + kf, c1 = c + kl;
        const bool stays = r1 >= 0 && r1 < g.height && c1 >= 0 && c1 < g.width;
        const int i = r * g.width + c;
        if (stays) {
          ++interior;
          REQUIRE(rows_equal(once.grid, r1 * g.width + c1, b.grid, i));
          REQUIRE(rows_equal(twice.grid, i, b.grid, i));
          REQUIRE(twice.ages[i] == b.ages[i]);
        } else {
          REQUIRE(twice.grid.omega(r, c) == 1.0);
          REQUIRE(twice.ages[i] == b.params.max_age_steps);
        }
      }
    }
    CHECK(interior == (g.height - std::abs(kf)) * (g.width - std::abs(kl)));
  }
}

TEST_CASE("transform matches a brute-force nearest-cell splat") {
  // Small grid so the oracle can search every destination cell.
  const GridGeometry g{12, 16, 0.5, 9, 7};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const MemoryBuffer b = random_buffer(g, rng);
    const Motion m{u(rng) * 2.0, u(rng) * 2.0, u(rng) * 0.8};
    const MemoryBuffer t = transform(b, m);

    std::map<int, std::vector<int>> sources;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const int i = r * g.width + c;
        if (b.grid.cells()(i, kOmega) >= 1.0) continue;
        // World point of the old cell center, seen from the new pose.
        const double x = (g.ego_row - r) * g.meters_per_cell, y = (g.ego_col - c) * g.meters_per_cell;
        const double px = x - m.dx, py = y - m.dy;
        const double nx = std::cos(m.dtheta) * px + std::sin(m.dtheta) * py;
        const double ny = -std::sin(m.dtheta) * px + std::cos(m.dtheta) * py;
        // Nearest new cell center; ties go to the smaller ego-frame coordinate,
        // i.e. the larger row / column index.
        int best = -1;
        double best_d = 1e300;
        for (int r2 = 0; r2 < g.height + 2; ++r2) {
          for (int c2 = 0; c2 < g.width + 2; ++c2) {
            const int rr = g.height + 1 - r2 - 1, cc = g.width + 1 - c2 - 1;  // scan from the far end
            const double cx = (g.ego_row - rr) * g.meters_per_cell, cy = (g.ego_col - cc) * g.meters_per_cell;
            const double dr = std::abs(cx - nx), dc = std::abs(cy - ny);
            if (dr > 0.5 * g.meters_per_cell + 1e-12 || dc > 0.5 * g.meters_per_cell + 1e-12) continue;
            const double d = std::max(dr, dc);
            if (d < best_d - 1e-12) {
              best_d = d;
              best = (rr >= 0 && rr < g.height && cc >= 0 && cc < g.width) ? rr * g.width + cc : -2;
            }
          }
        }
        if (best >= 0) sources[best].push_back(i);
      }
    }
    for (int d = 0; d < g.cell_count(); ++d) {
      auto it = sources.find(d);
      if (it == sources.end()) {
        REQUIRE(t.grid.cells()(d, kOmega) == 1.0);
        REQUIRE(t.ages[d] == b.params.max_age_steps);
        continue;
      }
      MassFunction expect = b.grid.cell(it->second[0] / g.width, it->second[0] % g.width);
      int youngest = b.ages[it->second[0]];
      for (std::size_t k = 1; k < it->second.size(); ++k) {
        const int s = it->second[k];
        expect = fuse(expect, b.grid.cell(s / g.width, s % g.width));
        youngest = std::min(youngest, b.ages[s]);
      }
      REQUIRE(t.grid.cell(d / g.width, d % g.width).approx_equal(expect, 1e-12));
      REQUIRE(t.ages[d] == youngest);
    }
  }
}

TEST_CASE("quarter turn maps cells by the rotation") {
  const GridGeometry g = GridGeometry::with_size(21, 21);
  MemoryBuffer b(g);
  // A cell 3 m straight ahead ends up 3 m to the right after turning left.
  const int r = g.ego_row - 6, c = g.ego_col;
  b.grid = SemanticGrid(g);
  GridBuilder gb(g);
  gb.row(r, c) << 0.9, 0, 0, 0, 0, 0.1;
  b.grid = std::move(gb).build();
  b.ages[r * g.width + c] = 2;
  const MemoryBuffer t = transform(b, Motion{0.0, 0.0, std::acos(-1.0) / 2});
  // Positive lateral coordinate is to the left (l = (ego_col - c) * mpc).
  const int c2 = g.ego_col + 6;
  CHECK(t.grid.mass(g.ego_row, c2, 0) == doctest::Approx(0.9));
  CHECK(t.ages[g.ego_row * g.width + c2] == 2);
}

TEST_CASE("ageing drives untouched cells to vacuity") {
  const int n = static_cast<int>(std::ceil(std::log(0.01) / std::log(0.9)));
  CHECK(n == 44);
  const GridGeometry g = GridGeometry::with_size(20, 30);
  std::mt19937_64 rng(4);

  // With saturation pushed out of the way the discount alone must do it.
  MemoryParams p;
  p.max_age_steps = 1000;
  MemoryBuffer b = random_buffer(g, rng, p);
  // Include the most confident cell possible.
  GridBuilder gb(b.grid);
  gb.row(0, 0) << 1.0, 0, 0, 0, 0, 0;
  b.grid = std::move(gb).build();
  for (int s = 0; s < n - 1; ++s) b = age(b);
  CHECK(1.0 - b.grid.omega(0, 0) >= 0.01);  // one step short is not enough
  b = age(b);
  for (int i = 0; i < g.cell_count(); ++i) REQUIRE(1.0 - b.grid.cells()(i, kOmega) < 0.01);

  // Default saturation makes cells vacuous at max age.
  MemoryBuffer d = random_buffer(g, rng);
  for (int s = 0; s < d.params.max_age_steps; ++s) d = age(d);
  for (int i = 0; i < g.cell_count(); ++i) {
    REQUIRE(d.grid.cells()(i, kOmega) == 1.0);
    REQUIRE(d.ages[i] == d.params.max_age_steps);
  }
}

TEST_CASE("one ageing step discounts by gamma") {
  const GridGeometry g = GridGeometry::with_size(4, 4);
  MemoryBuffer b(g);
  GridBuilder gb(g);
  gb.row(1, 2) << 0.5, 0.3, 0, 0, 0, 0.2;
  b.grid = std::move(gb).build();
  b.ages[1 * 4 + 2] = 0;
  const MemoryBuffer a = age(b);
  CHECK(a.grid.mass(1, 2, 0) == doctest::Approx(0.45));
  CHECK(a.grid.mass(1, 2, 1) == doctest::Approx(0.27));
  CHECK(a.grid.omega(1, 2) == doctest::Approx(0.28));
  CHECK(a.ages[1 * 4 + 2] == 1);
  CHECK(a.ages[0] == b.params.max_age_steps);
}

TEST_CASE("integrate fuses and resets ages of observed cells") {
  const GridGeometry g = GridGeometry::with_size(3, 3);
  MemoryBuffer b(g);
  b.ages.setConstant(7);
  GridBuilder gb(g);
  gb.row(0, 0) << 0.99, 0, 0, 0, 0, 0.01;
  gb.row(1, 1) << 0, 0, 0, 0.5, 0, 0.5;
  const SemanticGrid obs = std::move(gb).build();
  const auto [next, fused] = integrate(b, obs);
  CHECK(fused.cells() == fuse_grids(b.grid, obs).cells());
  CHECK(next.grid.cells() == fused.cells());
  CHECK(next.ages[0] == 0);
  CHECK(next.ages[4] == 0);
  CHECK(next.ages[1] == 7);

  CHECK_THROWS_AS(integrate(b, SemanticGrid(GridGeometry::with_size(3, 4))), ParameterError);
}

TEST_CASE("memory files round trip") {
  std::mt19937_64 rng(5);
  const MemoryBuffer b = random_buffer(GridGeometry::with_size(8, 10), rng);
  const auto path = (std::filesystem::temp_directory_path() / "coopgrid_memory_test.cgrid").string();
  save_memory(path, b);
  const MemoryBuffer l = load_memory(path);
  CHECK(l.grid.approx_equal(b.grid, 1e-6));  // masses are stored as float32
  CHECK((l.ages == b.ages).all());
  std::filesystem::remove(path + ".ages.csv");
  CHECK_THROWS_AS(load_memory(path), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("memory parameters are validated") {
  MemoryParams p;
  p.age_gamma = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.max_age_steps = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.observed_omega = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
