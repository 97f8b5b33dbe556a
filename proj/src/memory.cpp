#include "coopgrid/memory.hpp"

#include "coopgrid/errors.hpp"
#include "coopgrid/grid_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace coopgrid {

MemoryParams MemoryParams::from_config(const Config& cfg) {
  MemoryParams p;
  p.age_gamma = cfg.get_double("memory_gamma", p.age_gamma);
  p.max_age_steps = cfg.get_int("memory_max_age", p.max_age_steps);
  p.observed_omega = cfg.get_double("memory_observed_omega", p.observed_omega);
  p.validate();
  return p;
}

void MemoryParams::validate() const {
  if (!(age_gamma >= 0.0 && age_gamma <= 1.0)) throw ConfigError("memory_gamma must lie in [0,1]");
  if (max_age_steps < 1) throw ConfigError("memory_max_age must be >= 1");
  if (!(observed_omega > 0.0 && observed_omega <= 1.0)) {
    throw ConfigError("memory_observed_omega must lie in (0,1]");
  }
}

MemoryBuffer::MemoryBuffer(const GridGeometry& g, const MemoryParams& p)
    : grid(g), ages(Eigen::ArrayXi::Constant(g.cell_count(), p.max_age_steps)), params(p) {
  params.validate();
}

MemoryBuffer transform(const MemoryBuffer& buf, const Motion& motion) {
  const GridGeometry& g = buf.grid.geometry();
  GridBuilder out(g);
  Eigen::ArrayXi ages = Eigen::ArrayXi::Constant(g.cell_count(), buf.params.max_age_steps);
  std::vector<bool> filled(static_cast<std::size_t>(g.cell_count()), false);

  const double c = std::cos(motion.dtheta), s = std::sin(motion.dtheta);
  const double m = g.meters_per_cell;
  const auto& cells = buf.grid.cells();
  for (int r = 0; r < g.height; ++r) {
    for (int col = 0; col < g.width; ++col) {
      const int src = r * g.width + col;
      if (cells(src, kOmega) >= 1.0) continue;
      // Old ego frame -> new ego frame: p' = R(-dtheta) (p - d).
      const double f = (g.ego_row - r) * m - motion.dx;
      const double l = (g.ego_col - col) * m - motion.dy;
      const double f2 = c * f + s * l;
      const double l2 = -s * f + c * l;
      const int r2 = static_cast<int>(std::floor(g.ego_row - f2 / m + 0.5));
      const int c2 = static_cast<int>(std::floor(g.ego_col - l2 / m + 0.5));
      if (r2 < 0 || r2 >= g.height || c2 < 0 || c2 >= g.width) continue;
      const int dst = r2 * g.width + c2;
      if (!filled[static_cast<std::size_t>(dst)]) {
        out.cells().row(dst) = cells.row(src);
        ages[dst] = buf.ages[src];
        filled[static_cast<std::size_t>(dst)] = true;
      } else {
        MassVector fused;
        detail::fuse_rows(MassVector(out.cells().row(dst)), cells.row(src), fused);
        out.cells().row(dst) = fused;
        ages[dst] = std::min(ages[dst], buf.ages[src]);
      }
    }
  }
  MemoryBuffer next(g, buf.params);
  next.grid = std::move(out).build();
  next.ages = std::move(ages);
  return next;
}

MemoryBuffer age(const MemoryBuffer& buf) {
  MemoryBuffer next = buf;
  GridBuilder b(buf.grid);
  const int max_age = buf.params.max_age_steps;
  for (int i = 0; i < buf.grid.size(); ++i) {
    next.ages[i] = std::min(buf.ages[i] + 1, max_age);
    auto row = b.cells().row(i);
    if (next.ages[i] >= max_age) {
      row.setZero();
      row[kOmega] = 1.0;
    } else {
      detail::discount_row(row, buf.params.age_gamma);
    }
  }
  next.grid = std::move(b).build();
  return next;
}

std::pair<MemoryBuffer, SemanticGrid> integrate(const MemoryBuffer& buf, const SemanticGrid& g) {
  if (!(buf.grid.geometry() == g.geometry())) {
    throw ParameterError("memory and perception grids differ in geometry", "integrate");
  }
  MemoryBuffer next = buf;
  next.grid = fuse_grids(buf.grid, g);
  for (int i = 0; i < g.size(); ++i) {
    if (g.cells()(i, kOmega) < buf.params.observed_omega) next.ages[i] = 0;
  }
  SemanticGrid fused = next.grid;
  return {std::move(next), std::move(fused)};
}

void save_memory(const std::string& path, const MemoryBuffer& buf) {
  save_grid(path, buf.grid);
  std::ofstream out(path + ".ages.csv");
  if (!out) throw IoError("cannot write age table", path + ".ages.csv");
  const GridGeometry& g = buf.grid.geometry();
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) out << (c ? "," : "") << buf.ages[r * g.width + c];
    out << '\n';
  }
}

MemoryBuffer load_memory(const std::string& path, const MemoryParams& params) {
  SemanticGrid grid = load_grid(path);
  MemoryBuffer buf(grid.geometry(), params);
  buf.grid = std::move(grid);
  std::ifstream in(path + ".ages.csv");
  if (!in) throw IoError("cannot read age table", path + ".ages.csv");
  const GridGeometry& g = buf.grid.geometry();
  std::string line;
  for (int r = 0; r < g.height; ++r) {
    if (!std::getline(in, line)) throw IoError("age table has too few rows", path + ".ages.csv");
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < g.width; ++c) {
      if (!std::getline(ss, cell, ',')) throw IoError("age table row too short", path + ".ages.csv");
      try {
        buf.ages[r * g.width + c] = std::stoi(cell);
      } catch (const std::exception&) {
        throw IoError("malformed age entry '" + cell + "'", path + ".ages.csv");
      }
    }
  }
  return buf;
}

}  // namespace coopgrid
