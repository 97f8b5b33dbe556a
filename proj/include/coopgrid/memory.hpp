#pragma once

#include "coopgrid/evidential_grid.hpp"
#include "coopgrid/microworld.hpp"

#include <Eigen/Core>

#include <string>

namespace coopgrid {

struct MemoryParams {
  double age_gamma = 0.9;
  int max_age_steps = 20;
  /// A cell counts as observed when the incoming grid's Omega is below this.
  double observed_omega = 0.99;

  static MemoryParams from_config(const Config& cfg);
  void validate() const;
};

/// Remembered grid in the current ego frame plus a per-cell age counter
/// (steps since the cell was last observed, saturating at max_age_steps).
struct MemoryBuffer {
  SemanticGrid grid;
  Eigen::ArrayXi ages;
  MemoryParams params;

  MemoryBuffer() : MemoryBuffer(GridGeometry{}) {}
  explicit MemoryBuffer(const GridGeometry& g, const MemoryParams& p = {});
};

/// Re-expresses the buffer in the ego frame after `motion`. Every non-vacuous
/// cell is moved to the nearest destination cell (round half up); collisions
/// are fused and keep the youngest age; cells leaving the grid are dropped.
MemoryBuffer transform(const MemoryBuffer& buf, const Motion& motion);

/// Discounts every cell by age_gamma and increments ages; cells reaching
/// max_age_steps become vacuous.
MemoryBuffer age(const MemoryBuffer& buf);

/// Fuses `g` into the buffer. Returns the updated buffer (holding the fused
/// grid, ages reset where `g` was observed) and the fused grid itself.
std::pair<MemoryBuffer, SemanticGrid> integrate(const MemoryBuffer& buf, const SemanticGrid& g);

/// Grid file at `path` plus an age table at `path + ".ages.csv"`.
void save_memory(const std::string& path, const MemoryBuffer& buf);
MemoryBuffer load_memory(const std::string& path, const MemoryParams& params = {});

}  // namespace coopgrid
