#pragma once

#include "coopgrid/environment.hpp"
#include "coopgrid/policies.hpp"
#include "coopgrid/variational.hpp"

#include <cstdint>

namespace coopgrid {

/// Sizes of pooled-grid sequences: x, y and m are 6-channel grids pooled by
/// `factor`, v = (dx, dy, dtheta), c = (acceleration, steering, dir_x, dir_y),
/// a = (u, v, w, h).
ModelDims grid_dims(const GridGeometry& g, int factor = 8, int belief_hidden = 16, int head_hidden = 16);

/// Runs `policy` for T steps. x_k is the pooled knowledge G_k, y_k the pooled
/// complete grid, m_k the pooled grant of the step-k request.
Sequence rollout_sequence(const EnvConfig& cfg, Policy& policy, int T, std::uint64_t seed, int factor = 8);

}  // namespace coopgrid
