#pragma once

#include "coopgrid/evidential_grid.hpp"

#include <Eigen/Core>

namespace coopgrid {

/// Block-average pooling of one channel (or all when channel < 0) into
/// blocks_r x blocks_c blocks. Row r falls in block r * blocks_r / height
/// (columns likewise). Output is channel-major, then row-major over blocks.
Eigen::VectorXd average_pool(const SemanticGrid& g, int blocks_r, int blocks_c, int channel = -1);

/// All channels pooled into ceil(H/factor) x ceil(W/factor) blocks.
Eigen::VectorXd pool_by(const SemanticGrid& g, int factor);

}  // namespace coopgrid
