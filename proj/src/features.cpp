#include "coopgrid/features.hpp"

#include "coopgrid/errors.hpp"

namespace coopgrid {

Eigen::VectorXd average_pool(const SemanticGrid& g, int blocks_r, int blocks_c, int channel) {
  if (blocks_r < 1 || blocks_c < 1 || blocks_r > g.height() || blocks_c > g.width()) {
    throw ParameterError("pooling block counts must lie in [1, grid size]", "average_pool");
  }
  if (channel >= kNumChannels) throw ParameterError("no such channel", "average_pool");
  const int c0 = channel < 0 ? 0 : channel;
  const int nc = channel < 0 ? kNumChannels : 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nc) * blocks_r * blocks_c);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(blocks_r) * blocks_c);
  const auto& cells = g.cells();
  for (int r = 0; r < g.height(); ++r) {
    const int br = r * blocks_r / g.height();
    for (int c = 0; c < g.width(); ++c) {
      const int b = br * blocks_c + c * blocks_c / g.width();
      counts[b] += 1.0;
      for (int k = 0; k < nc; ++k) out[k * blocks_r * blocks_c + b] += cells(g.index(r, c), c0 + k);
    }
  }
  for (int k = 0; k < nc; ++k) out.segment(k * blocks_r * blocks_c, blocks_r * blocks_c).array() /= counts.array();
  return out;
}

Eigen::VectorXd pool_by(const SemanticGrid& g, int factor) {
  if (factor < 1) throw ParameterError("pooling factor must be >= 1", "pool_by");
  return average_pool(g, (g.height() + factor - 1) / factor, (g.width() + factor - 1) / factor);
}

}  // namespace coopgrid
