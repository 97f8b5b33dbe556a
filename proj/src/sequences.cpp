#include "coopgrid/sequences.hpp"

#include "coopgrid/errors.hpp"
#include "coopgrid/features.hpp"

namespace coopgrid {

ModelDims grid_dims(const GridGeometry& g, int factor, int belief_hidden, int head_hidden) {
  if (factor < 1) throw ParameterError("pooling factor must be >= 1", "grid_dims");
  const int blocks = ((g.height + factor - 1) / factor) * ((g.width + factor - 1) / factor);
  ModelDims d;
  d.x = d.y = d.m = kNumChannels * blocks;
  d.v = 3;
  d.c = 4;
  d.a = 4;
  d.belief_hidden = belief_hidden;
  d.head_hidden = head_hidden;
  return d;
}

Sequence rollout_sequence(const EnvConfig& cfg, Policy& policy, int T, std::uint64_t seed, int factor) {
  if (T < 1) throw ParameterError("T must be >= 1", "rollout_sequence");
  Environment env(cfg, seed);
  Sequence s;
  for (int k = 1; k <= T; ++k) {
    const StepPreview peek = env.preview();
    const BoundingBoxAction a = policy.act(env, peek).action;
    const StepOutcome out = env.commit(peek, a);
    const Motion& mv = out.obs.motion;
    const Controls& ct = out.obs.controls;
    s.x.push_back(pool_by(out.g_next, factor));
    s.y.push_back(pool_by(out.obs.complete, factor));
    s.v.push_back((Eigen::VectorXd(3) << mv.dx, mv.dy, mv.dtheta).finished());
    s.c.push_back((Eigen::VectorXd(4) << ct.acceleration, ct.steering, ct.dir_x, ct.dir_y).finished());
    if (k >= 2) {
      s.a.push_back((Eigen::VectorXd(4) << a.u, a.v, a.w, a.h).finished());
      s.m.push_back(pool_by(extract_mask(out.obs.complete, a), factor));
    }
  }
  return s;
}

}  // namespace coopgrid
