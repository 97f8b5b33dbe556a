#include "coopgrid/environment.hpp"

#include "coopgrid/errors.hpp"

namespace coopgrid {

EnvConfig EnvConfig::from_config(const Config& cfg) {
  EnvConfig e;
  e.scenario = ScenarioConfig::from_config(cfg);
  e.reward = RewardParams::from_config(cfg, e.geometry.meters_per_cell);
  e.memory = MemoryParams::from_config(cfg);
  e.episode_steps = cfg.get_int("episode_steps", e.episode_steps);
  if (e.episode_steps < 1) throw ConfigError("episode_steps must be >= 1", "episode_steps");
  return e;
}

std::vector<std::string_view> EnvConfig::keys() {
  auto k = ScenarioConfig::keys();
  for (auto s : RewardParams::keys()) k.push_back(s);
  for (auto s : {"memory_gamma", "memory_max_age", "memory_observed_omega", "episode_steps"}) k.push_back(s);
  return k;
}

Environment::Environment(const EnvConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), filter_(build_spatial_filter(cfg.reward, cfg.geometry)), memory_(cfg.geometry, cfg.memory) {
  std::tie(world_, ego_) = world_init(seed, cfg_.scenario);
  obs_ = observe(world_, ego_, cfg_.geometry);
  memory_ = integrate(memory_, obs_.partial).first;
}

StepPreview Environment::preview() const {
  StepPreview p;
  std::tie(p.world, p.ego) = world_step(world_, ego_);
  p.obs = observe(p.world, p.ego, cfg_.geometry);
  auto mem = age(transform(memory_, p.obs.motion));
  std::tie(p.memory, p.g_tilde) = integrate(mem, p.obs.partial);
  const SemanticGrid full = fuse_grids(p.g_tilde, p.obs.complete);
  p.full_gains = class_gains(full, p.g_tilde);
  p.full_density = reward_density(full, p.g_tilde, filter_, cfg_.reward);
  return p;
}

StepOutcome Environment::commit(StepPreview p, const BoundingBoxAction& a) {
  const GridGeometry& g = cfg_.geometry;
  StepOutcome out;
  out.action = a;
  out.box = cells_of(a, g.height, g.width);

  // Cells outside the box are fused with vacuous masses, which leaves them
  // unchanged, so only the box is touched.
  SemanticGrid g_next = p.g_tilde;
  if (!out.box.empty()) {
    GridBuilder b(p.g_tilde);
    for (int r = out.box.row0; r < out.box.row0 + out.box.rows; ++r) {
      for (int c = out.box.col0; c < out.box.col0 + out.box.cols; ++c) {
        const int i = r * g.width + c;
        MassVector fused;
        detail::fuse_rows(p.g_tilde.cells().row(i), p.obs.complete.cells().row(i), fused);
        b.cells().row(i) = fused;
      }
    }
    g_next = std::move(b).build();
  }

  const Eigen::ArrayXd density = reward_density(g_next, p.g_tilde, filter_, cfg_.reward);
  out.reward = reward(out.box, density, g, cfg_.reward);
  const ClassGains gains = class_gains(g_next, p.g_tilde);
  for (int k = 0; k < kNumClasses; ++k) {
    out.gained[k] = gains.col(k).sum();
    out.achievable[k] = p.full_gains.col(k).sum();
  }
  out.mean_omega = g_next.cells().col(kOmega).mean();

  // Memory absorbs G_{t+1}; ages reset where the grant carried information.
  MemoryBuffer mem = std::move(p.memory);
  if (!out.box.empty()) mem = integrate(mem, extract_mask(p.obs.complete, out.box)).first;
  mem.grid = g_next;

  world_ = std::move(p.world);
  ego_ = std::move(p.ego);
  obs_ = p.obs;
  memory_ = std::move(mem);
  out.obs = std::move(p.obs);
  out.g_tilde = std::move(p.g_tilde);
  out.g_next = std::move(g_next);
  return out;
}

StepOutcome Environment::step(const BoundingBoxAction& a) { return commit(preview(), a); }

}  // namespace coopgrid
