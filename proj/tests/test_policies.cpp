#include "coopgrid/errors.hpp"
#include "coopgrid/features.hpp"
#include "coopgrid/policies.hpp"

#include "doctest.h"

#include <filesystem>
#include <random>

using namespace coopgrid;

namespace {

SemanticGrid known_grid(const GridGeometry& g) {
  GridBuilder b(g);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) b.row(r, c) << 0, 0, 0, 0.99, 0, 0.01;
  }
  return std::move(b).build();
}

}  // namespace

TEST_CASE("candidate lattice") {
  const GridGeometry g;
  const auto cands = candidate_lattice(g);
  REQUIRE(cands.size() == 385);
  CHECK(cands.back().box.empty());
  for (std::size_t i = 0; i + 1 < cands.size(); ++i) {
    REQUIRE(cands[i].action.valid());
    REQUIRE_FALSE(cands[i].box.empty());
    REQUIRE(cands[i].box == cells_of(cands[i].action, g.height, g.width));
  }
  CHECK(cands[3].box == CellBox{0, 0, 80, 120});
  CHECK_THROWS_AS(candidate_lattice(g, 1, 12), ParameterError);
}

TEST_CASE("select_best breaks ties by area then position") {
  std::vector<Candidate> c{{{}, {5, 5, 2, 2}}, {{}, {1, 9, 2, 2}}, {{}, {0, 0, 3, 3}}, {{}, {1, 3, 2, 2}}};
  CHECK(select_best(c, {1.0, 1.0, 1.0, 1.0}) == 3);
  CHECK(select_best(c, {1.0, 1.0, 2.0, 1.0}) == 2);
  CHECK(select_best(c, {0.0, 1.0, 0.0, 0.5}) == 1);
  CHECK_THROWS_AS(select_best({}, {}), ParameterError);
}

TEST_CASE("random policy") {
  std::mt19937_64 a(9), b(9);
  const GridGeometry g;
  const SemanticGrid k(g);
  const SpatialFilterGrid s = build_spatial_filter(RewardParams::defaults(), g);
  const RewardParams p = RewardParams::defaults();
  const PolicyInput in{k, s, p};
  double size = 0;
  int none = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto x = random_policy(in, a), y = random_policy(in, b);
    REQUIRE(x.action == y.action);
    REQUIRE(x.action.valid());
    if (x.action == BoundingBoxAction::none()) ++none;
    size += cells_of(x.action, g.height, g.width).count() / double(g.cell_count());
  }
  CHECK(none / double(n) == doctest::Approx(0.5).epsilon(0.03));
  // Half of the requests are empty; the others cover E[w h] = 1/4 of the grid.
  CHECK(100.0 * size / n == doctest::Approx(12.5).epsilon(0.08));
}

TEST_CASE("greedy on a fully known grid takes the best-scoring box") {
  const GridGeometry g;
  const RewardParams p = RewardParams::defaults();
  const SpatialFilterGrid s = build_spatial_filter(p, g);
  const SemanticGrid k = known_grid(g);
  const auto cands = candidate_lattice(g);
  const double rbar = uniform_prior_rbar(p);
  const PolicyInput in{k, s, p};
  const auto scores = greedy_scores(in, cands, rbar);
  const auto out = greedy_ignorance_policy(in, cands, rbar);

  // Exhaustive restatement: value of a box is its S-weighted ignorance minus costs.
  double best = -1e300;
  CellBox best_box;
  for (const auto& c : cands) {
    double v = p.penalty;
    if (!c.box.empty()) {
      v = -p.k_min_cells * (1 - p.eta) * p.r_min;
      for (int r = c.box.row0; r < c.box.row0 + c.box.rows; ++r) {
        for (int col = c.box.col0; col < c.box.col0 + c.box.cols; ++col) {
          v += s.at(r, col) * 0.01 * 0.01 * rbar - p.eta * p.r_min;
        }
      }
    }
    if (v > best + 1e-9 || (std::abs(v - best) <= 1e-9 && std::tuple(c.box.count(), c.box.row0, c.box.col0) <
                                                             std::tuple(best_box.count(), best_box.row0,
                                                                        best_box.col0))) {
      best = v;
      best_box = c.box;
    }
  }
  CHECK(cells_of(out.action, g.height, g.width) == best_box);
  CHECK(out.score == doctest::Approx(best));
  // Nearly nothing to learn: the smallest lattice box beats staying silent.
  CHECK(best_box.count() == 11 * 16);
  CHECK(*std::max_element(scores.begin(), scores.end()) == out.score);
}

TEST_CASE("greedy covers a single unknown region") {
  const GridGeometry g;
  const RewardParams p = RewardParams::defaults();
  const SpatialFilterGrid s = build_spatial_filter(p, g);
  const auto cands = candidate_lattice(g);
  // Unknown patch exactly equal to a lattice candidate, in the cone.
  const Candidate& target = cands[(5 * 12 + 5) * 4 + 1];  // anchor (5,5), size 1/4
  GridBuilder b(known_grid(g));
  for (int r = target.box.row0; r < target.box.row0 + target.box.rows; ++r) {
    for (int c = target.box.col0; c < target.box.col0 + target.box.cols; ++c) b.set_vacuous(r, c);
  }
  const SemanticGrid k = std::move(b).build();
  const auto out = greedy_ignorance_policy({k, s, p}, cands, 1.0);
  CHECK(cells_of(out.action, g.height, g.width) == target.box);
}

TEST_CASE("greedy argmax is invariant to positive rescaling") {
  const GridGeometry g;
  RewardParams p = RewardParams::defaults();
  const SpatialFilterGrid s = build_spatial_filter(p, g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridBuilder b(g);
  for (int i = 0; i < g.cell_count(); ++i) {
    const double om = u(rng);
    b.cells().row(i) << (1 - om) / 2, 0, 0, (1 - om) / 2, 0, om;
  }
  const SemanticGrid k = std::move(b).build();
  const auto cands = candidate_lattice(g);
  const double rbar = 0.2;
  const auto base = greedy_ignorance_policy({k, s, p}, cands, rbar);
  // Scaling rbar, r_min (through r_obj) and the penalty by the same constant.
  RewardParams q = p;
  const double c = 3.5;
  q.r_obj *= c;
  q.r_min *= c;
  q.penalty *= c;
  const auto scaled = greedy_ignorance_policy({k, s, q}, cands, rbar * c);
  CHECK(scaled.action == base.action);
  CHECK(scaled.score == doctest::Approx(base.score * c));
}

TEST_CASE("oracle picks the true best candidate") {
  const EnvConfig cfg;
  Environment env(cfg, 17);
  const auto cands = candidate_lattice(cfg.geometry);
  for (int t = 0; t < 8; ++t) {
    const StepPreview peek = env.preview();
    const auto scores = oracle_scores(peek, cands, cfg.geometry, cfg.reward);
    const PolicyInput in{env.knowledge(), env.filter(), cfg.reward};
    const auto out = oracle_greedy_policy(in, peek, cands);
    for (double s : scores) REQUIRE(out.score >= s);
    // The score is the reward the environment then pays.
    if (t % 2 == 0) {
      for (std::size_t i = 0; i < cands.size(); i += 37) {
        Environment probe = env;
        REQUIRE(probe.step(cands[i].action).reward == doctest::Approx(scores[i]).epsilon(1e-10).scale(1.0));
      }
    }
    const StepOutcome o = env.commit(peek, out.action);
    REQUIRE(o.reward == doctest::Approx(out.score).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("oracle never loses by enlarging its candidate set") {
  const EnvConfig cfg;
  Environment env(cfg, 23);
  const auto small = candidate_lattice(cfg.geometry, 4, 6, {0.25, 1.0});
  const auto large = candidate_lattice(cfg.geometry, 8, 12);
  std::vector<Candidate> both = small;
  both.insert(both.end(), large.begin(), large.end());
  for (int t = 0; t < 6; ++t) {
    const StepPreview peek = env.preview();
    const PolicyInput in{env.knowledge(), env.filter(), cfg.reward};
    const double a = oracle_greedy_policy(in, peek, small).score;
    const double b = oracle_greedy_policy(in, peek, both).score;
    REQUIRE(b >= a);
    env.commit(peek, BoundingBoxAction::none());
  }
}

TEST_CASE("fully known world leaves the oracle nothing to gain") {
  // Broadcasting makes G~ nearly complete; the next preview's full-grant
  // densities are then the per-cell cost alone, up to stale moving agents.
  const GridGeometry g;
  const RewardParams p = RewardParams::defaults();
  StepPreview peek;
  peek.full_density = Eigen::ArrayXd::Constant(g.cell_count(), -p.eta * p.r_min);
  const auto cands = candidate_lattice(g);
  const SemanticGrid k = known_grid(g);
  const SpatialFilterGrid s = build_spatial_filter(p, g);
  const auto out = oracle_greedy_policy({k, s, p}, peek, cands);
  // Smallest box costs (K (1-eta) + 176 eta) r_min, well under the penalty.
  CHECK(cells_of(out.action, g.height, g.width).count() == 176);
  CHECK(out.score == doctest::Approx(-(36 * 0.7 + 176 * 0.3) * p.r_min));
  // With a steep enough per-cell cost the empty box wins.
  peek.full_density.setConstant(-1.0);
  CHECK(oracle_greedy_policy({k, s, p}, peek, cands).action == BoundingBoxAction::none());
}

TEST_CASE("affine policy parameters and checkpoints") {
  AffinePolicy p = AffinePolicy::zeros();
  CHECK(p.num_features() == 24);
  CHECK(p.num_params() == 125);
  // Gate at exactly 0.5 does not request.
  CHECK(p.act(Eigen::VectorXd::Zero(24)) == BoundingBoxAction::none());

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd theta(p.num_params());
  for (auto& x : theta) x = n(rng);
  const AffinePolicy q = AffinePolicy::unflatten(theta);
  CHECK(q.flatten() == theta);
  CHECK_THROWS_AS(AffinePolicy::unflatten(theta.head(10)), ParameterError);

  const auto path = (std::filesystem::temp_directory_path() / "coopgrid_policy_test.ckpt").string();
  q.to_checkpoint().save(path);
  const AffinePolicy r = AffinePolicy::from_checkpoint(Checkpoint::load(path));
  CHECK(r.flatten() == theta);
  std::filesystem::remove(path);

  // Features are block means of Omega.
  const GridGeometry g;
  const Eigen::VectorXd f = q.features(SemanticGrid(g));
  CHECK(f.size() == 24);
  CHECK((f.array() == 1.0).all());
  const BoundingBoxAction a = q.act(f);
  CHECK(a.valid());
}

TEST_CASE("make_policy") {
  const EnvConfig cfg;
  for (const auto& name : policy_names()) {
    if (name == "cem") {
      CHECK_THROWS_AS(make_policy(name, {}, cfg), ConfigError);
      continue;
    }
    auto p = make_policy(name, {}, cfg);
    CHECK(p->id() == name);
  }
  CHECK_THROWS_AS(make_policy("ppo", {}, cfg), ConfigError);
}

TEST_CASE("CEM: zero generations, determinism, improvement") {
  EnvConfig env;
  env.scenario.cars = 4;
  env.scenario.pedestrians = 4;
  CemConfig cfg;
  cfg.population = 8;
  cfg.generations = 0;
  cfg.episodes = 1;
  cfg.episode_steps = 5;
  cfg.seed = 1;
  const AffinePolicy init = AffinePolicy::zeros();
  const CemResult zero = train_cem(env, cfg, &init);
  CHECK(zero.policy.flatten() == init.flatten());
  CHECK(zero.trace.empty());

  cfg.generations = 3;
  const CemResult a = train_cem(env, cfg, &init);
  const CemResult b = train_cem(env, cfg, &init);
  REQUIRE(a.trace.size() == 3);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].elite_mean_return == b.trace[i].elite_mean_return);
    CHECK(a.trace[i].mean_std == b.trace[i].mean_std);
  }
  CHECK(a.policy.flatten() == b.policy.flatten());
  // Best-of-run is never worse than the initialization on its training seeds.
  const double init_return = evaluate_affine(init, env, cfg.seed * 1000003ULL + 500000ULL, cfg.episodes, cfg.episode_steps);
  CHECK(a.best_return >= init_return);

  cfg.population = 1;
  CHECK_THROWS_AS(train_cem(env, cfg), ParameterError);
}
