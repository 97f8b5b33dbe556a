// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "coopgrid/environment.hpp"
#include "coopgrid/evidential_grid.hpp"
#include "coopgrid/harness.hpp"
#include "coopgrid/memory.hpp"
#include "coopgrid/policies.hpp"
#include "coopgrid/request_mdp.hpp"
#include "coopgrid/variational_checks.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace coopgrid;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string pct(double x) { return fmt(x, 4) + "%"; }

Verdict fusion() {
  std::mt19937_64 rng(101);
  int bad_valid = 0, bad_comm = 0, bad_omega = 0, bad_id = 0, bad_oracle = 0;
  for (int i = 0; i < 10000; ++i) {
    const MassFunction a = oracle::random_mass(rng), b = oracle::random_mass(rng);
    const MassFunction f = fuse(a, b);
    if (!oracle::valid(f)) ++bad_valid;
    if (!fuse(b, a).approx_equal(f, 1e-12)) ++bad_comm;
    if (f.omega() != a.omega() * b.omega()) ++bad_omega;
    if (!fuse(a, vacuous()).approx_equal(a, 1e-12)) ++bad_id;
    const auto o = oracle::fuse(oracle::to_arr(a), oracle::to_arr(b));
    for (int k = 0; k < 6; ++k) {
      if (std::abs(o[k] - f[k]) > 1e-9) {
        ++bad_oracle;
        break;
      }
    }
  }
  const MassFunction w = fuse(MassFunction(MassVector((MassVector() << 0.6, 0, 0, 0, 0, 0.4).finished())),
                              MassFunction(MassVector((MassVector() << 0, 0.5, 0, 0, 0, 0.5).finished())));
  const oracle::Arr expect{0.48, 0.32, 0, 0, 0, 0.2};
  double worked = 0.0;
  for (int k = 0; k < 6; ++k) worked = std::max(worked, std::abs(w[k] - expect[k]));
  const int bad = bad_valid + bad_comm + bad_omega + bad_id + bad_oracle;
  return {bad == 0 && worked <= 1e-9, "10^4 pairs, violations valid/comm/omega/identity/oracle = " +
                                          std::to_string(bad_valid) + "/" + std::to_string(bad_comm) + "/" +
                                          std::to_string(bad_omega) + "/" + std::to_string(bad_id) + "/" +
                                          std::to_string(bad_oracle) + ", worked example error " + fmt(worked)};
}

Verdict spatial_filter() {
  const GridGeometry g;
  const RewardParams p = RewardParams::defaults();
  const SpatialFilterGrid s = build_spatial_filter(p, g);
  // On the ego column S_L = 1, so S there is S_F alone.
  const double far = s.at(0, g.ego_col);
  bool ahead = true;
  for (int r = 0; r <= g.ego_row; ++r) {
    const double frac = double(g.ego_row - r) / g.ego_row;
    const double sf = 1.0 - p.beta_f / (1.0 - p.alpha) * std::max(0.0, frac - p.alpha);
    ahead = ahead && std::abs(s.at(r, g.ego_col) - sf) <= 1e-12;
  }
  bool sideways = true;
  for (int c = 0; c < g.width; ++c) {
    if (c != g.ego_col) sideways = sideways && std::abs(s.at(g.ego_row, c)) <= 1e-12;
  }
  std::ifstream in(std::string(COOPGRID_TEST_DATA) + "/spatial_filter_80x120.csv");
  double worst = in ? 0.0 : INFINITY;
  int rows = 0, cells = 0;
  std::string line;
  while (in && std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      if (rows < g.height && c < g.width) worst = std::max(worst, std::abs(std::stod(cell) - s.at(rows, c)));
      ++c;
      ++cells;
    }
    ++rows;
  }
  const bool golden = rows == g.height && cells == g.cell_count() && worst <= 1e-12;
  return {std::abs(far - 0.2) <= 1e-12 && ahead && sideways && golden,
          "S_F(far) = " + fmt(far, 12) + ", ahead " + (ahead ? "ok" : "bad") + ", sideways " +
              (sideways ? "ok" : "bad") + ", golden max error " + fmt(worst)};
}

Verdict reward_oracle() {
  const GridGeometry g;
  const RewardParams p = RewardParams::defaults();
  const SpatialFilterGrid s = build_spatial_filter(p, g);
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SemanticGrid g_tilde(g), complete(g);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    if (i % 50 == 0) {
      g_tilde = oracle::random_grid(g, rng, u(rng));
      complete = oracle::random_grid(g, rng, 0.0);
    }
    BoundingBoxAction a{u(rng), u(rng), u(rng), u(rng)};
    if (i % 10 == 0) a.w = a.h = 0.0;
    const SemanticGrid g_next = fuse_grids(g_tilde, extract_mask(complete, a));
    const double fast = reward(a, reward_density(g_next, g_tilde, s, p), g, p);
    worst = std::max(worst, std::abs(fast - oracle::reward(g_tilde, complete, a, p)));
  }
  // Break-even: K cells of full valuation, each gaining all of its mass on road.
  const int side = static_cast<int>(std::lround(std::sqrt(p.k_min_cells)));
  const CellBox box{g.ego_row - 9, g.ego_col - side / 2, side, p.k_min_cells / side};
  GridBuilder b(g);
  b.cells().setZero();
  b.cells().col(channel(SemanticClass::Road)).setOnes();
  const SemanticGrid road = std::move(b).build();
  const SemanticGrid vac(g);
  const double R = box.count() == p.k_min_cells
                       ? reward(box, reward_density(fuse_grids(vac, extract_mask(road, box)), vac, s, p), g, p)
                       : INFINITY;
  return {worst <= 1e-9 && std::abs(R) < 1e-9,
          "10^3 pairs max error " + fmt(worst) + ", break-even |R| = " + fmt(std::abs(R))};
}

std::vector<EpisodeRecord> episodes(const std::string& policy, int n, int steps) {
  const EnvConfig cfg;
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto seed = static_cast<std::uint64_t>(i);
    PolicyOptions opts;
    opts.seed = seed ^ 0x9e3779b97f4a7c15ULL;
    auto p = make_policy(policy, opts, cfg);
    out.push_back(run_episode(cfg, *p, steps, seed));
  }
  return out;
}

constexpr int kEpisodes = 200;
constexpr int kSteps = 50;

// Shared by criteria 4 and 5.
const std::vector<EpisodeRecord>& random_runs() {
  static const auto runs = episodes("random", kEpisodes, kSteps);
  return runs;
}

Verdict random_size() {
  const double size = info_gain_metrics(random_runs()).request_size_pct;
  return {size >= 11.5 && size <= 13.5, "mean request size " + pct(size) + " (need 11.5-13.5%)"};
}

double mean_reward(const EpisodeRecord& r) {
  double s = 0.0;
  for (const auto& st : r.steps) s += st.reward;
  return s / static_cast<double>(r.steps.size());
}

Verdict tradeoff() {
  const auto greedy = episodes("greedy", kEpisodes, kSteps);
  const auto oracle_runs = episodes("oracle", kEpisodes, kSteps);
  const MetricsReport mr = info_gain_metrics(random_runs());
  const MetricsReport mg = info_gain_metrics(greedy);
  bool ratios = true;
  std::string detail = "ratio greedy/random";
  for (int k = 0; k < kNumGroups; ++k) {
    const double rr = mr.info_gain_pct[k] / mr.request_size_pct;
    const double rg = mg.info_gain_pct[k] / mg.request_size_pct;
    const double rel = rg / rr;
    ratios = ratios && rel >= 1.5;
    detail += std::string(" ") + std::string(kGroupNames[k]) + "=" + fmt(rel, 3);
  }
  // Paired bootstrap of the per-seed mean reward difference.
  std::vector<double> diff(kEpisodes);
  for (int i = 0; i < kEpisodes; ++i) diff[i] = mean_reward(oracle_runs[i]) - mean_reward(greedy[i]);
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> pick(0, kEpisodes - 1);
  std::vector<double> means(10000);
  for (auto& m : means) {
    double s = 0.0;
    for (int i = 0; i < kEpisodes; ++i) s += diff[pick(rng)];
    m = s / kEpisodes;
  }
  std::sort(means.begin(), means.end());
  const double lower = means[static_cast<std::size_t>(0.025 * means.size())];
  const double observed = std::accumulate(diff.begin(), diff.end(), 0.0) / kEpisodes;
  detail += " (need >= 1.5); oracle - greedy reward " + fmt(observed) + ", 95% lower " + fmt(lower);
  return {ratios && lower >= 0.0, detail};
}

Verdict elbo_bound() {
  const auto cases = elbo_bound_suite(20, 10000, 606);
  int violations = 0, random_cases = 0, exact_cases = 0;
  double slack = INFINITY;
  for (const auto& c : cases) {
    if (!c.holds) ++violations;
    (c.exact_heads ? exact_cases : random_cases)++;
    slack = std::min(slack, (c.mean_loss - c.nll) / c.std_error);
  }
  return {violations == 0 && random_cases == 20 && exact_cases == 20,
          std::to_string(cases.size()) + " cases, " + std::to_string(violations) +
              " violations, smallest (loss - NLL) / SE = " + fmt(slack)};
}

Verdict gradients() {
  const auto cases = gradient_check_suite(50, 707);
  double worst = 0.0;
  std::string what;
  for (const auto& c : cases) {
    if (!(c.rel_error <= worst)) {
      worst = c.rel_error;
      what = c.what;
    }
  }
  return {!cases.empty() && worst <= kGradientTolerance,
          std::to_string(cases.size()) + " checks, worst relative error " + fmt(worst) + " (" + what + ")"};
}

Verdict memory_checks() {
  const int n = static_cast<int>(std::ceil(std::log(0.01) / std::log(0.9)));
  const GridGeometry g;
  std::mt19937_64 rng(808);
  MemoryParams p;
  p.max_age_steps = 1000;  // keep saturation out so the discount alone must do it
  MemoryBuffer b(g, p);
  b.grid = oracle::random_grid(g, rng, 0.1);
  GridBuilder gb(b.grid);
  gb.row(0, 0) << 1.0, 0, 0, 0, 0, 0;
  b.grid = std::move(gb).build();
  b.ages.setZero();  // freshly observed
  MemoryBuffer short_one = b;
  for (int s = 0; s < n - 1; ++s) short_one = age(short_one);
  const double short_belief = 1.0 - short_one.grid.omega(0, 0);
  for (int s = 0; s < n; ++s) b = age(b);
  const double worst_belief = (1.0 - b.grid.cells().col(kOmega).array()).maxCoeff();

  MemoryBuffer m(g);
  m.grid = oracle::random_grid(g, rng, 0.1);
  int mismatches = 0;
  for (const auto& [kf, kl] : std::vector<std::pair<int, int>>{{3, 0}, {0, -5}, {4, 7}, {-2, 3}}) {
    const Motion fwd{kf * g.meters_per_cell, kl * g.meters_per_cell, 0.0};
    const MemoryBuffer back = transform(transform(m, fwd), Motion{-fwd.dx, -fwd.dy, 0.0});
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const int r1 = r + kf, c1 = c + kl;
        if (r1 < 0 || r1 >= g.height || c1 < 0 || c1 >= g.width) continue;
        const int i = r * g.width + c;
        if (back.grid.cells().row(i) != m.grid.cells().row(i)) ++mismatches;
      }
    }
  }
  return {n == 44 && worst_belief < 0.01 && short_belief >= 0.01 && mismatches == 0,
          "n = " + std::to_string(n) + ", max 1 - Omega after n steps " + fmt(worst_belief) + " (n - 1 steps: " +
              fmt(short_belief) + ")" +
              ", interior mismatches after round trip " + std::to_string(mismatches)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("coopgrid_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::string> runs = {
      "--seed 11 --out-dir {} simulate --policy random --episodes 4 --steps 20",
      "--seed 11 --out-dir {} evaluate --policy greedy --episodes 3 --steps 15",
      "--seed 11 --out-dir {} filter-dump",
      "--seed 11 --out-dir {} loss-check --systems 2 --samples 500 --instances 2",
      "--seed 11 --out-dir {} train-cem --population 6 --generations 2 --episodes 1 --steps 5",
  };
  int compared = 0, differing = 0, failed = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    fs::path dirs[2];
    for (int rep = 0; rep < 2; ++rep) {
      dirs[rep] = root / ("cmd" + std::to_string(i) + "_" + std::to_string(rep));
      std::string args = runs[i];
      args.replace(args.find("{}"), 2, dirs[rep].string());
      const std::string cmd = std::string("\"") + COOPGRID_CLI + "\" " + args + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) ++failed;
    }
    if (!fs::exists(dirs[0])) continue;
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      if (e.path().extension() != ".csv") continue;
      ++compared;
      if (slurp(e.path()) != slurp(dirs[1] / e.path().filename())) ++differing;
    }
  }
  fs::remove_all(root);
  return {failed == 0 && compared >= static_cast<int>(runs.size()) && differing == 0,
          std::to_string(compared) + " CSV files compared, " + std::to_string(differing) + " differ, " +
              std::to_string(failed) + " runs failed"};
}

Verdict metric_identities() {
  const auto b = episodes("broadcast", 10, 20);
  const auto s = episodes("silent", 10, 20);
  const MetricsReport mb = info_gain_metrics(b), ms = info_gain_metrics(s);
  bool broadcast = mb.request_size_pct == 100.0;
  for (double x : mb.info_gain_pct) broadcast = broadcast && std::abs(x - 100.0) <= 1e-9;
  bool silent = ms.request_size_pct == 0.0;
  for (double x : ms.info_gain_pct) silent = silent && x == 0.0;
  for (const auto& r : s) {
    for (const auto& st : r.steps) silent = silent && st.reward == -15.0;
  }
  const GridGeometry g;
  const auto [world, ego] = world_init(5, ScenarioConfig{});
  const SemanticGrid truth = one_hot_truth(render_classes(world, ego, g), g);
  const double ms_self = mass_score(truth, truth);
  return {broadcast && silent && ms_self == 1.0,
          "broadcast gain " + fmt(mb.info_gain_pct[0]) + "/" + fmt(mb.info_gain_pct[1]) + "/" +
              fmt(mb.info_gain_pct[2]) + "%, silent gain " + fmt(ms.info_gain_pct[0]) + "/" +
              fmt(ms.info_gain_pct[1]) + "/" + fmt(ms.info_gain_pct[2]) + "% reward " + fmt(ms.mean_reward) +
              ", mass_score(truth, truth) = " + fmt(ms_self)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "fusion algebra", 1, fusion},
      {2, "spatial filter closed forms and golden heatmap", 1, spatial_filter},
      {3, "reward oracle equivalence", 10, reward_oracle},
      {4, "random-policy request size", 120, random_size},
      {5, "greedy vs random trade-off, oracle vs greedy reward", 600, tradeoff},
      {6, "sequence loss lower-bounds the exact NLL", 300, elbo_bound},
      {7, "analytic gradients vs finite differences", 120, gradients},
      {8, "memory ageing and shift round trip", 1, memory_checks},
      {9, "CLI determinism", 600, cli_determinism},
      {10, "metric identities", 60, metric_identities},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = v.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << v.detail << " ("
              << fmt(secs, 3) << " s" << (in_time ? "" : ", over the " + fmt(c.budget_s) + " s budget") << ")"
              << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
