// coopgrid command-line front end.

#include "coopgrid/environment.hpp"
#include "coopgrid/errors.hpp"
#include "coopgrid/grid_io.hpp"
#include "coopgrid/harness.hpp"
#include "coopgrid/parallel.hpp"
#include "coopgrid/policies.hpp"
#include "coopgrid/request_mdp.hpp"
#include "coopgrid/variational_checks.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace coopgrid;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
  int jobs = 1;
};

Config load_config(const Globals& g) {
  std::string path = g.config;
  if (path.empty()) {
    if (const char* env = std::getenv("COOPGRID_CONFIG")) path = env;
  }
  return path.empty() ? Config{} : Config::load(path);
}

EnvConfig env_config(const Globals& g, const std::vector<std::string_view>& extra = {}) {
  const Config cfg = load_config(g);
  std::vector<std::string_view> known = EnvConfig::keys();
  known.insert(known.end(), extra.begin(), extra.end());
  const auto unknown = cfg.unknown_keys(known);
  if (!unknown.empty()) throw ConfigError("unknown configuration key '" + unknown.front() + "'", g.config);
  return EnvConfig::from_config(cfg);
}

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open output file", p.string());
  return out;
}

// Round-trip precision, the format of the golden heatmap.
std::string full_precision(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<EpisodeRecord> run_many(const EnvConfig& env, const std::string& policy, const PolicyOptions& base,
                                    int episodes, int steps, const Globals& g) {
  if (episodes < 1) throw ParameterError("need at least one episode", "--episodes");
  std::vector<EpisodeRecord> records(static_cast<std::size_t>(episodes));
  parallel_for(episodes, g.jobs, [&](int i) {
    const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(i);
    PolicyOptions opts = base;
    opts.seed = seed ^ 0x9e3779b97f4a7c15ULL;
    auto p = make_policy(policy, opts, env);
    records[static_cast<std::size_t>(i)] = run_episode(env, *p, steps, seed);
  });
  return records;
}

std::vector<EpisodeRecord> read_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open episode dump", path);
  return read_episodes_csv(in);
}

void write_metrics(const Globals& g, const std::string& label, const MetricsReport& m) {
  {
    auto out = open_out(out_path(g, "metrics.csv"));
    out << metrics_csv_header() << '\n';
    write_metrics_csv_row(out, label, m);
  }
  {
    auto out = open_out(out_path(g, "metrics.json"));
    out << metrics_json(label, m) << '\n';
  }
  std::cout << metrics_csv_header() << '\n';
  write_metrics_csv_row(std::cout, label, m);
}

int fail(const std::string& code, const std::string& message, const std::string& context) {
  nlohmann::json j{{"code", code}, {"message", message}, {"context", context}};
  std::cerr << j.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative semantic-grid request simulator"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Base seed; episode i uses seed + i");
  app.add_option("--config", g.config, "key = value config file (overrides COOPGRID_CONFIG)");
  app.add_option("--out-dir", g.out_dir, "Directory for output files");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run episodes and write episodes.csv");
  std::string policy = "random", checkpoint;
  int episodes = 10, steps = -1;
  double rbar = -1.0;
  bool dump_grids = false;
  sim->add_option("--policy", policy, "broadcast | silent | random | greedy | oracle | cem");
  sim->add_option("--episodes", episodes, "Number of seeds");
  sim->add_option("--steps", steps, "Steps per episode (default: episode_steps from the config)");
  sim->add_option("--checkpoint", checkpoint, "Affine policy checkpoint for --policy cem");
  sim->add_option("--rbar", rbar, "Greedy threshold override");
  sim->add_flag("--dump-grids", dump_grids, "Also write the final knowledge grid of every episode");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Metrics from episode dumps or a live run");
  std::vector<std::string> dumps;
  std::string label;
  bool per_step = false;
  eval->add_option("dumps", dumps, "Episode CSV files; omit for a live run");
  eval->add_option("--policy", policy, "Policy for a live run");
  eval->add_option("--episodes", episodes, "Seeds for a live run");
  eval->add_option("--steps", steps, "Steps per episode for a live run");
  eval->add_option("--checkpoint", checkpoint, "Affine policy checkpoint for --policy cem");
  eval->add_option("--rbar", rbar, "Greedy threshold override");
  eval->add_option("--label", label, "Row label (default: policy id)");
  eval->add_flag("--per-step", per_step, "Average per-step gain ratios instead of pooling");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse two grid files");
  std::string grid_a, grid_b, output;
  fuse->add_option("a", grid_a)->required();
  fuse->add_option("b", grid_b)->required();
  fuse->add_option("-o,--output", output, "Output grid (default: <out-dir>/fused.grid)");

  // loss-check
  auto* loss = app.add_subcommand("loss-check", "Lower-bound and gradient checks of the sequence losses");
  int systems = 20, samples = 10000, instances = 50;
  loss->add_option("--systems", systems);
  loss->add_option("--samples", samples);
  loss->add_option("--instances", instances);

  // train-cem
  auto* cem = app.add_subcommand("train-cem", "Cross-entropy search over affine request policies");
  CemConfig cc;
  cem->add_option("--population", cc.population);
  cem->add_option("--generations", cc.generations);
  cem->add_option("--elite-fraction", cc.elite_fraction);
  cem->add_option("--episodes", cc.episodes, "Training episodes per candidate");
  cem->add_option("--steps", cc.episode_steps, "Steps per training episode");
  cem->add_option("--init-std", cc.init_std);

  // filter-dump
  auto* filt = app.add_subcommand("filter-dump", "Write the spatial filter S as a CSV heatmap");
  filt->add_option("-o,--output", output, "Output CSV (default: <out-dir>/filter.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), "");
  }

  try {
    PolicyOptions popts;
    popts.rbar = rbar;
    popts.checkpoint = checkpoint;

    if (*sim) {
      const EnvConfig env = env_config(g);
      const int T = steps > 0 ? steps : env.episode_steps;
      const auto records = run_many(env, policy, popts, episodes, T, g);
      auto out = open_out(out_path(g, "episodes.csv"));
      write_episodes_csv(out, records);
      if (dump_grids) {
        // Re-running is cheaper than holding every environment alive.
        parallel_for(episodes, g.jobs, [&](int i) {
          const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(i);
          PolicyOptions opts = popts;
          opts.seed = seed ^ 0x9e3779b97f4a7c15ULL;
          auto p = make_policy(policy, opts, env);
          SemanticGrid last(env.geometry);
          run_episode(env, *p, T, seed, [&](const Environment& e, const StepOutcome&) { last = e.knowledge(); });
          save_grid(out_path(g, "episode_" + std::to_string(seed) + ".grid").string(), last);
        });
      }
      std::cout << "wrote " << records.size() << " episodes to " << out_path(g, "episodes.csv").string() << '\n';
    } else if (*eval) {
      const GainNormalization mode = per_step ? GainNormalization::PerStep : GainNormalization::Pooled;
      std::vector<EpisodeRecord> records;
      if (!dumps.empty()) {
        for (const auto& d : dumps) {
          auto part = read_dump(d);
          records.insert(records.end(), part.begin(), part.end());
        }
      } else {
        const EnvConfig env = env_config(g);
        records = run_many(env, policy, popts, episodes, steps > 0 ? steps : env.episode_steps, g);
      }
      if (records.empty()) throw ParameterError("no episodes to evaluate", "evaluate");
      // Aggregation order must not depend on file order.
      std::stable_sort(records.begin(), records.end(), [](const EpisodeRecord& a, const EpisodeRecord& b) {
        return std::tie(a.policy, a.seed) < std::tie(b.policy, b.seed);
      });
      write_metrics(g, label.empty() ? records.front().policy : label, metrics_via_csv(records, mode));
    } else if (*fuse) {
      const SemanticGrid fused = fuse_grids(load_grid(grid_a), load_grid(grid_b));
      const std::string path = output.empty() ? out_path(g, "fused.grid").string() : output;
      save_grid(path, fused);
      std::cout << "wrote " << path << '\n';
    } else if (*loss) {
      auto out = open_out(out_path(g, "loss_check.csv"));
      out << "kind,system,latent,T,t,recognition,nll,mean_loss,std_error,gap,exact_gap,holds\n";
      int bound_fail = 0;
      double worst_slack = 1e300;
      for (const auto& c : elbo_bound_suite(systems, samples, g.seed)) {
        const double gap = c.mean_loss - c.nll;
        out << "bound," << c.system << ',' << c.latent << ',' << c.T << ',' << c.t << ','
            << (c.exact_heads ? "exact" : "random") << ',' << format_float(c.nll) << ','
            << format_float(c.mean_loss) << ',' << format_float(c.std_error) << ',' << format_float(gap) << ','
            << format_float(c.exact_gap) << ',' << (c.holds ? 1 : 0) << '\n';
        std::cout << "system " << c.system << (c.exact_heads ? " exact " : " random") << "  gap "
                  << format_float(gap) << " +- " << format_float(c.std_error) << '\n';
        if (!c.holds) ++bound_fail;
        worst_slack = std::min(worst_slack, gap / std::max(c.std_error, 1e-300));
      }
      out << "gradient,what,instance,rel_error\n";
      double worst = 0.0;
      for (const auto& c : gradient_check_suite(instances, g.seed)) {
        out << "gradient," << c.what << ',' << c.instance << ',' << format_float(c.rel_error) << '\n';
        worst = std::max(worst, c.rel_error);
      }
      std::cout << "bound violations: " << bound_fail << ", smallest gap / SE: " << format_float(worst_slack)
                << "\nworst gradient relative error: " << format_float(worst) << '\n';
      if (bound_fail > 0 || !(worst <= kGradientTolerance))
        throw NumericalError("loss checks failed", out_path(g, "loss_check.csv").string());
    } else if (*cem) {
      const EnvConfig env = env_config(g);
      cc.seed = g.seed;
      cc.jobs = g.jobs;
      const CemResult r = train_cem(env, cc);
      r.policy.to_checkpoint().save(out_path(g, "cem.ckpt").string());
      auto out = open_out(out_path(g, "cem_trace.csv"));
      out << "generation,mean_return,elite_mean_return,best_return,mean_std\n";
      for (std::size_t i = 0; i < r.trace.size(); ++i) {
        const auto& t = r.trace[i];
        out << i << ',' << format_float(t.mean_return) << ',' << format_float(t.elite_mean_return) << ','
            << format_float(t.best_return) << ',' << format_float(t.mean_std) << '\n';
      }
      std::cout << "best return " << format_float(r.best_return) << '\n';
    } else if (*filt) {
      const EnvConfig env = env_config(g);
      const SpatialFilterGrid s = build_spatial_filter(env.reward, env.geometry);
      const std::string path = output.empty() ? out_path(g, "filter.csv").string() : output;
      auto out = open_out(path);
      for (int r = 0; r < s.geometry.height; ++r) {
        for (int c = 0; c < s.geometry.width; ++c) out << (c ? "," : "") << full_precision(s.at(r, c));
        out << '\n';
      }
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what(), e.context());
  } catch (const fs::filesystem_error& e) {
    return fail("io_error", e.what(), e.path1().string());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), "");
  }
  return 0;
}
