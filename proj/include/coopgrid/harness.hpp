#pragma once

#include "coopgrid/environment.hpp"
#include "coopgrid/policies.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coopgrid {

/// Class groups used in gain reporting: pedestrians, cars, road (lines + road).
inline constexpr int kNumGroups = 3;
inline constexpr std::array<std::string_view, kNumGroups> kGroupNames{"P", "C", "R"};
std::array<double, kNumGroups> group_sums(const std::array<double, kNumClasses>& per_class);

struct StepRecord {
  int t = 0;
  BoundingBoxAction action;
  double reward = 0.0;
  int request_cells = 0;
  std::array<double, kNumGroups> gained{};
  std::array<double, kNumGroups> achievable{};
  double omega_tilde = 0.0;  // mean Omega of G~_{t+1}
  double omega_next = 0.0;   // mean Omega of G_{t+1}
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::string scenario;
  std::string policy;
  int grid_cells = 0;
  std::vector<StepRecord> steps;
};

/// Called after every step with the environment (already advanced) and outcome.
using StepObserver = std::function<void(const Environment&, const StepOutcome&)>;

EpisodeRecord run_episode(const EnvConfig& env, Policy& policy, int steps, std::uint64_t seed,
                          const StepObserver& observer = {});

enum class GainNormalization { Pooled, PerStep };

struct MetricsReport {
  std::array<double, kNumGroups> info_gain_pct{};
  double request_size_pct = 0.0;
  double mean_reward = 0.0;
  int episodes = 0;
  int steps = 0;
};

/// Pooled: 100 * sum gained / sum achievable per group over all steps.
/// PerStep: mean over steps with achievable > 0 of 100 * gained / achievable.
/// A group with nothing achievable reports 0.
MetricsReport info_gain_metrics(const std::vector<EpisodeRecord>& records,
                                GainNormalization mode = GainNormalization::Pooled);

/// Episode CSV: one row per step. Column order is fixed (see README).
std::string episodes_csv_header();
void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_episodes_csv(std::istream& in);

std::string metrics_csv_header();
void write_metrics_csv_row(std::ostream& out, const std::string& label, const MetricsReport& m);
std::string metrics_json(const std::string& label, const MetricsReport& m);

/// Metrics as reported by `evaluate`: computed from records that went
/// through the CSV text form, so live runs and dumps agree bit for bit.
MetricsReport metrics_via_csv(const std::vector<EpisodeRecord>& records, GainNormalization mode);

/// Motion/controls sidecar: t, dx, dy, dtheta, accel, steer, dirx, diry.
std::string motion_csv_header();
std::string motion_csv_row(int t, const ObservationBundle& obs);

/// One-hot truth over the 6 channels (true class of every cell).
SemanticGrid one_hot_truth(const std::vector<SemanticClass>& classes, const GridGeometry& g);
/// Mean over cells of sum_k truth[i][k] inferred[i][k]; truth must be one-hot.
double mass_score(const SemanticGrid& truth, const SemanticGrid& inferred);

enum class Blur { None, Gaussian5, Gaussian11 };
/// Normalized size x size Gaussian kernel with sigma = size / 6.
Eigen::MatrixXd gaussian_kernel(int size);

struct ChangeAccuracy {
  double positive_pct = 0.0;
  double negative_pct = 0.0;
};

/// Sequences of H x W road-layout grids (road + road lines mass), length >= 2.
ChangeAccuracy change_accuracy(const std::vector<Eigen::MatrixXd>& truth, const std::vector<Eigen::MatrixXd>& pred,
                               Blur blur);
Eigen::MatrixXd road_layout(const SemanticGrid& g);

std::string format_float(double x);

}  // namespace coopgrid
