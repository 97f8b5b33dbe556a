#pragma once

#include "coopgrid/config.hpp"
#include "coopgrid/evidential_grid.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <string_view>
#include <vector>

namespace coopgrid {

/// Requested area as fractions of the grid: (u, v) anchor column/row, (w, h)
/// width/height. All four lie in [0,1].
struct BoundingBoxAction {
  double u = 0.0;
  double v = 0.0;
  double w = 0.0;
  double h = 0.0;

  static BoundingBoxAction broadcast() { return {0.0, 0.0, 1.0, 1.0}; }
  static BoundingBoxAction none() { return {0.0, 0.0, 0.0, 0.0}; }
  bool valid() const;
  bool operator==(const BoundingBoxAction&) const = default;
};

/// Inclusive cell rectangle. `rows == 0` encodes the empty request.
struct CellBox {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  bool empty() const { return rows == 0 || cols == 0; }
  int count() const { return rows * cols; }
  bool contains(int r, int c) const {
    return r >= row0 && r < row0 + rows && c >= col0 && c < col0 + cols;
  }
  bool operator==(const CellBox&) const = default;
};

/// Round half up.
inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// hc = round(h (H-1)), wc = round(w (W-1)); the anchor range shrinks with the
/// size so the box always fits: row0 = round(v (H-1-hc)), col0 likewise. The
/// box spans hc+1 rows and wc+1 columns, and is empty when hc or wc is 0.
CellBox cells_of(const BoundingBoxAction& a, int height, int width);

struct RewardParams {
  double eta = 0.3;
  int k_min_cells = 36;
  double w_exp = 2.0;
  /// Per square meter, in class order (pedestrian, car, road lines, road, other).
  std::array<double, kNumClasses> r_obj_per_m2{540.0 / (0.7 * 1.6), 540.0 / (3.0 * 1.8), 20.0, 20.0, 0.0};
  double penalty = -15.0;
  double alpha = 0.5;
  double beta_f = 0.8;
  double beta_l = 1.0;
  double zeta = 0.01;

  /// Per-cell rewards normalized by their maximum, and r_min = r_obj[road].
  ContourVector r_obj = ContourVector::Zero();
  double r_min = 0.0;

  /// Validates and derives r_obj/r_min for cells of the given size.
  void finalize(double meters_per_cell);
  static RewardParams defaults(double meters_per_cell = 0.5);
  static RewardParams from_config(const Config& cfg, double meters_per_cell = 0.5);
  static std::vector<std::string_view> keys();
};

inline RewardParams default_reward_params() { return RewardParams::defaults(); }

/// Per-cell spatial valuation S = S_F * S_L, row-major.
struct SpatialFilterGrid {
  GridGeometry geometry;
  Eigen::ArrayXd values;

  double at(int r, int c) const { return values[r * geometry.width + c]; }
};

SpatialFilterGrid build_spatial_filter(const RewardParams& p, const GridGeometry& g);

/// Complete-grid cells inside the box, vacuous elsewhere.
SemanticGrid extract_mask(const SemanticGrid& complete, const BoundingBoxAction& a);
SemanticGrid extract_mask(const SemanticGrid& complete, const CellBox& box);

/// Per-cell gain of `after` over `before`: max(0, after[k] - before[k]) for
/// the five classes, one row per cell.
Eigen::Array<double, Eigen::Dynamic, kNumClasses, Eigen::RowMajor> class_gains(const SemanticGrid& after,
                                                                              const SemanticGrid& before);

/// r(i) = -eta r_min + S(i) sum_k r_obj[k] max(0, G_next[i][k] - G_tilde[i][k])^w
Eigen::ArrayXd reward_density(const SemanticGrid& g_next, const SemanticGrid& g_tilde,
                              const SpatialFilterGrid& s, const RewardParams& p);

/// Penalty for an empty box, otherwise -K (1-eta) r_min + sum over the box.
double reward(const BoundingBoxAction& a, const Eigen::ArrayXd& density, const GridGeometry& g,
              const RewardParams& p);
double reward(const CellBox& box, const Eigen::ArrayXd& density, const GridGeometry& g, const RewardParams& p);

/// Summed-area table over a row-major per-cell array for O(1) box sums.
class BoxSums {
 public:
  BoxSums(const Eigen::ArrayXd& values, int height, int width);
  double sum(const CellBox& box) const;

 private:
  int width_;
  Eigen::ArrayXd table_;  // (height+1) x (width+1)
};

}  // namespace coopgrid
