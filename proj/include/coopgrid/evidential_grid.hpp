#pragma once

#include <Eigen/Core>

#include <array>
#include <string_view>

namespace coopgrid {

/// Frame of discernment. The order is part of every file format.
enum class SemanticClass : int { Pedestrian = 0, Car = 1, RoadLines = 2, Road = 3, Other = 4 };

inline constexpr int kNumClasses = 5;
inline constexpr int kNumChannels = 6;
inline constexpr int kOmega = 5;

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames{
    "pedestrian", "car", "road_lines", "road", "other", "omega"};

/// Class order string written into grid file headers.
inline constexpr std::string_view kClassOrder = "pedestrian,car,road_lines,road,other,omega";

/// Absolute tolerance used by every mass equality check.
inline constexpr double kMassTolerance = 1e-9;
/// Construction-time sum drift that is silently renormalized away.
inline constexpr double kRenormalizeTolerance = 1e-6;

using MassVector = Eigen::Matrix<double, 1, kNumChannels>;
using ContourVector = Eigen::Matrix<double, 1, kNumClasses>;

constexpr int channel(SemanticClass c) { return static_cast<int>(c); }

/// Pseudo-Bayesian mass function: mass on the five singletons and on Omega.
class MassFunction {
 public:
  /// The vacuous mass function (all mass on Omega).
  MassFunction();

  /// Validates `masses`. Sums off by less than 1e-6 (and negatives above
  /// -1e-6) are repaired; anything else throws ParameterError.
  explicit MassFunction(const MassVector& masses);

  /// `mass` on class `c`, the rest on Omega.
  static MassFunction certain(SemanticClass c, double mass = 1.0);

  double operator[](int channel) const { return masses_[channel]; }
  double omega() const { return masses_[kOmega]; }
  const MassVector& masses() const { return masses_; }

  /// Singleton with the largest mass (lowest index on ties).
  SemanticClass argmax_class() const;

  bool approx_equal(const MassFunction& other, double tol = kMassTolerance) const;

 private:
  struct Unchecked {};
  MassFunction(const MassVector& masses, Unchecked) : masses_(masses) {}
  friend MassFunction discount(const MassFunction&, double);
  friend MassFunction fuse(const MassFunction&, const MassFunction&);

  MassVector masses_;
};

/// Per-singleton plausibilities.
struct ContourFunction {
  ContourVector plausibilities;
};

MassFunction vacuous();

/// Scales singletons by `gamma` and moves the remainder to Omega.
MassFunction discount(const MassFunction& m, double gamma);

ContourFunction contour(const MassFunction& m);

/// Pointwise contour product, conflict renormalized onto the singletons
/// only; Omega keeps the product of the input Omegas.
MassFunction fuse(const MassFunction& m1, const MassFunction& m2);

namespace detail {

/// Singleton masses of the fusion before renormalization, i.e. the contour
/// product minus the fused Omega.
ContourVector fuse_unnormalized(const MassVector& m1, const MassVector& m2);

/// Fusion kernel on raw rows, shared by `fuse` and `fuse_grids`.
template <typename Out>
void fuse_rows(const Eigen::Ref<const MassVector>& m1, const Eigen::Ref<const MassVector>& m2,
               Eigen::MatrixBase<Out> const& out_) {
  auto& out = const_cast<Eigen::MatrixBase<Out>&>(out_);
  const double omega = m1[kOmega] * m2[kOmega];
  double s = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    const double v = (m1[k] + m1[kOmega]) * (m2[k] + m2[kOmega]) - omega;
    out(0, k) = v > 0.0 ? v : 0.0;
    s += out(0, k);
  }
  const double target = 1.0 - omega;
  if (s > 0.0) {
    for (int k = 0; k < kNumClasses; ++k) out(0, k) *= target / s;
  } else if (target > 0.0) {
    // Total conflict: spread the deficit uniformly over the singletons.
    for (int k = 0; k < kNumClasses; ++k) out(0, k) = target / kNumClasses;
  }
  out(0, kOmega) = omega;
}

inline void discount_row(Eigen::Ref<MassVector> m, double gamma) {
  m.head<kNumClasses>() *= gamma;
  m[kOmega] = 1.0 - gamma * (1.0 - m[kOmega]);
}

}  // namespace detail

/// Placement of an ego-centered grid. Row 0 is the farthest row; the ego
/// center sits in `ego_row`, which defaults to the bottom row.
struct GridGeometry {
  int height = 80;
  int width = 120;
  double meters_per_cell = 0.5;
  int ego_row = 79;
  int ego_col = 60;

  static GridGeometry with_size(int height, int width, double meters_per_cell = 0.5);
  int cell_count() const { return height * width; }
  bool operator==(const GridGeometry&) const = default;
};

/// H x W mass functions, stored row-major with one 6-channel row per cell.
class SemanticGrid {
 public:
  using CellMatrix = Eigen::Matrix<double, Eigen::Dynamic, kNumChannels, Eigen::RowMajor>;

  /// All-vacuous grid.
  explicit SemanticGrid(const GridGeometry& geometry = {});
  /// Validates every row (see MassFunction).
  SemanticGrid(const GridGeometry& geometry, CellMatrix cells);

  static SemanticGrid filled(const GridGeometry& geometry, const MassFunction& m);

  const GridGeometry& geometry() const { return geometry_; }
  int height() const { return geometry_.height; }
  int width() const { return geometry_.width; }
  int size() const { return geometry_.cell_count(); }
  int index(int row, int col) const { return row * geometry_.width + col; }

  MassFunction cell(int row, int col) const;
  void set_cell(int row, int col, const MassFunction& m);
  double mass(int row, int col, int channel) const { return cells_(index(row, col), channel); }
  double omega(int row, int col) const { return cells_(index(row, col), kOmega); }

  const CellMatrix& cells() const { return cells_; }

  bool approx_equal(const SemanticGrid& other, double tol = kMassTolerance) const;

 private:
  struct Unchecked {};
  SemanticGrid(const GridGeometry& geometry, CellMatrix cells, Unchecked)
      : geometry_(geometry), cells_(std::move(cells)) {}
  friend SemanticGrid fuse_grids(const SemanticGrid&, const SemanticGrid&);
  friend class GridBuilder;

  GridGeometry geometry_;
  CellMatrix cells_;
};

/// Cell-wise `fuse`. Throws ParameterError on geometry mismatch.
SemanticGrid fuse_grids(const SemanticGrid& g1, const SemanticGrid& g2);

/// Cell-wise `discount`.
SemanticGrid discount_grid(const SemanticGrid& g, double gamma);

/// Mutable cell buffer for code that produces grids row by row (renderers,
/// resamplers). Rows must be written as valid mass functions; `build()` runs
/// the same validation as the checked constructor in debug builds only.
class GridBuilder {
 public:
  explicit GridBuilder(const GridGeometry& geometry);
  explicit GridBuilder(const SemanticGrid& start);

  const GridGeometry& geometry() const { return geometry_; }
  SemanticGrid::CellMatrix& cells() { return cells_; }
  auto row(int row, int col) { return cells_.row(row * geometry_.width + col); }
  void set_vacuous(int row, int col);

  SemanticGrid build() &&;

 private:
  GridGeometry geometry_;
  SemanticGrid::CellMatrix cells_;
};

}  // namespace coopgrid
