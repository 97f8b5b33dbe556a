#include "coopgrid/evidential_grid.hpp"

#include "coopgrid/errors.hpp"

#include <cmath>
#include <sstream>

namespace coopgrid {

namespace {

// Repairs small drift in place; throws on anything beyond the tolerance.
void sanitize(Eigen::Ref<MassVector> m, const char* where) {
  for (int k = 0; k < kNumChannels; ++k) {
    if (!std::isfinite(m[k])) {
      throw ParameterError("mass function has a non-finite entry", where);
    }
    if (m[k] < 0.0) {
      if (m[k] < -kRenormalizeTolerance) {
        std::ostringstream os;
        os << "negative mass " << m[k] << " on channel " << kChannelNames[k];
        throw ParameterError(os.str(), where);
      }
      m[k] = 0.0;
    }
  }
  const double sum = m.sum();
  if (std::abs(sum - 1.0) > kRenormalizeTolerance) {
    std::ostringstream os;
    os << "masses sum to " << sum << ", expected 1";
    throw ParameterError(os.str(), where);
  }
  m /= sum;
}

}  // namespace

MassFunction::MassFunction() : masses_(MassVector::Zero()) { masses_[kOmega] = 1.0; }

MassFunction::MassFunction(const MassVector& masses) : masses_(masses) {
  sanitize(masses_, "MassFunction");
}

MassFunction MassFunction::certain(SemanticClass c, double mass) {
  if (!(mass >= 0.0 && mass <= 1.0)) throw ParameterError("certain(): mass outside [0,1]");
  MassVector m = MassVector::Zero();
  m[channel(c)] = mass;
  m[kOmega] = 1.0 - mass;
  return MassFunction(m, Unchecked{});
}

SemanticClass MassFunction::argmax_class() const {
  int best = 0;
  for (int k = 1; k < kNumClasses; ++k) {
    if (masses_[k] > masses_[best]) best = k;
  }
  return static_cast<SemanticClass>(best);
}

bool MassFunction::approx_equal(const MassFunction& other, double tol) const {
  return ((masses_ - other.masses_).array().abs() <= tol).all();
}

MassFunction vacuous() { return MassFunction(); }

MassFunction discount(const MassFunction& m, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ParameterError("discount factor must lie in [0,1]", "discount");
  }
  MassVector out = m.masses();
  detail::discount_row(out, gamma);
  return MassFunction(out, MassFunction::Unchecked{});
}

ContourFunction contour(const MassFunction& m) {
  return {m.masses().head<kNumClasses>().array() + m.omega()};
}

MassFunction fuse(const MassFunction& m1, const MassFunction& m2) {
  MassVector out = MassVector::Zero();
  detail::fuse_rows(m1.masses(), m2.masses(), out);
  return MassFunction(out, MassFunction::Unchecked{});
}

ContourVector detail::fuse_unnormalized(const MassVector& m1, const MassVector& m2) {
  const double omega = m1[kOmega] * m2[kOmega];
  return ((m1.head<kNumClasses>().array() + m1[kOmega]) *
              (m2.head<kNumClasses>().array() + m2[kOmega]) -
          omega)
      .matrix();
}

GridGeometry GridGeometry::with_size(int height, int width, double meters_per_cell) {
  return GridGeometry{height, width, meters_per_cell, height - 1, width / 2};
}

namespace {

void check_geometry(const GridGeometry& g) {
  if (g.height <= 0 || g.width <= 0) throw ParameterError("grid must have at least one cell");
  if (!(g.meters_per_cell > 0.0)) throw ParameterError("meters_per_cell must be positive");
  if (g.ego_row < 0 || g.ego_row >= g.height || g.ego_col < 0 || g.ego_col >= g.width) {
    throw ParameterError("ego cell lies outside the grid");
  }
}

SemanticGrid::CellMatrix vacuous_cells(const GridGeometry& g) {
  SemanticGrid::CellMatrix cells = SemanticGrid::CellMatrix::Zero(g.cell_count(), kNumChannels);
  cells.col(kOmega).setOnes();
  return cells;
}

}  // namespace

SemanticGrid::SemanticGrid(const GridGeometry& geometry) : geometry_(geometry) {
  check_geometry(geometry_);
  cells_ = vacuous_cells(geometry_);
}

SemanticGrid::SemanticGrid(const GridGeometry& geometry, CellMatrix cells)
    : geometry_(geometry), cells_(std::move(cells)) {
  check_geometry(geometry_);
  if (cells_.rows() != geometry_.cell_count()) {
    throw ParameterError("cell count does not match grid dimensions", "SemanticGrid");
  }
  for (Eigen::Index i = 0; i < cells_.rows(); ++i) sanitize(cells_.row(i), "SemanticGrid");
}

SemanticGrid SemanticGrid::filled(const GridGeometry& geometry, const MassFunction& m) {
  check_geometry(geometry);
  CellMatrix cells = m.masses().replicate(geometry.cell_count(), 1);
  return SemanticGrid(geometry, std::move(cells), Unchecked{});
}

MassFunction SemanticGrid::cell(int row, int col) const {
  return MassFunction(MassVector(cells_.row(index(row, col))));
}

void SemanticGrid::set_cell(int row, int col, const MassFunction& m) {
  cells_.row(index(row, col)) = m.masses();
}

bool SemanticGrid::approx_equal(const SemanticGrid& other, double tol) const {
  return geometry_ == other.geometry_ && ((cells_ - other.cells_).array().abs() <= tol).all();
}

SemanticGrid fuse_grids(const SemanticGrid& g1, const SemanticGrid& g2) {
  if (!(g1.geometry() == g2.geometry())) {
    throw ParameterError("cannot fuse grids with different geometry", "fuse_grids");
  }
  SemanticGrid::CellMatrix out(g1.size(), kNumChannels);
  for (int i = 0; i < g1.size(); ++i) {
    detail::fuse_rows(g1.cells().row(i), g2.cells().row(i), out.row(i));
  }
  return SemanticGrid(g1.geometry(), std::move(out), SemanticGrid::Unchecked{});
}

SemanticGrid discount_grid(const SemanticGrid& g, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ParameterError("discount factor must lie in [0,1]", "discount_grid");
  }
  GridBuilder b(g);
  for (int i = 0; i < g.size(); ++i) detail::discount_row(b.cells().row(i), gamma);
  return std::move(b).build();
}

GridBuilder::GridBuilder(const GridGeometry& geometry) : geometry_(geometry) {
  check_geometry(geometry_);
  cells_ = vacuous_cells(geometry_);
}

GridBuilder::GridBuilder(const SemanticGrid& start)
    : geometry_(start.geometry()), cells_(start.cells()) {}

void GridBuilder::set_vacuous(int row, int col) {
  auto r = this->row(row, col);
  r.setZero();
  r[kOmega] = 1.0;
}

SemanticGrid GridBuilder::build() && {
#ifndef NDEBUG
  return SemanticGrid(geometry_, std::move(cells_));
#else
  return SemanticGrid(geometry_, std::move(cells_), SemanticGrid::Unchecked{});
#endif
}

}  // namespace coopgrid
