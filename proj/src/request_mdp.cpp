#include "coopgrid/request_mdp.hpp"

#include "coopgrid/errors.hpp"

#include <algorithm>
#include <cmath>

namespace coopgrid {

bool BoundingBoxAction::valid() const {
  auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
  return in01(u) && in01(v) && in01(w) && in01(h);
}

CellBox cells_of(const BoundingBoxAction& a, int height, int width) {
  if (!a.valid()) throw ParameterError("bounding box fields must lie in [0,1]", "cells_of");
  const int hc = round_half_up(a.h * (height - 1));
  const int wc = round_half_up(a.w * (width - 1));
  if (hc == 0 || wc == 0) return {};
  return {round_half_up(a.v * (height - 1 - hc)), round_half_up(a.u * (width - 1 - wc)), hc + 1, wc + 1};
}

std::vector<std::string_view> RewardParams::keys() {
  return {"eta", "k_min_cells", "w_exp", "r_obj_per_m2", "penalty", "alpha", "beta_f", "beta_l", "zeta"};
}

void RewardParams::finalize(double meters_per_cell) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ParameterError("eta must lie in [0,1]", "eta");
  if (k_min_cells < 0) throw ParameterError("k_min_cells must be >= 0", "k_min_cells");
  if (!(w_exp > 0.0)) throw ParameterError("w_exp must be positive", "w_exp");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in [0,1)", "alpha");
  if (!(beta_f >= 0.0 && beta_f <= 1.0)) throw ParameterError("beta_f must lie in [0,1]", "beta_f");
  if (!(beta_l >= 0.0 && beta_l <= 1.0)) throw ParameterError("beta_l must lie in [0,1]", "beta_l");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw ParameterError("zeta must lie in (0,1]", "zeta");
  for (int k = 0; k < kNumClasses; ++k) {
    if (!(r_obj_per_m2[k] >= 0.0)) throw ParameterError("class rewards must be nonnegative", "r_obj_per_m2");
    if (k > 0 && r_obj_per_m2[k] > r_obj_per_m2[k - 1]) {
      throw ParameterError("class rewards must be nonincreasing in class order", "r_obj_per_m2");
    }
  }
  if (r_obj_per_m2[kNumClasses - 1] != 0.0) {
    throw ParameterError("the reward of class 'other' must be 0", "r_obj_per_m2");
  }
  const double area = meters_per_cell * meters_per_cell;
  for (int k = 0; k < kNumClasses; ++k) r_obj[k] = r_obj_per_m2[k] * area;
  const double top = r_obj.maxCoeff();
  if (!(top > 0.0)) throw ParameterError("at least one class reward must be positive", "r_obj_per_m2");
  r_obj /= top;
  r_min = r_obj[channel(SemanticClass::Road)];
}

RewardParams RewardParams::defaults(double meters_per_cell) {
  RewardParams p;
  p.finalize(meters_per_cell);
  return p;
}

RewardParams RewardParams::from_config(const Config& cfg, double meters_per_cell) {
  RewardParams p;
  p.eta = cfg.get_double("eta", p.eta);
  p.k_min_cells = cfg.get_int("k_min_cells", p.k_min_cells);
  p.w_exp = cfg.get_double("w_exp", p.w_exp);
  const auto r = cfg.get_doubles("r_obj_per_m2", {p.r_obj_per_m2.begin(), p.r_obj_per_m2.end()});
  if (r.size() != kNumClasses) throw ConfigError("r_obj_per_m2 needs 5 values", "r_obj_per_m2");
  std::copy(r.begin(), r.end(), p.r_obj_per_m2.begin());
  p.penalty = cfg.get_double("penalty", p.penalty);
  p.alpha = cfg.get_double("alpha", p.alpha);
  p.beta_f = cfg.get_double("beta_f", p.beta_f);
  p.beta_l = cfg.get_double("beta_l", p.beta_l);
  p.zeta = cfg.get_double("zeta", p.zeta);
  try {
    p.finalize(meters_per_cell);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what(), e.context());
  }
  return p;
}

SpatialFilterGrid build_spatial_filter(const RewardParams& p, const GridGeometry& g) {
  if (!(p.zeta > 0.0)) throw ParameterError("zeta must be positive", "build_spatial_filter");
  SpatialFilterGrid s{g, Eigen::ArrayXd(g.cell_count())};
  const int max_f = std::max(g.ego_row, g.height - 1 - g.ego_row);
  for (int r = 0; r < g.height; ++r) {
    const double f = std::abs(g.ego_row - r);
    const double frac = max_f > 0 ? f / max_f : 0.0;
    const double s_f = 1.0 - p.beta_f / (1.0 - p.alpha) * std::max(0.0, frac - p.alpha);
    for (int c = 0; c < g.width; ++c) {
      const double l = std::abs(c - g.ego_col);
      const double s_l = 1.0 - p.beta_l / p.zeta * std::max(0.0, p.zeta - std::abs(std::cos(std::atan2(l, f))));
      s.values[r * g.width + c] = s_f * s_l;
    }
  }
  return s;
}

SemanticGrid extract_mask(const SemanticGrid& complete, const CellBox& box) {
  GridBuilder b(complete.geometry());
  for (int r = box.row0; r < box.row0 + box.rows; ++r) {
    for (int c = box.col0; c < box.col0 + box.cols; ++c) {
      b.row(r, c) = complete.cells().row(complete.index(r, c));
    }
  }
  return std::move(b).build();
}

SemanticGrid extract_mask(const SemanticGrid& complete, const BoundingBoxAction& a) {
  return extract_mask(complete, cells_of(a, complete.height(), complete.width()));
}

Eigen::Array<double, Eigen::Dynamic, kNumClasses, Eigen::RowMajor> class_gains(const SemanticGrid& after,
                                                                              const SemanticGrid& before) {
  if (!(after.geometry() == before.geometry())) {
    throw ParameterError("grids differ in geometry", "class_gains");
  }
  return (after.cells().leftCols<kNumClasses>().array() - before.cells().leftCols<kNumClasses>().array())
      .max(0.0);
}

Eigen::ArrayXd reward_density(const SemanticGrid& g_next, const SemanticGrid& g_tilde,
                              const SpatialFilterGrid& s, const RewardParams& p) {
  if (!(g_next.geometry() == s.geometry)) {
    throw ParameterError("spatial filter and grids differ in geometry", "reward_density");
  }
  const auto gains = class_gains(g_next, g_tilde);
  const Eigen::ArrayXd weighted = (gains.pow(p.w_exp).matrix() * p.r_obj.transpose()).array();
  return -p.eta * p.r_min + s.values * weighted;
}

double reward(const CellBox& box, const Eigen::ArrayXd& density, const GridGeometry& g, const RewardParams& p) {
  if (box.empty()) return p.penalty;
  double sum = 0.0;
  for (int r = box.row0; r < box.row0 + box.rows; ++r) {
    sum += density.segment(r * g.width + box.col0, box.cols).sum();
  }
  return -p.k_min_cells * (1.0 - p.eta) * p.r_min + sum;
}

double reward(const BoundingBoxAction& a, const Eigen::ArrayXd& density, const GridGeometry& g,
              const RewardParams& p) {
  return reward(cells_of(a, g.height, g.width), density, g, p);
}

BoxSums::BoxSums(const Eigen::ArrayXd& values, int height, int width)
    : width_(width), table_(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(height + 1) * (width + 1))) {
  const int stride = width + 1;
  for (int r = 0; r < height; ++r) {
    double row_sum = 0.0;
    for (int c = 0; c < width; ++c) {
      row_sum += values[r * width + c];
      table_[(r + 1) * stride + c + 1] = table_[r * stride + c + 1] + row_sum;
    }
  }
}

double BoxSums::sum(const CellBox& b) const {
  if (b.empty()) return 0.0;
  const int stride = width_ + 1;
  const int r0 = b.row0, c0 = b.col0, r1 = b.row0 + b.rows, c1 = b.col0 + b.cols;
  return table_[r1 * stride + c1] - table_[r0 * stride + c1] - table_[r1 * stride + c0] + table_[r0 * stride + c0];
}

}  // namespace coopgrid
