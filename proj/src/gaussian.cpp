#include "coopgrid/gaussian.hpp"

#include "coopgrid/errors.hpp"

namespace coopgrid {

using Eigen::VectorXd;

double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim() || q.log_std.size() != q.mean.size() || p.log_std.size() != p.mean.size()) {
    throw ParameterError("KL between Gaussians of different dimension", "kl_diag");
  }
  const auto vq = (2.0 * q.log_std.array()).exp();
  const auto vp = (2.0 * p.log_std.array()).exp();
  const auto dm = q.mean.array() - p.mean.array();
  return (p.log_std.array() - q.log_std.array() + (vq + dm.square()) / (2.0 * vp) - 0.5).sum();
}

VectorXd sample(const DiagGaussian& g, const VectorXd& noise) {
  if (noise.size() != g.dim()) throw ParameterError("noise length differs from the dimension", "sample");
  return g.mean + (g.log_std.array().exp() * noise.array()).matrix();
}

double log_prob(const DiagGaussian& g, const VectorXd& x) {
  const auto e = (x - g.mean).array() * (-g.log_std.array()).exp();
  return -g.log_std.sum() - 0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * e.square().sum();
}

double log_normal(const VectorXd& x, const VectorXd& mean, const VectorXd& variance) {
  const auto r = (x - mean).array();
  return -0.5 * ((kLog2Pi + variance.array().log()).sum() + (r.square() / variance.array()).sum());
}

LogProbGrad log_prob_grad(const DiagGaussian& g, const VectorXd& x) {
  const VectorXd inv_var = (-2.0 * g.log_std.array()).exp().matrix();
  const VectorXd r = x - g.mean;
  LogProbGrad out;
  out.dmean = (r.array() * inv_var.array()).matrix();
  out.dx = -out.dmean;
  out.dlog_std = (r.array().square() * inv_var.array() - 1.0).matrix();
  return out;
}

}  // namespace coopgrid
