#pragma once

#include <Eigen/Core>

namespace coopgrid {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// N(mean, diag(exp(log_std)^2)).
struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;

  DiagGaussian() = default;
  DiagGaussian(Eigen::VectorXd m, Eigen::VectorXd ls) : mean(std::move(m)), log_std(std::move(ls)) {}
  static DiagGaussian standard(int d) { return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)}; }

  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd stddev() const { return log_std.array().exp().matrix(); }
  bool finite() const { return mean.allFinite() && log_std.allFinite(); }
};

/// KL(q || p). Throws ParameterError on dimension mismatch.
double kl_diag(const DiagGaussian& q, const DiagGaussian& p);

/// mean + exp(log_std) * noise.
Eigen::VectorXd sample(const DiagGaussian& g, const Eigen::VectorXd& noise);

double log_prob(const DiagGaussian& g, const Eigen::VectorXd& x);

/// log N(x; mean, diag(variance)).
double log_normal(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& variance);

/// Partial derivatives of log_prob(g, x) with respect to x, mean and log_std.
struct LogProbGrad {
  Eigen::VectorXd dx, dmean, dlog_std;
};
LogProbGrad log_prob_grad(const DiagGaussian& g, const Eigen::VectorXd& x);

}  // namespace coopgrid
