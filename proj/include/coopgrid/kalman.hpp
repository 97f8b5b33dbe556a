#pragma once

#include "coopgrid/variational.hpp"

#include <Eigen/Core>

#include <random>
#include <vector>

namespace coopgrid {

/// z_1 ~ N(0, I), z_{k+1} = A z_k + N(0, diag q), x_k = Cx z_k + N(0, diag rx),
/// y_k = Cy z_k + N(0, diag ry). All noise variances are >= 1/(2 pi). Cy may
/// have zero rows (no y observations).
struct LinearGaussianSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd q;
  Eigen::MatrixXd Cx;
  Eigen::VectorXd rx;
  Eigen::MatrixXd Cy;
  Eigen::VectorXd ry;

  int latent() const { return static_cast<int>(A.rows()); }
  int x_dim() const { return static_cast<int>(Cx.rows()); }
  int y_dim() const { return static_cast<int>(Cy.rows()); }

  void validate() const;
  /// Random stable system: A scaled to spectral norm in [0.5, 0.95].
  static LinearGaussianSystem random(int latent, int x_dim, int y_dim, std::mt19937_64& rng);
  Sequence simulate(int T, std::mt19937_64& rng) const;
  /// Same dynamics with the y observations removed.
  LinearGaussianSystem x_only() const;
  /// The model family instance equal to this system: linear transition,
  /// linear emissions, alpha = the noise variances.
  GenerativeParams as_generative(int belief_hidden = 4, int head_hidden = 4) const;
};

struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// All vectors are indexed by time - 1.
struct KalmanResult {
  double nll = 0.0;
  std::vector<GaussianState> predicted;  // p(z_k | obs_{1:k-1})
  std::vector<GaussianState> filtered;   // p(z_k | obs_{1:k})
  std::vector<GaussianState> smoothed;   // p(z_k | obs_{1:T})
  std::vector<Eigen::MatrixXd> gain;     // smoother gain J_k, k < T
};

/// Exact -log p(x, y) with filtered and smoothed posteriors. y may be empty
/// when the system has no y observations. Throws NumericalError when an
/// innovation or predicted covariance is not positive definite.
KalmanResult kalman_exact(const LinearGaussianSystem& sys, const std::vector<Eigen::VectorXd>& x,
                          const std::vector<Eigen::VectorXd>& y);

/// Inference heads read off a Kalman run: q(z_k | b_k) is the filtered
/// posterior and q(z_k | b_k, z_{k+1}) the backward conditional
/// p(z_k | obs_{1:k}, z_{k+1}), both restricted to their diagonals.
class KalmanHeads : public PosteriorHeads {
 public:
  explicit KalmanHeads(KalmanResult r);
  DiagGaussian belief(int k) const override;
  DiagGaussian smoothing(int k, const Eigen::VectorXd& z_next) const override;

  const KalmanResult& result() const { return r_; }
  /// Mean of the backward conditional is gain * z_next + offset(k).
  Eigen::VectorXd smoothing_offset(int k) const;
  const Eigen::VectorXd& smoothing_log_std(int k) const { return smooth_log_std_.at(k - 1); }

 private:
  KalmanResult r_;
  std::vector<Eigen::VectorXd> smooth_log_std_;
};

/// Heads from the x-only filter of `sys`, the posterior a recognizer that
/// sees x but not y can reach.
KalmanHeads exact_x_heads(const LinearGaussianSystem& sys, const Sequence& seq);

/// KL(Q_t || p(z_{1:T} | x, y)) for the LP-VAE variational distribution built
/// from Kalman heads (Q_t is Gaussian then), computed with dense joint
/// Gaussians. For those heads, E[lpvae_loss] = nll + this gap.
double exact_predictability_gap(const LinearGaussianSystem& sys, const KalmanHeads& heads, const Sequence& seq,
                                int t);

}  // namespace coopgrid
