#include "coopgrid/kalman.hpp"

#include "coopgrid/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>

namespace coopgrid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void LinearGaussianSystem::validate() const {
  const int d = latent();
  if (d < 1 || A.cols() != d || q.size() != d) throw ParameterError("transition shapes are inconsistent", "system");
  if (Cx.cols() != d || rx.size() != Cx.rows() || Cy.cols() != d || ry.size() != Cy.rows()) {
    throw ParameterError("emission shapes are inconsistent", "system");
  }
  for (const VectorXd* v : {&q, &rx, &ry}) {
    if (!(v->array() >= kMinEmissionVariance).all()) {
      throw ParameterError("noise variances must be >= 1/(2 pi)", "system");
    }
  }
}

LinearGaussianSystem LinearGaussianSystem::random(int latent, int x_dim, int y_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto gauss = [&](int r, int c) { return MatrixXd(MatrixXd::NullaryExpr(r, c, [&] { return n(rng); })); };
  LinearGaussianSystem s;
  s.A = gauss(latent, latent);
  const double norm = Eigen::JacobiSVD<MatrixXd>(s.A).singularValues()(0);
  s.A *= (0.5 + 0.45 * u(rng)) / norm;
  s.q = VectorXd::NullaryExpr(latent, [&] { return kMinEmissionVariance + 0.5 * u(rng); });
  s.Cx = gauss(x_dim, latent);
  s.rx = VectorXd::NullaryExpr(x_dim, [&] { return kMinEmissionVariance + 0.8 * u(rng); });
  s.Cy = gauss(y_dim, latent);
  s.ry = VectorXd::NullaryExpr(y_dim, [&] { return kMinEmissionVariance + 0.8 * u(rng); });
  return s;
}

Sequence LinearGaussianSystem::simulate(int T, std::mt19937_64& rng) const {
  validate();
  if (T < 1) throw ParameterError("T must be >= 1", "simulate");
  std::normal_distribution<double> n(0.0, 1.0);
  const auto noise = [&](const VectorXd& var) {
    return VectorXd(VectorXd::NullaryExpr(var.size(), [&] { return n(rng); }).cwiseProduct(var.cwiseSqrt()));
  };
  Sequence s;
  VectorXd z = noise(VectorXd::Ones(latent()));
  for (int k = 0; k < T; ++k) {
    if (k > 0) z = A * z + noise(q);
    s.x.push_back(Cx * z + noise(rx));
    s.y.push_back(Cy * z + noise(ry));
  }
  return s;
}

LinearGaussianSystem LinearGaussianSystem::x_only() const {
  LinearGaussianSystem s = *this;
  s.Cy = MatrixXd::Zero(0, latent());
  s.ry = VectorXd::Zero(0);
  return s;
}

GenerativeParams LinearGaussianSystem::as_generative(int belief_hidden, int head_hidden) const {
  validate();
  ModelDims d;
  d.latent = latent();
  d.x = x_dim();
  d.y = y_dim();
  d.belief_hidden = belief_hidden;
  d.head_hidden = head_hidden;
  GenerativeParams g(d);
  g.transition_kind = TransitionKind::Linear;
  g.linear_transition.W = A;
  g.linear_log_std = 0.5 * q.array().log().matrix();
  g.emit_x.W = Cx;
  g.emit_y.W = Cy;
  g.alpha_x = rx;
  g.alpha_y = ry;
  return g;
}

KalmanResult kalman_exact(const LinearGaussianSystem& sys, const std::vector<VectorXd>& x,
                          const std::vector<VectorXd>& y) {
  sys.validate();
  const int T = static_cast<int>(x.size());
  const int d = sys.latent();
  if (T < 1) throw ParameterError("empty sequence", "kalman_exact");
  const bool use_y = sys.y_dim() > 0;
  if (use_y && static_cast<int>(y.size()) != T) throw ParameterError("x and y lengths differ", "kalman_exact");

  const int no = sys.x_dim() + (use_y ? sys.y_dim() : 0);
  MatrixXd C(no, d);
  VectorXd R(no);
  if (use_y) {
    C << sys.Cx, sys.Cy;
    R << sys.rx, sys.ry;
  } else {
    C = sys.Cx;
    R = sys.rx;
  }

  KalmanResult r;
  VectorXd m = VectorXd::Zero(d);
  MatrixXd P = MatrixXd::Identity(d, d);
  for (int k = 0; k < T; ++k) {
    if (k > 0) {
      m = sys.A * r.filtered.back().mean;
      P = sys.A * r.filtered.back().cov * sys.A.transpose();
      P.diagonal() += sys.q;
    }
    r.predicted.push_back({m, P});
    VectorXd o(no);
    if (x[k].size() != sys.x_dim() || (use_y && y[k].size() != sys.y_dim())) {
      throw ParameterError("observation has the wrong size", "kalman_exact");
    }
    if (use_y) {
      o << x[k], y[k];
    } else {
      o = x[k];
    }
    MatrixXd S = C * P * C.transpose();
    S.diagonal() += R;
    Eigen::LLT<MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("innovation covariance is not positive definite at step " + std::to_string(k + 1),
                           "kalman_exact");
    }
    const VectorXd e = o - C * m;
    const VectorXd w = llt.solve(e);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    r.nll += 0.5 * (no * kLog2Pi + logdet + e.dot(w));
    const MatrixXd K = llt.solve(C * P).transpose();  // P C^T S^-1
    VectorXd mf = m + K * e;
    MatrixXd Pf = P - K * C * P;
    Pf = 0.5 * (Pf + Pf.transpose());
    r.filtered.push_back({std::move(mf), std::move(Pf)});
  }

  r.smoothed.resize(T);
  r.gain.resize(std::max(0, T - 1));
  r.smoothed[T - 1] = r.filtered[T - 1];
  for (int k = T - 2; k >= 0; --k) {
    const MatrixXd& Pn = r.predicted[k + 1].cov;
    Eigen::LLT<MatrixXd> llt(Pn);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("predicted covariance is not positive definite at step " + std::to_string(k + 2),
                           "kalman_exact");
    }
    const MatrixXd J = llt.solve(sys.A * r.filtered[k].cov).transpose();  // P_k A^T Pn^-1
    r.gain[k] = J;
    VectorXd ms = r.filtered[k].mean + J * (r.smoothed[k + 1].mean - r.predicted[k + 1].mean);
    MatrixXd Ps = r.filtered[k].cov + J * (r.smoothed[k + 1].cov - Pn) * J.transpose();
    r.smoothed[k] = {std::move(ms), 0.5 * (Ps + Ps.transpose())};
  }
  return r;
}

// Kalman heads

namespace {

VectorXd half_log_diag(const MatrixXd& cov, const char* what) {
  const VectorXd v = cov.diagonal();
  if (!(v.array() > 0.0).all()) throw NumericalError(std::string(what) + " variance is not positive", "KalmanHeads");
  return 0.5 * v.array().log().matrix();
}

}  // namespace

KalmanHeads::KalmanHeads(KalmanResult r) : r_(std::move(r)) {
  for (std::size_t k = 0; k < r_.gain.size(); ++k) {
    const MatrixXd& J = r_.gain[k];
    const MatrixXd cond = r_.filtered[k].cov - J * r_.predicted[k + 1].cov * J.transpose();
    smooth_log_std_.push_back(half_log_diag(cond, "backward conditional"));
  }
}

DiagGaussian KalmanHeads::belief(int k) const {
  const GaussianState& f = r_.filtered.at(k - 1);
  return {f.mean, half_log_diag(f.cov, "filtered")};
}

VectorXd KalmanHeads::smoothing_offset(int k) const {
  const MatrixXd& J = r_.gain.at(k - 1);
  return r_.filtered[k - 1].mean - J * r_.predicted[k].mean;
}

DiagGaussian KalmanHeads::smoothing(int k, const VectorXd& z_next) const {
  return {r_.gain.at(k - 1) * z_next + smoothing_offset(k), smooth_log_std_.at(k - 1)};
}

KalmanHeads exact_x_heads(const LinearGaussianSystem& sys, const Sequence& seq) {
  return KalmanHeads(kalman_exact(sys.x_only(), seq.x, {}));
}

double exact_predictability_gap(const LinearGaussianSystem& sys, const KalmanHeads& heads, const Sequence& seq,
                                int t) {
  sys.validate();
  const int T = seq.length();
  const int d = sys.latent();
  const int n = T * d;
  if (t < 1 || t > T) throw ParameterError("split outside [1, T]", "exact_predictability_gap");

  // Q_t as z = mu + M eps, built in draw order t, t-1..1, t+1..T.
  VectorXd mu = VectorXd::Zero(n);
  MatrixXd M = MatrixXd::Zero(n, n);
  double logdet_q = 0.0;
  const auto place = [&](int k, const MatrixXd& F, int parent, const VectorXd& c, const VectorXd& log_std) {
    const int r = (k - 1) * d;
    mu.segment(r, d) = c;
    if (parent > 0) {
      mu.segment(r, d) += F * mu.segment((parent - 1) * d, d);
      M.middleRows(r, d) = F * M.middleRows((parent - 1) * d, d);
    }
    M.block(r, r, d, d) += log_std.array().exp().matrix().asDiagonal();
    logdet_q += 2.0 * log_std.sum();
  };
  const DiagGaussian bt = heads.belief(t);
  place(t, MatrixXd(), 0, bt.mean, bt.log_std);
  for (int k = t - 1; k >= 1; --k) {
    place(k, heads.result().gain.at(k - 1), k + 1, heads.smoothing_offset(k), heads.smoothing_log_std(k));
  }
  const VectorXd q_log_std = 0.5 * sys.q.array().log().matrix();
  for (int k = t + 1; k <= T; ++k) place(k, sys.A, k - 1, VectorXd::Zero(d), q_log_std);
  const MatrixXd Sq = M * M.transpose();

  // Exact posterior through the dense joint: prior chain, then conditioning.
  MatrixXd M0 = MatrixXd::Zero(n, n);
  for (int k = 1; k <= T; ++k) {
    const int r = (k - 1) * d;
    if (k > 1) M0.middleRows(r, d) = sys.A * M0.middleRows(r - d, d);
    M0.block(r, r, d, d) += (k == 1 ? VectorXd(VectorXd::Ones(d)) : VectorXd(sys.q.cwiseSqrt())).asDiagonal();
  }
  const MatrixXd S0 = M0 * M0.transpose();
  Eigen::LLT<MatrixXd> prior(S0);
  if (prior.info() != Eigen::Success) throw NumericalError("prior covariance is singular", "exact_predictability_gap");
  MatrixXd Lambda = prior.solve(MatrixXd::Identity(n, n));
  VectorXd eta = VectorXd::Zero(n);
  for (int k = 1; k <= T; ++k) {
    const int r = (k - 1) * d;
    const VectorXd ix = sys.rx.cwiseInverse();
    Lambda.block(r, r, d, d) += sys.Cx.transpose() * ix.asDiagonal() * sys.Cx;
    eta.segment(r, d) += sys.Cx.transpose() * ix.cwiseProduct(seq.x[k - 1]);
    if (sys.y_dim() > 0) {
      const VectorXd iy = sys.ry.cwiseInverse();
      Lambda.block(r, r, d, d) += sys.Cy.transpose() * iy.asDiagonal() * sys.Cy;
      eta.segment(r, d) += sys.Cy.transpose() * iy.cwiseProduct(seq.y[k - 1]);
    }
  }
  Eigen::LLT<MatrixXd> post(Lambda);
  if (post.info() != Eigen::Success) throw NumericalError("posterior precision is singular", "exact_predictability_gap");
  const VectorXd mp = post.solve(eta);
  const double logdet_lambda = 2.0 * post.matrixL().toDenseMatrix().diagonal().array().log().sum();

  const VectorXd dm = mp - mu;
  return 0.5 * ((Lambda * Sq).trace() + dm.dot(Lambda * dm) - n - logdet_lambda - logdet_q);
}

}  // namespace coopgrid
