#include "coopgrid/nn.hpp"

#include "coopgrid/errors.hpp"

#include <cmath>

namespace coopgrid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Dense

VectorXd Dense::backward(const VectorXd& x, const VectorXd& dy, Dense& grad) const {
  grad.W.noalias() += dy * x.transpose();
  grad.b += dy;
  return W.transpose() * dy;
}

void Dense::randomize(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double s = scale / std::sqrt(std::max(1, in_dim()));
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = s * n(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * scale * n(rng);
}

// GatedUnit

GatedUnit::GatedUnit(int extra, int state)
    : extra_dim(extra),
      state_dim(state),
      forget(state, extra + state),
      input(state, extra + state),
      output(state, extra + state),
      candidate(state, extra + state),
      scale(state, state) {}

DiagGaussian GatedUnit::forward(const VectorXd& extra, const VectorXd& z, Cache* cache) const {
  if (extra.size() != extra_dim || z.size() != state_dim) {
    throw ParameterError("gated unit input has the wrong size", "GatedUnit");
  }
  const VectorXd u = concat(extra, z);
  const VectorXd f = sigmoid(forget.forward(u));
  const VectorXd i = sigmoid(input.forward(u));
  const VectorXd o = sigmoid(output.forward(u));
  const VectorXd g = candidate.forward(u).array().tanh().matrix();
  VectorXd mean = (f.array() * z.array() + i.array() * g.array()).matrix();
  const VectorXd tm = mean.array().tanh().matrix();
  VectorXd log_std = scale.forward((o.array() * tm.array()).matrix());
  if (cache) *cache = {u, f, i, o, g, tm};
  return {std::move(mean), std::move(log_std)};
}

void GatedUnit::backward(const VectorXd& z, const Cache& c, const VectorXd& dmean, const VectorXd& dlog_std,
                         GatedUnit& grad, VectorXd& dextra, VectorXd& dz) const {
  const VectorXd n = (c.o.array() * c.tm.array()).matrix();
  const VectorXd dn = scale.backward(n, dlog_std, grad.scale);
  const VectorXd d_o = (dn.array() * c.tm.array()).matrix();
  const VectorXd dm = (dmean.array() + dn.array() * c.o.array() * (1.0 - c.tm.array().square())).matrix();

  const VectorXd daf = (dm.array() * z.array() * c.f.array() * (1.0 - c.f.array())).matrix();
  const VectorXd dai = (dm.array() * c.g.array() * c.i.array() * (1.0 - c.i.array())).matrix();
  const VectorXd dao = (d_o.array() * c.o.array() * (1.0 - c.o.array())).matrix();
  const VectorXd dag = (dm.array() * c.i.array() * (1.0 - c.g.array().square())).matrix();

  VectorXd du = forget.backward(c.u, daf, grad.forget);
  du += input.backward(c.u, dai, grad.input);
  du += output.backward(c.u, dao, grad.output);
  du += candidate.backward(c.u, dag, grad.candidate);

  if (dextra.size() != extra_dim) dextra = VectorXd::Zero(extra_dim);
  if (dz.size() != state_dim) dz = VectorXd::Zero(state_dim);
  dextra += du.head(extra_dim);
  dz += du.tail(state_dim) + (dm.array() * c.f.array()).matrix();
}

MatrixXd GatedUnit::mean_jacobian(const VectorXd& extra, const VectorXd& z) const {
  Cache c;
  forward(extra, z, &c);
  const auto tail = [&](const Dense& d) { return d.W.rightCols(state_dim); };
  MatrixXd J = c.f.asDiagonal();
  J += (z.array() * c.f.array() * (1.0 - c.f.array())).matrix().asDiagonal() * tail(forget);
  J += (c.g.array() * c.i.array() * (1.0 - c.i.array())).matrix().asDiagonal() * tail(input);
  J += (c.i.array() * (1.0 - c.g.array().square())).matrix().asDiagonal() * tail(candidate);
  return J;
}

void GatedUnit::randomize(std::mt19937_64& rng, double s) {
  forget.randomize(rng, s);
  input.randomize(rng, s);
  output.randomize(rng, s);
  candidate.randomize(rng, s);
  scale.randomize(rng, s);
}

// DMap

DMap::DMap(int in, int hidden, int out) : gate(hidden, in), candidate(hidden, in), mean(out, hidden), scale(out, hidden) {}

DiagGaussian DMap::forward(const VectorXd& b, Cache* cache) const {
  if (b.size() != gate.in_dim()) throw ParameterError("belief head input has the wrong size", "DMap");
  const VectorXd gi = sigmoid(gate.forward(b));
  const VectorXd g = candidate.forward(b).array().tanh().matrix();
  const VectorXd n = (gi.array() * g.array()).matrix();
  if (cache) *cache = {gi, g, n};
  return {mean.forward(n), scale.forward(n)};
}

VectorXd DMap::backward(const VectorXd& b, const Cache& c, const VectorXd& dmean, const VectorXd& dlog_std,
                        DMap& grad) const {
  VectorXd dn = mean.backward(c.n, dmean, grad.mean);
  dn += scale.backward(c.n, dlog_std, grad.scale);
  const VectorXd dai = (dn.array() * c.g.array() * c.gi.array() * (1.0 - c.gi.array())).matrix();
  const VectorXd dag = (dn.array() * c.gi.array() * (1.0 - c.g.array().square())).matrix();
  VectorXd db = gate.backward(b, dai, grad.gate);
  db += candidate.backward(b, dag, grad.candidate);
  return db;
}

void DMap::randomize(std::mt19937_64& rng, double s) {
  gate.randomize(rng, s);
  candidate.randomize(rng, s);
  mean.randomize(rng, s);
  scale.randomize(rng, s);
}

// Gru

Gru::Gru(int in, int hidden)
    : input_dim(in), hidden_dim(hidden), reset(hidden, in + hidden), update(hidden, in + hidden),
      candidate(hidden, in + hidden) {}

VectorXd Gru::forward(const VectorXd& u, const VectorXd& h, Cache* cache) const {
  if (u.size() != input_dim || h.size() != hidden_dim) throw ParameterError("GRU input has the wrong size", "Gru");
  const VectorXd uh = concat(u, h);
  const VectorXd r = sigmoid(reset.forward(uh));
  const VectorXd s = sigmoid(update.forward(uh));
  const VectorXd urh = concat(u, (r.array() * h.array()).matrix());
  const VectorXd n = candidate.forward(urh).array().tanh().matrix();
  if (cache) *cache = {uh, r, s, n, urh};
  return ((1.0 - s.array()) * n.array() + s.array() * h.array()).matrix();
}

void Gru::backward(const VectorXd& h, const Cache& c, const VectorXd& dh_next, Gru& grad, VectorXd& du,
                   VectorXd& dh) const {
  if (du.size() != input_dim) du = VectorXd::Zero(input_dim);
  if (dh.size() != hidden_dim) dh = VectorXd::Zero(hidden_dim);
  const VectorXd dn = (dh_next.array() * (1.0 - c.s.array())).matrix();
  const VectorXd ds = (dh_next.array() * (h.array() - c.n.array())).matrix();
  dh += (dh_next.array() * c.s.array()).matrix();

  const VectorXd dan = (dn.array() * (1.0 - c.n.array().square())).matrix();
  const VectorXd durh = candidate.backward(c.urh, dan, grad.candidate);
  du += durh.head(input_dim);
  const VectorXd drh = durh.tail(hidden_dim);
  dh += (drh.array() * c.r.array()).matrix();
  const VectorXd dr = (drh.array() * h.array()).matrix();

  const VectorXd dar = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  const VectorXd das = (ds.array() * c.s.array() * (1.0 - c.s.array())).matrix();
  VectorXd duh = reset.backward(c.uh, dar, grad.reset);
  duh += update.backward(c.uh, das, grad.update);
  du += duh.head(input_dim);
  dh += duh.tail(hidden_dim);
}

void Gru::randomize(std::mt19937_64& rng, double s) {
  reset.randomize(rng, s);
  update.randomize(rng, s);
  candidate.randomize(rng, s);
}

}  // namespace coopgrid
