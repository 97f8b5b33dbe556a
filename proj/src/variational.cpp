#include "coopgrid/variational.hpp"

#include "coopgrid/checkpoint.hpp"
#include "coopgrid/errors.hpp"
#include "coopgrid/harness.hpp"

#include <cmath>
#include <ostream>
#include <type_traits>

namespace coopgrid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ModelDims::validate() const {
  if (latent < 1 || x < 1 || belief_hidden < 1 || head_hidden < 1) {
    throw ParameterError("latent, x, belief and head sizes must be positive", "ModelDims");
  }
  if (y < 0 || v < 0 || c < 0 || a < 0 || m < 0) throw ParameterError("negative dimension", "ModelDims");
}

// Parameters

GenerativeParams::GenerativeParams(const ModelDims& d)
    : dims(d),
      transition(0, d.latent),
      linear_transition(d.latent, d.latent),
      linear_log_std(VectorXd::Zero(d.latent)),
      emit_y(d.y, d.latent),
      emit_x(d.x, d.latent),
      x_prev(MatrixXd::Zero(d.x, d.x)),
      x_y(MatrixXd::Zero(d.x, d.y)),
      x_a(MatrixXd::Zero(d.x, d.a)),
      mask(d.m, d.a + d.y),
      alpha_x(VectorXd::Constant(d.x, 0.5)),
      alpha_y(VectorXd::Constant(d.y, 0.5)),
      alpha_m(VectorXd::Constant(d.m, 0.5)) {
  d.validate();
}

GenerativeParams GenerativeParams::random(const ModelDims& d, std::mt19937_64& rng, double scale) {
  GenerativeParams g(d);
  g.transition.randomize(rng, scale);
  g.linear_transition.randomize(rng, scale);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < g.linear_log_std.size(); ++i) g.linear_log_std[i] = 0.2 * scale * n(rng);
  g.emit_y.randomize(rng, scale);
  g.emit_x.randomize(rng, scale);
  for (MatrixXd* m : {&g.x_prev, &g.x_y, &g.x_a}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = 0.3 * scale * n(rng);
  }
  g.mask.randomize(rng, scale);
  return g;
}

void GenerativeParams::validate() const {
  dims.validate();
  const auto check_alpha = [](const VectorXd& a, int n, const char* what) {
    if (a.size() != n) throw ParameterError(std::string(what) + " has the wrong size", "GenerativeParams");
    if (!(a.array() >= kMinEmissionVariance).all()) {
      throw ParameterError(std::string(what) + " entries must be >= 1/(2 pi)", "GenerativeParams");
    }
  };
  check_alpha(alpha_x, dims.x, "alpha_x");
  check_alpha(alpha_y, dims.y, "alpha_y");
  check_alpha(alpha_m, dims.m, "alpha_m");
  if (y_emission == YEmission::ClassWeighted && dims.y % 6 != 0) {
    throw ParameterError("class-weighted y emission needs 6 channels per cell", "GenerativeParams");
  }
}

DiagGaussian GenerativeParams::transition_dist(const VectorXd& z) const {
  if (transition_kind == TransitionKind::Linear) return {linear_transition.forward(z), linear_log_std};
  return transition.forward(VectorXd(), z);
}

VectorXd GenerativeParams::action_x_mean(const VectorXd& z, const VectorXd& x_prev_k, const VectorXd& y_k,
                                         const VectorXd& a_k) const {
  return emit_x.forward(z) + x_prev * x_prev_k + x_y * y_k + x_a * a_k;
}

RecognitionParams::RecognitionParams(const ModelDims& d)
    : dims(d),
      belief(2 * d.x + d.v, d.belief_hidden),
      head(d.belief(), d.head_hidden, d.latent),
      smoothing(d.belief(), d.latent) {
  d.validate();
}

RecognitionParams RecognitionParams::random(const ModelDims& d, std::mt19937_64& rng, double scale) {
  RecognitionParams r(d);
  r.belief.randomize(rng, scale);
  r.head.randomize(rng, scale);
  r.smoothing.randomize(rng, scale);
  return r;
}

// Sequences

namespace {

VectorXd at_or_empty(const std::vector<VectorXd>& s, int i) { return s.empty() ? VectorXd() : s[i]; }

void check_series(const std::vector<VectorXd>& s, std::size_t n, int dim, bool may_be_empty, const char* what) {
  if (s.empty() && (may_be_empty || n == 0)) return;
  if (s.size() != n) throw ParameterError(std::string(what) + " has the wrong length", "Sequence");
  for (const auto& e : s) {
    if (e.size() != dim) throw ParameterError(std::string(what) + " entry has the wrong size", "Sequence");
    if (!e.allFinite()) throw ParameterError(std::string(what) + " entry is not finite", "Sequence");
  }
}

}  // namespace

void Sequence::validate(const ModelDims& d, bool with_actions) const {
  const auto T = x.size();
  if (T < 1) throw ParameterError("empty sequence", "Sequence");
  check_series(x, T, d.x, false, "x");
  check_series(y, T, d.y, false, "y");
  check_series(v, T, d.v, d.v == 0, "v");
  check_series(c, T, d.c, d.c == 0, "c");
  if (with_actions) {
    check_series(a, T - 1, d.a, false, "a");
    check_series(m, T - 1, d.m, false, "m");
  }
}

NoiseBundle NoiseBundle::draw(int T, int latent, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  NoiseBundle b;
  b.eps.resize(static_cast<std::size_t>(T));
  for (auto& e : b.eps) {
    e.resize(latent);
    for (int i = 0; i < latent; ++i) e[i] = n(rng);
  }
  return b;
}

// Beliefs and heads

namespace {

struct BeliefTrace {
  std::vector<VectorXd> h;  // h[0] = 0, h[k] for k = 1..T
  std::vector<VectorXd> b;  // b[k] for k = 1..T, b[0] unused
  std::vector<Gru::Cache> cache;
};

BeliefTrace run_beliefs(const RecognitionParams& rec, const Sequence& seq, bool keep_cache) {
  const ModelDims& d = rec.dims;
  const int T = seq.length();
  BeliefTrace tr;
  tr.h.assign(T + 1, VectorXd::Zero(d.belief_hidden));
  tr.b.assign(T + 1, VectorXd());
  if (keep_cache) tr.cache.resize(T + 1);
  VectorXd x_prev = VectorXd::Zero(d.x);
  for (int k = 1; k <= T; ++k) {
    const VectorXd& xk = seq.x[k - 1];
    VectorXd u(rec.belief.input_dim);
    u << xk, x_prev, at_or_empty(seq.v, k - 1);
    tr.h[k] = rec.belief.forward(u, tr.h[k - 1], keep_cache ? &tr.cache[k] : nullptr);
    VectorXd b(d.belief());
    b << xk, tr.h[k], at_or_empty(seq.c, k - 1);
    tr.b[k] = std::move(b);
    x_prev = xk;
  }
  return tr;
}

}  // namespace

std::vector<VectorXd> beliefs(const RecognitionParams& rec, const Sequence& seq) {
  seq.validate(rec.dims, false);
  auto tr = run_beliefs(rec, seq, false);
  return {tr.b.begin() + 1, tr.b.end()};
}

NetworkHeads::NetworkHeads(const RecognitionParams& rec, const Sequence& seq) : rec_(rec), b_(beliefs(rec, seq)) {}

DiagGaussian NetworkHeads::belief(int k) const { return rec_.head.forward(b_.at(k - 1)); }

DiagGaussian NetworkHeads::smoothing(int k, const VectorXd& z_next) const {
  return rec_.smoothing.forward(b_.at(k - 1), z_next);
}

// Plans

int default_t_min(int T) { return static_cast<int>(std::ceil(0.4 * T - 1e-12)); }

namespace {

using Src = LatentDraw::Source;
using Kind = LossTerm::Kind;

void check_split(int T, int t, int t_min) {
  if (T < 1) throw ParameterError("sequence length must be >= 1", "split");
  if (t_min <= 0) t_min = default_t_min(T);
  const bool ok = (T == 1 && t == 1) || (t >= std::max(1, t_min) && t <= T - 1);
  if (!ok) {
    throw ParameterError("split t=" + std::to_string(t) + " outside [" + std::to_string(t_min) + ", " +
                             std::to_string(T - 1) + "]",
                         "split");
  }
}

LossPlan lpvae_latents(int T, int t) {
  LossPlan p;
  p.T = T;
  p.draws.push_back({Src::Belief, t});
  for (int k = t - 1; k >= 1; --k) p.draws.push_back({Src::Smoothing, k, k + 1});
  for (int k = t + 1; k <= T; ++k) p.draws.push_back({Src::Transition, k, k - 1});
  p.terms.push_back({Kind::Own, t, 0, 1.0, LossGroup::Encoder});
  for (int k = t - 1; k >= 1; --k) p.terms.push_back({Kind::Own, k, 0, 1.0, LossGroup::Encoder});
  p.terms.push_back({Kind::Prior, 1, 0, -1.0, LossGroup::Encoder});
  for (int k = 2; k <= t; ++k) p.terms.push_back({Kind::Transition, k, k - 1, -1.0, LossGroup::Encoder});
  return p;
}

LossGroup emission_group(int k, int t) { return k <= t ? LossGroup::Decoder : LossGroup::Prediction; }

}  // namespace

LossPlan lpvae_plan(int T, int t, int t_min) {
  check_split(T, t, t_min);
  LossPlan p = lpvae_latents(T, t);
  for (int k = 1; k <= T; ++k) {
    p.terms.push_back({Kind::EmitX, k, 0, -1.0, emission_group(k, t)});
    p.terms.push_back({Kind::EmitY, k, 0, -1.0, emission_group(k, t)});
  }
  return p;
}

LossPlan lpvae_action_plan(int T, int t, int t_min) {
  check_split(T, t, t_min);
  LossPlan p = lpvae_latents(T, t);
  p.needs_actions = true;
  for (int k = 1; k <= T; ++k) {
    p.terms.push_back({Kind::EmitY, k, 0, -1.0, emission_group(k, t)});
    if (k >= 2) {
      p.terms.push_back({Kind::EmitXAction, k, 0, -1.0, emission_group(k, t)});
      p.terms.push_back({Kind::Mask, k, 0, -1.0, emission_group(k, t)});
    }
  }
  return p;
}

LossPlan stdvae_plan(int T, int t) {
  if (T < 2 || t < 1 || t > T - 1) throw ParameterError("STD-VAE split must satisfy 1 <= t <= T-1", "stdvae");
  LossPlan p;
  p.T = T;
  p.draws.push_back({Src::Belief, T});
  for (int k = T - 1; k >= t; --k) p.draws.push_back({Src::Smoothing, k, k + 1});
  p.terms.push_back({Kind::Own, T, 0, 1.0, LossGroup::Encoder});
  for (int k = T - 1; k >= t; --k) p.terms.push_back({Kind::Own, k, 0, 1.0, LossGroup::Encoder});
  p.terms.push_back({Kind::BeliefAt, t, 0, -1.0, LossGroup::Encoder});
  for (int k = t + 1; k <= T; ++k) p.terms.push_back({Kind::Transition, k, k - 1, -1.0, LossGroup::Encoder});
  for (int k = t; k <= T; ++k) p.terms.push_back({Kind::EmitX, k, 0, -1.0, LossGroup::Decoder});
  return p;
}

LossPlan tdvae_plan(int T, int t, int delta, JumpRange range) {
  if (range.min < 1 || range.max < range.min) throw ParameterError("invalid jump range", "tdvae");
  if (delta < range.min || delta > range.max) throw ParameterError("delta outside the jump range", "tdvae");
  if (t < 1 || t + delta > T) throw ParameterError("TD-VAE needs 1 <= t and t + delta <= T", "tdvae");
  const int s = t + delta;
  LossPlan p;
  p.T = T;
  p.draws.push_back({Src::Belief, s});
  p.draws.push_back({Src::Smoothing, t, s});
  p.terms.push_back({Kind::Own, s, 0, 1.0, LossGroup::Encoder});
  p.terms.push_back({Kind::Own, t, 0, 1.0, LossGroup::Encoder});
  p.terms.push_back({Kind::BeliefAt, t, 0, -1.0, LossGroup::Encoder});
  p.terms.push_back({Kind::Transition, s, t, -1.0, LossGroup::Encoder});
  p.terms.push_back({Kind::EmitX, s, 0, -1.0, LossGroup::Decoder});
  return p;
}

// Emission helpers

CrossEntropy class_weighted_nll(const VectorXd& y, const VectorXd& logits, const std::array<double, 6>& weights) {
  if (y.size() % 6 != 0 || logits.size() != y.size()) {
    throw ParameterError("cross-entropy needs matching 6-channel layouts", "class_weighted_nll");
  }
  const Eigen::Index n = y.size() / 6;
  CrossEntropy out;
  out.dlogits = VectorXd::Zero(y.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    int best = 0;
    double mx = logits[j];
    for (int k = 1; k < 6; ++k) {
      if (y[k * n + j] > y[best * n + j]) best = k;
      mx = std::max(mx, logits[k * n + j]);
    }
    const double weight = (1.0 - y[5 * n + j]) * weights[static_cast<std::size_t>(best)];
    if (weight == 0.0) continue;
    double z = 0.0;
    for (int k = 0; k < 6; ++k) z += std::exp(logits[k * n + j] - mx);
    const double lse = mx + std::log(z);
    out.nll += weight * (lse - logits[best * n + j]);
    for (int k = 0; k < 6; ++k) {
      const double p = std::exp(logits[k * n + j] - lse);
      out.dlogits[k * n + j] = weight * (p - (k == best ? 1.0 : 0.0));
    }
  }
  return out;
}

double mask_nll(const GenerativeParams& gen, const VectorXd& m, const VectorXd& a, const VectorXd& y) {
  return -log_normal(m, gen.mask.forward(concat(a, y)), gen.alpha_m);
}

namespace {

void check_inputs(const LossPlan& plan, const GenerativeParams& gen, const Sequence& seq, const NoiseBundle& noise) {
  gen.validate();
  seq.validate(gen.dims, plan.needs_actions);
  if (seq.length() != plan.T) throw ParameterError("sequence length differs from the plan", "loss");
  if (static_cast<int>(noise.eps.size()) < plan.T) throw ParameterError("noise bundle is too short", "loss");
  for (int k = 0; k < plan.T; ++k) {
    if (noise.eps[k].size() != gen.dims.latent) throw ParameterError("noise has the wrong size", "loss");
  }
}

// log density of an emission-type term at latent z.
double emission_log_density(const LossTerm& term, const GenerativeParams& gen, const Sequence& seq,
                            const VectorXd& z) {
  const int i = term.k - 1;
  switch (term.kind) {
    case Kind::EmitX:
      return log_normal(seq.x[i], gen.emit_x.forward(z), gen.alpha_x);
    case Kind::EmitY:
      if (gen.y_emission == YEmission::ClassWeighted) {
        return -class_weighted_nll(seq.y[i], gen.emit_y.forward(z), gen.class_weights).nll;
      }
      return log_normal(seq.y[i], gen.emit_y.forward(z), gen.alpha_y);
    case Kind::EmitXAction:
      return log_normal(seq.x[i], gen.action_x_mean(z, seq.x[i - 1], seq.y[i], seq.a[i - 1]), gen.alpha_x);
    case Kind::Mask:
      return -mask_nll(gen, seq.m[i - 1], seq.a[i - 1], seq.y[i]);
    default:
      throw ParameterError("not an emission term", "loss");
  }
}

void add_to_group(LossBreakdown& out, LossGroup g, double v) {
  switch (g) {
    case LossGroup::Encoder:
      out.encoder += v;
      break;
    case LossGroup::Decoder:
      out.decoder += v;
      break;
    case LossGroup::Prediction:
      out.prediction += v;
      break;
  }
}

}  // namespace

LossBreakdown evaluate_plan(const LossPlan& plan, const GenerativeParams& gen, const PosteriorHeads& heads,
                            const Sequence& seq, const NoiseBundle& noise) {
  check_inputs(plan, gen, seq, noise);
  const int T = plan.T;
  std::vector<VectorXd> z(T + 1);
  std::vector<DiagGaussian> dist(T + 1);
  for (const LatentDraw& d : plan.draws) {
    switch (d.source) {
      case Src::Belief:
        dist[d.k] = heads.belief(d.k);
        break;
      case Src::Smoothing:
        dist[d.k] = heads.smoothing(d.k, z[d.from]);
        break;
      case Src::Transition:
        dist[d.k] = gen.transition_dist(z[d.from]);
        break;
    }
    z[d.k] = sample(dist[d.k], noise.eps[d.k - 1]);
  }

  LossBreakdown out;
  for (const LossTerm& term : plan.terms) {
    double lp = 0.0;
    switch (term.kind) {
      case Kind::Own:
        lp = log_prob(dist[term.k], z[term.k]);
        break;
      case Kind::BeliefAt:
        lp = log_prob(heads.belief(term.k), z[term.k]);
        break;
      case Kind::Prior:
        lp = log_prob(DiagGaussian::standard(gen.dims.latent), z[term.k]);
        break;
      case Kind::Transition:
        lp = log_prob(gen.transition_dist(z[term.from]), z[term.k]);
        break;
      default:
        lp = emission_log_density(term, gen, seq, z[term.k]);
    }
    add_to_group(out, term.group, term.sign * lp);
  }
  out.total = out.encoder + out.decoder + out.prediction;
  return out;
}

// Gradients

namespace {

DiagGaussian transition_forward(const GenerativeParams& gen, const VectorXd& z, GatedUnit::Cache* cache) {
  if (gen.transition_kind == TransitionKind::Linear) return gen.transition_dist(z);
  return gen.transition.forward(VectorXd(), z, cache);
}

void transition_backward(const GenerativeParams& gen, const VectorXd& z, const GatedUnit::Cache& cache,
                         const VectorXd& dmean, const VectorXd& dlog_std, GenerativeParams& grad, VectorXd& dz) {
  if (gen.transition_kind == TransitionKind::Linear) {
    dz += gen.linear_transition.backward(z, dmean, grad.linear_transition);
    grad.linear_log_std += dlog_std;
    return;
  }
  VectorXd dextra;
  gen.transition.backward(z, cache, dmean, dlog_std, grad.transition, dextra, dz);
}

struct DrawState {
  DiagGaussian dist;
  DMap::Cache head;
  GatedUnit::Cache gated;
  VectorXd dmean, dlog_std;
};

}  // namespace

LossBreakdown plan_gradient(const LossPlan& plan, const GenerativeParams& gen, const RecognitionParams& rec,
                            const Sequence& seq, const NoiseBundle& noise, ParamGradients& grad) {
  check_inputs(plan, gen, seq, noise);
  const int T = plan.T;
  const int dz_dim = gen.dims.latent;
  const BeliefTrace tr = run_beliefs(rec, seq, true);

  // Forward.
  std::vector<VectorXd> z(T + 1);
  std::vector<int> draw_of(T + 1, -1);
  std::vector<DrawState> st(plan.draws.size());
  for (std::size_t i = 0; i < plan.draws.size(); ++i) {
    const LatentDraw& d = plan.draws[i];
    DrawState& s = st[i];
    switch (d.source) {
      case Src::Belief:
        s.dist = rec.head.forward(tr.b[d.k], &s.head);
        break;
      case Src::Smoothing:
        s.dist = rec.smoothing.forward(tr.b[d.k], z[d.from], &s.gated);
        break;
      case Src::Transition:
        s.dist = transition_forward(gen, z[d.from], &s.gated);
        break;
    }
    z[d.k] = sample(s.dist, noise.eps[d.k - 1]);
    s.dmean = VectorXd::Zero(dz_dim);
    s.dlog_std = VectorXd::Zero(dz_dim);
    draw_of[d.k] = static_cast<int>(i);
  }

  // Terms: values plus partials into latents, draw distributions, beliefs
  // and parameters.
  std::vector<VectorXd> dz(T + 1, VectorXd::Zero(dz_dim));
  std::vector<VectorXd> db(T + 1, VectorXd::Zero(rec.dims.belief()));
  LossBreakdown out;
  for (const LossTerm& term : plan.terms) {
    const double s = term.sign;
    const int k = term.k;
    const VectorXd& zk = z[k];
    double lp = 0.0;
    switch (term.kind) {
      case Kind::Own: {
        DrawState& ds = st[static_cast<std::size_t>(draw_of[k])];
        lp = log_prob(ds.dist, zk);
        const LogProbGrad g = log_prob_grad(ds.dist, zk);
        dz[k] += s * g.dx;
        ds.dmean += s * g.dmean;
        ds.dlog_std += s * g.dlog_std;
        break;
      }
      case Kind::BeliefAt: {
        DMap::Cache c;
        const DiagGaussian q = rec.head.forward(tr.b[k], &c);
        lp = log_prob(q, zk);
        const LogProbGrad g = log_prob_grad(q, zk);
        dz[k] += s * g.dx;
        db[k] += rec.head.backward(tr.b[k], c, s * g.dmean, s * g.dlog_std, grad.rec.head);
        break;
      }
      case Kind::Prior:
        lp = log_prob(DiagGaussian::standard(dz_dim), zk);
        dz[k] -= s * zk;
        break;
      case Kind::Transition: {
        GatedUnit::Cache c;
        const DiagGaussian p = transition_forward(gen, z[term.from], &c);
        lp = log_prob(p, zk);
        const LogProbGrad g = log_prob_grad(p, zk);
        dz[k] += s * g.dx;
        transition_backward(gen, z[term.from], c, s * g.dmean, s * g.dlog_std, grad.gen, dz[term.from]);
        break;
      }
      case Kind::EmitX: {
        const VectorXd& x = seq.x[k - 1];
        const VectorXd mu = gen.emit_x.forward(zk);
        lp = log_normal(x, mu, gen.alpha_x);
        const VectorXd dmu = s * ((x - mu).array() / gen.alpha_x.array()).matrix();
        dz[k] += gen.emit_x.backward(zk, dmu, grad.gen.emit_x);
        break;
      }
      case Kind::EmitY: {
        const VectorXd& y = seq.y[k - 1];
        const VectorXd mu = gen.emit_y.forward(zk);
        VectorXd dmu;
        if (gen.y_emission == YEmission::ClassWeighted) {
          const CrossEntropy ce = class_weighted_nll(y, mu, gen.class_weights);
          lp = -ce.nll;
          dmu = -s * ce.dlogits;
        } else {
          lp = log_normal(y, mu, gen.alpha_y);
          dmu = s * ((y - mu).array() / gen.alpha_y.array()).matrix();
        }
        dz[k] += gen.emit_y.backward(zk, dmu, grad.gen.emit_y);
        break;
      }
      case Kind::EmitXAction: {
        const VectorXd& x = seq.x[k - 1];
        const VectorXd& xp = seq.x[k - 2];
        const VectorXd& y = seq.y[k - 1];
        const VectorXd& a = seq.a[k - 2];
        const VectorXd mu = gen.action_x_mean(zk, xp, y, a);
        lp = log_normal(x, mu, gen.alpha_x);
        const VectorXd dmu = s * ((x - mu).array() / gen.alpha_x.array()).matrix();
        dz[k] += gen.emit_x.backward(zk, dmu, grad.gen.emit_x);
        grad.gen.x_prev.noalias() += dmu * xp.transpose();
        grad.gen.x_y.noalias() += dmu * y.transpose();
        grad.gen.x_a.noalias() += dmu * a.transpose();
        break;
      }
      case Kind::Mask: {
        const VectorXd in = concat(seq.a[k - 2], seq.y[k - 1]);
        const VectorXd& m = seq.m[k - 2];
        const VectorXd mu = gen.mask.forward(in);
        lp = log_normal(m, mu, gen.alpha_m);
        gen.mask.backward(in, s * ((m - mu).array() / gen.alpha_m.array()).matrix(), grad.gen.mask);
        break;
      }
    }
    add_to_group(out, term.group, s * lp);
  }
  out.total = out.encoder + out.decoder + out.prediction;

  // Draws in reverse order: z = mean + exp(log_std) * eps.
  for (std::size_t i = plan.draws.size(); i-- > 0;) {
    const LatentDraw& d = plan.draws[i];
    DrawState& s = st[i];
    s.dmean += dz[d.k];
    s.dlog_std += (dz[d.k].array() * s.dist.log_std.array().exp() * noise.eps[d.k - 1].array()).matrix();
    switch (d.source) {
      case Src::Belief:
        db[d.k] += rec.head.backward(tr.b[d.k], s.head, s.dmean, s.dlog_std, grad.rec.head);
        break;
      case Src::Smoothing: {
        VectorXd dextra;
        rec.smoothing.backward(z[d.from], s.gated, s.dmean, s.dlog_std, grad.rec.smoothing, dextra, dz[d.from]);
        db[d.k] += dextra;
        break;
      }
      case Src::Transition:
        transition_backward(gen, z[d.from], s.gated, s.dmean, s.dlog_std, grad.gen, dz[d.from]);
        break;
    }
  }

  // Beliefs through time; only h_k carries parameters.
  const int x_dim = rec.dims.x, h_dim = rec.dims.belief_hidden;
  VectorXd carry = VectorXd::Zero(h_dim);
  for (int k = T; k >= 1; --k) {
    const VectorXd dh = db[k].segment(x_dim, h_dim) + carry;
    VectorXd du, dh_prev;
    rec.belief.backward(tr.h[k - 1], tr.cache[k], dh, grad.rec.belief, du, dh_prev);
    carry = dh_prev;
  }
  return out;
}

// Objectives

LossBreakdown lpvae_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                         const NoiseBundle& noise, int t_min) {
  return evaluate_plan(lpvae_plan(seq.length(), t, t_min), gen, NetworkHeads(rec, seq), seq, noise);
}

LossBreakdown lpvae_loss(const GenerativeParams& gen, const PosteriorHeads& heads, const Sequence& seq, int t,
                         const NoiseBundle& noise, int t_min) {
  return evaluate_plan(lpvae_plan(seq.length(), t, t_min), gen, heads, seq, noise);
}

LossBreakdown lpvae_action_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                                const NoiseBundle& noise, int t_min) {
  return evaluate_plan(lpvae_action_plan(seq.length(), t, t_min), gen, NetworkHeads(rec, seq), seq, noise);
}

double stdvae_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                   const NoiseBundle& noise) {
  return evaluate_plan(stdvae_plan(seq.length(), t), gen, NetworkHeads(rec, seq), seq, noise).total;
}

double tdvae_jumpy_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                        int delta, const NoiseBundle& noise, JumpRange range) {
  return evaluate_plan(tdvae_plan(seq.length(), t, delta, range), gen, NetworkHeads(rec, seq), seq, noise).total;
}

// Training

namespace {

LossPlan sample_plan(const TrainOptions& o, int T, std::mt19937_64& rng) {
  const auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  switch (o.objective) {
    case Objective::LpVae:
    case Objective::LpVaeActions: {
      const int lo = std::max(1, o.t_min > 0 ? o.t_min : default_t_min(T));
      const int t = T == 1 ? 1 : uniform(lo, T - 1);
      return o.objective == Objective::LpVae ? lpvae_plan(T, t, o.t_min) : lpvae_action_plan(T, t, o.t_min);
    }
    case Objective::StdVae:
      return stdvae_plan(T, uniform(1, T - 1));
    case Objective::TdVaeJumpy: {
      const int delta = uniform(o.jump.min, std::min(o.jump.max, T - 1));
      return tdvae_plan(T, uniform(1, T - delta), delta, o.jump);
    }
  }
  throw ParameterError("unknown objective", "train_toy");
}

}  // namespace

TrainResult train_toy(const GenerativeParams& gen, const RecognitionParams& rec, const std::vector<Sequence>& data,
                      const TrainOptions& opts) {
  if (data.empty()) throw ParameterError("empty dataset", "train_toy");
  if (opts.steps < 0 || !std::isfinite(opts.step_size) || opts.step_size < 0.0 || opts.max_grad_norm < 0.0) {
    throw ParameterError("steps and step size must be non-negative", "train_toy");
  }
  TrainResult r{gen, rec, {}};
  r.trace.reserve(static_cast<std::size_t>(opts.steps));
  std::mt19937_64 rng(opts.seed);
  const GenerativeParams gen_zero = zeros_like(gen);
  const RecognitionParams rec_zero = zeros_like(rec);

  for (int step = 0; step < opts.steps; ++step) {
    const Sequence& seq = data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)];
    const LossPlan plan = sample_plan(opts, seq.length(), rng);
    const NoiseBundle noise = NoiseBundle::draw(seq.length(), gen.dims.latent, rng);
    ParamGradients g{gen_zero, rec_zero};
    const LossBreakdown loss = plan_gradient(plan, r.gen, r.rec, seq, noise, g);

    VectorXd gg = opts.train_generative ? flatten(g.gen) : VectorXd::Zero(param_count(g.gen));
    VectorXd gr = opts.train_recognition ? flatten(g.rec) : VectorXd::Zero(param_count(g.rec));
    if (!std::isfinite(loss.total) || !gg.allFinite() || !gr.allFinite()) {
      throw NumericalError("non-finite loss or gradient at step " + std::to_string(step) +
                               " (loss " + format_float(loss.total) + ")",
                           "train_toy");
    }
    if (opts.max_grad_norm > 0.0) {
      const double norm = std::sqrt(gg.squaredNorm() + gr.squaredNorm());
      if (norm > opts.max_grad_norm) {
        gg *= opts.max_grad_norm / norm;
        gr *= opts.max_grad_norm / norm;
      }
    }
    unflatten(r.gen, flatten(r.gen) - opts.step_size * gg);
    unflatten(r.rec, flatten(r.rec) - opts.step_size * gr);
    r.trace.push_back(loss);
  }
  return r;
}

std::string loss_trace_header() { return "step,encoder,decoder,prediction,total"; }

void write_loss_trace(std::ostream& out, const std::vector<LossBreakdown>& trace) {
  out << loss_trace_header() << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const LossBreakdown& l = trace[i];
    out << i << ',' << format_float(l.encoder) << ',' << format_float(l.decoder) << ','
        << format_float(l.prediction) << ',' << format_float(l.total) << '\n';
  }
}

// Checkpoints

namespace {

void put_dims(Checkpoint& ck, const std::string& p, const ModelDims& d) {
  ck.put_scalar(p + "dims.latent", d.latent);
  ck.put_scalar(p + "dims.x", d.x);
  ck.put_scalar(p + "dims.y", d.y);
  ck.put_scalar(p + "dims.v", d.v);
  ck.put_scalar(p + "dims.c", d.c);
  ck.put_scalar(p + "dims.a", d.a);
  ck.put_scalar(p + "dims.m", d.m);
  ck.put_scalar(p + "dims.belief_hidden", d.belief_hidden);
  ck.put_scalar(p + "dims.head_hidden", d.head_hidden);
}

ModelDims get_dims(const Checkpoint& ck, const std::string& p) {
  const auto get = [&](const char* n) { return static_cast<int>(ck.scalar(p + "dims." + n)); };
  ModelDims d;
  d.latent = get("latent");
  d.x = get("x");
  d.y = get("y");
  d.v = get("v");
  d.c = get("c");
  d.a = get("a");
  d.m = get("m");
  d.belief_hidden = get("belief_hidden");
  d.head_hidden = get("head_hidden");
  return d;
}

template <typename P>
void put_all(Checkpoint& ck, const std::string& prefix, P p) {
  p.visit(prefix, [&](const std::string& name, auto& m) { ck.put(name, m); });
}

template <typename P>
void get_all(const Checkpoint& ck, const std::string& prefix, P& p) {
  p.visit(prefix, [&](const std::string& name, auto& m) {
    using M = std::decay_t<decltype(m)>;
    M loaded;
    if constexpr (std::is_same_v<M, VectorXd>) {
      loaded = ck.vector(name);
    } else {
      loaded = ck.matrix(name);
    }
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw IoError("array '" + name + "' has the wrong shape", "load_params");
    }
    m = loaded;
  });
}

}  // namespace

void save_params(Checkpoint& ck, const GenerativeParams& gen, const RecognitionParams& rec) {
  put_dims(ck, "gen.", gen.dims);
  ck.put_scalar("gen.transition_kind", gen.transition_kind == TransitionKind::Linear ? 1.0 : 0.0);
  ck.put_scalar("gen.y_emission", gen.y_emission == YEmission::ClassWeighted ? 1.0 : 0.0);
  ck.put("gen.alpha_x", gen.alpha_x);
  ck.put("gen.alpha_y", gen.alpha_y);
  ck.put("gen.alpha_m", gen.alpha_m);
  ck.put("gen.class_weights", Eigen::VectorXd(Eigen::Map<const VectorXd>(gen.class_weights.data(), 6)));
  put_all(ck, "gen.", gen);
  put_dims(ck, "rec.", rec.dims);
  put_all(ck, "rec.", rec);
}

std::pair<GenerativeParams, RecognitionParams> load_params(const Checkpoint& ck) {
  try {
    GenerativeParams gen(get_dims(ck, "gen."));
    gen.transition_kind = ck.scalar("gen.transition_kind") != 0.0 ? TransitionKind::Linear : TransitionKind::Gated;
    gen.y_emission = ck.scalar("gen.y_emission") != 0.0 ? YEmission::ClassWeighted : YEmission::Gaussian;
    gen.alpha_x = ck.vector("gen.alpha_x");
    gen.alpha_y = ck.vector("gen.alpha_y");
    gen.alpha_m = ck.vector("gen.alpha_m");
    const VectorXd w = ck.vector("gen.class_weights");
    if (w.size() != 6) throw IoError("class weights must have 6 entries", "load_params");
    for (int i = 0; i < 6; ++i) gen.class_weights[static_cast<std::size_t>(i)] = w[i];
    get_all(ck, "gen.", gen);
    gen.validate();
    RecognitionParams rec(get_dims(ck, "rec."));
    get_all(ck, "rec.", rec);
    return {std::move(gen), std::move(rec)};
  } catch (const ParameterError& e) {
    throw IoError(std::string("invalid parameters in checkpoint: ") + e.what(), "load_params");
  }
}

}  // namespace coopgrid
