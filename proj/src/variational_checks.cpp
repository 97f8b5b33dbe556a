#include "coopgrid/variational_checks.hpp"

#include "coopgrid/kalman.hpp"
#include "coopgrid/variational.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace coopgrid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Lower bound

std::vector<BoundCase> elbo_bound_suite(int systems, int samples, std::uint64_t seed) {
  std::vector<BoundCase> out;
  for (int s = 0; s < systems; ++s) {
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(s));
    const auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int d = pick(1, 4), dx = pick(1, 3), dy = pick(1, 3), T = pick(2, 10);
    const int t = pick(default_t_min(T), T - 1);
    const LinearGaussianSystem sys = LinearGaussianSystem::random(d, dx, dy, rng);
    const Sequence seq = sys.simulate(T, rng);
    const double nll = kalman_exact(sys, seq.x, seq.y).nll;
    const GenerativeParams gen = sys.as_generative();
    const RecognitionParams rec = RecognitionParams::random(gen.dims, rng);
    const NetworkHeads net(rec, seq);
    const KalmanHeads exact = exact_x_heads(sys, seq);
    const LossPlan plan = lpvae_plan(T, t);

    for (const bool use_exact : {false, true}) {
      const PosteriorHeads& heads = use_exact ? static_cast<const PosteriorHeads&>(exact) : net;
      double mean = 0.0, m2 = 0.0;
      for (int i = 0; i < samples; ++i) {
        const double l = evaluate_plan(plan, gen, heads, seq, NoiseBundle::draw(T, d, rng)).total;
        const double delta = l - mean;
        mean += delta / (i + 1);
        m2 += delta * (l - mean);
      }
      BoundCase c;
      c.system = s;
      c.latent = d;
      c.T = T;
      c.t = t;
      c.exact_heads = use_exact;
      c.nll = nll;
      c.mean_loss = mean;
      c.std_error = samples > 1 ? std::sqrt(m2 / (samples - 1) / samples) : 0.0;
      c.exact_gap = use_exact ? exact_predictability_gap(sys, exact, seq, t) : 0.0;
      c.holds = mean >= nll - 3.0 * c.std_error;
      out.push_back(c);
    }
  }
  return out;
}

// Gradients

namespace {

constexpr double kStep = 1e-5;

VectorXd numeric_gradient(VectorXd theta, const std::function<double(const VectorXd&)>& f) {
  VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + kStep;
    const double up = f(theta);
    theta[i] = keep - kStep;
    const double down = f(theta);
    theta[i] = keep;
    g[i] = (up - down) / (2.0 * kStep);
  }
  return g;
}

double rel_error(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& n) {
  const double scale = std::max({a.norm(), n.norm(), 1e-300});
  return (a - n).norm() / scale;
}

VectorXd gaussian_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return VectorXd::NullaryExpr(n, [&] { return g(rng); });
}

VectorXd stack(std::initializer_list<VectorXd> parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  VectorXd out(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

GradientCase dense_case(int inst, std::mt19937_64& rng) {
  const int in = 1 + inst % 4, out_dim = 1 + (inst / 4) % 3;
  Dense m(out_dim, in);
  m.randomize(rng, 1.0);
  const VectorXd x = gaussian_vector(in, rng), w = gaussian_vector(out_dim, rng);
  Dense g = zeros_like(m);
  const VectorXd dx = m.backward(x, w, g);
  const Eigen::Index np = param_count(m);
  const VectorXd num = numeric_gradient(stack({flatten(m), x}), [&](const VectorXd& th) {
    Dense p = m;
    unflatten(p, th.head(np));
    return w.dot(p.forward(th.tail(in)));
  });
  return {"dense", inst, rel_error(stack({flatten(g), dx}), num)};
}

std::vector<GradientCase> gated_cases(int inst, std::mt19937_64& rng) {
  const int extra = inst % 3, state = 1 + inst % 4;
  GatedUnit m(extra, state);
  m.randomize(rng, 1.5);
  const VectorXd e = gaussian_vector(extra, rng), z = gaussian_vector(state, rng);
  const VectorXd wm = gaussian_vector(state, rng), ws = gaussian_vector(state, rng);
  GatedUnit g = zeros_like(m);
  GatedUnit::Cache c;
  m.forward(e, z, &c);
  VectorXd de, dz;
  m.backward(z, c, wm, ws, g, de, dz);
  const Eigen::Index np = param_count(m);
  const VectorXd num = numeric_gradient(stack({flatten(m), e, z}), [&](const VectorXd& th) {
    GatedUnit p = m;
    unflatten(p, th.head(np));
    const DiagGaussian o = p.forward(th.segment(np, extra), th.tail(state));
    return wm.dot(o.mean) + ws.dot(o.log_std);
  });
  std::vector<GradientCase> out{{"gated unit", inst, rel_error(stack({flatten(g), de, dz}), num)}};

  // Jacobian of the mean with respect to the state, column by column.
  const MatrixXd J = m.mean_jacobian(e, z);
  MatrixXd Jn(state, state);
  for (int j = 0; j < state; ++j) {
    VectorXd zp = z, zm = z;
    zp[j] += kStep;
    zm[j] -= kStep;
    Jn.col(j) = (m.forward(e, zp).mean - m.forward(e, zm).mean) / (2.0 * kStep);
  }
  out.push_back({"gated unit mean Jacobian", inst,
                 rel_error(Eigen::Map<const VectorXd>(J.data(), J.size()), Eigen::Map<const VectorXd>(Jn.data(), Jn.size()))});
  return out;
}

GradientCase dmap_case(int inst, std::mt19937_64& rng) {
  const int in = 1 + inst % 5, hidden = 1 + inst % 3, out_dim = 1 + (inst / 3) % 3;
  DMap m(in, hidden, out_dim);
  m.randomize(rng, 1.5);
  const VectorXd b = gaussian_vector(in, rng), wm = gaussian_vector(out_dim, rng), ws = gaussian_vector(out_dim, rng);
  DMap g = zeros_like(m);
  DMap::Cache c;
  m.forward(b, &c);
  const VectorXd db = m.backward(b, c, wm, ws, g);
  const Eigen::Index np = param_count(m);
  const VectorXd num = numeric_gradient(stack({flatten(m), b}), [&](const VectorXd& th) {
    DMap p = m;
    unflatten(p, th.head(np));
    const DiagGaussian o = p.forward(th.tail(in));
    return wm.dot(o.mean) + ws.dot(o.log_std);
  });
  return {"belief head", inst, rel_error(stack({flatten(g), db}), num)};
}

GradientCase gru_case(int inst, std::mt19937_64& rng) {
  const int in = 1 + inst % 4, hidden = 1 + (inst / 2) % 4;
  Gru m(in, hidden);
  m.randomize(rng, 1.5);
  const VectorXd u = gaussian_vector(in, rng), h = gaussian_vector(hidden, rng), w = gaussian_vector(hidden, rng);
  Gru g = zeros_like(m);
  Gru::Cache c;
  m.forward(u, h, &c);
  VectorXd du, dh;
  m.backward(h, c, w, g, du, dh);
  const Eigen::Index np = param_count(m);
  const VectorXd num = numeric_gradient(stack({flatten(m), u, h}), [&](const VectorXd& th) {
    Gru p = m;
    unflatten(p, th.head(np));
    return w.dot(p.forward(th.segment(np, in), th.tail(hidden)));
  });
  return {"gru", inst, rel_error(stack({flatten(g), du, dh}), num)};
}

Sequence random_sequence(const ModelDims& d, int T, bool grid_y, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Sequence s;
  for (int k = 0; k < T; ++k) {
    s.x.push_back(gaussian_vector(d.x, rng));
    if (grid_y) {
      // Per-cell mass functions in channel-major layout.
      const int cells = d.y / 6;
      VectorXd y(d.y);
      for (int j = 0; j < cells; ++j) {
        double sum = 0.0;
        for (int c = 0; c < 6; ++c) sum += (y[c * cells + j] = u(rng));
        for (int c = 0; c < 6; ++c) y[c * cells + j] /= sum;
      }
      s.y.push_back(y);
    } else {
      s.y.push_back(gaussian_vector(d.y, rng));
    }
    if (d.v > 0) s.v.push_back(gaussian_vector(d.v, rng));
    if (d.c > 0) s.c.push_back(gaussian_vector(d.c, rng));
    if (k > 0) {
      s.a.push_back(gaussian_vector(d.a, rng));
      s.m.push_back(gaussian_vector(d.m, rng));
    }
  }
  return s;
}

std::vector<GradientCase> loss_cases(int inst, std::mt19937_64& rng) {
  const auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ModelDims d;
  d.latent = pick(1, 3);
  d.x = pick(1, 3);
  d.v = pick(0, 2);
  d.c = pick(0, 2);
  d.a = pick(0, 3);
  d.m = pick(0, 2);
  d.belief_hidden = pick(1, 3);
  d.head_hidden = pick(1, 3);
  const bool grid_y = inst % 5 == 4;
  d.y = grid_y ? 6 * pick(1, 2) : pick(1, 3);

  GenerativeParams gen = GenerativeParams::random(d, rng, 0.8);
  if (inst % 3 == 1) gen.transition_kind = TransitionKind::Linear;
  if (grid_y) gen.y_emission = YEmission::ClassWeighted;
  std::uniform_real_distribution<double> alpha(kMinEmissionVariance, 1.5);
  for (VectorXd* a : {&gen.alpha_x, &gen.alpha_y, &gen.alpha_m}) {
    for (Eigen::Index i = 0; i < a->size(); ++i) (*a)[i] = alpha(rng);
  }
  const RecognitionParams rec = RecognitionParams::random(d, rng, 0.8);
  const int T = pick(2, 6);
  const Sequence seq = random_sequence(d, T, grid_y, rng);
  const NoiseBundle noise = NoiseBundle::draw(T, d.latent, rng);

  const int t = pick(default_t_min(T), T - 1);
  const int delta = pick(1, std::min(4, T - 1));
  const std::vector<std::pair<std::string, LossPlan>> plans = {
      {"lpvae loss", lpvae_plan(T, t)},
      {"lpvae action loss", lpvae_action_plan(T, t)},
      {"stdvae loss", stdvae_plan(T, pick(1, T - 1))},
      {"tdvae jumpy loss", tdvae_plan(T, pick(1, T - delta), delta)},
  };

  std::vector<GradientCase> out;
  const Eigen::Index ng = param_count(gen);
  for (const auto& [name, plan] : plans) {
    ParamGradients g{zeros_like(gen), zeros_like(rec)};
    plan_gradient(plan, gen, rec, seq, noise, g);
    const VectorXd num = numeric_gradient(stack({flatten(gen), flatten(rec)}), [&](const VectorXd& th) {
      GenerativeParams pg = gen;
      RecognitionParams pr = rec;
      unflatten(pg, th.head(ng));
      unflatten(pr, th.tail(th.size() - ng));
      return evaluate_plan(plan, pg, NetworkHeads(pr, seq), seq, noise).total;
    });
    out.push_back({name, inst, rel_error(stack({flatten(g.gen), flatten(g.rec)}), num)});
  }
  return out;
}

}  // namespace

std::vector<GradientCase> gradient_check_suite(int instances, std::uint64_t seed) {
  std::vector<GradientCase> out;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(seed * 7919ULL + static_cast<std::uint64_t>(i));
    out.push_back(dense_case(i, rng));
    for (auto& c : gated_cases(i, rng)) out.push_back(c);
    out.push_back(dmap_case(i, rng));
    out.push_back(gru_case(i, rng));
    for (auto& c : loss_cases(i, rng)) out.push_back(c);
  }
  return out;
}

}  // namespace coopgrid
