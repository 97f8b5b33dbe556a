#pragma once

#include "coopgrid/gaussian.hpp"

#include <Eigen/Core>

#include <random>
#include <string>

namespace coopgrid {

// Small dense modules with hand-written backward passes. Each backward call
// adds parameter gradients into a module of the same shape and returns (or
// adds into) the input gradients. `visit` enumerates parameters by name.

inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

inline Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

/// y = W x + b.
struct Dense {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;

  Dense() = default;
  Dense(int out, int in) : W(Eigen::MatrixXd::Zero(out, in)), b(Eigen::VectorXd::Zero(out)) {}

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const { return W * x + b; }
  /// Returns dL/dx.
  Eigen::VectorXd backward(const Eigen::VectorXd& x, const Eigen::VectorXd& dy, Dense& grad) const;

  void randomize(std::mt19937_64& rng, double scale);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".W", W);
    f(prefix + ".b", b);
  }
};

/// The gated latent update used for transitions and smoothing. With input
/// u = [extra; z] and sigmoid gates f, i, o of u:
///   mean    = f * z + i * tanh(Wc u + bc)
///   log_std = Ws (o * tanh(mean)) + bs
/// The transition has no extra input; the smoothing head gets the belief.
struct GatedUnit {
  int extra_dim = 0;
  int state_dim = 0;
  Dense forget, input, output, candidate, scale;

  struct Cache {
    Eigen::VectorXd u, f, i, o, g, tm;
  };

  GatedUnit() = default;
  GatedUnit(int extra, int state);

  DiagGaussian forward(const Eigen::VectorXd& extra, const Eigen::VectorXd& z, Cache* cache = nullptr) const;
  void backward(const Eigen::VectorXd& z, const Cache& c, const Eigen::VectorXd& dmean,
                const Eigen::VectorXd& dlog_std, GatedUnit& grad, Eigen::VectorXd& dextra,
                Eigen::VectorXd& dz) const;
  /// d mean / d z.
  Eigen::MatrixXd mean_jacobian(const Eigen::VectorXd& extra, const Eigen::VectorXd& z) const;

  void randomize(std::mt19937_64& rng, double scale);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    forget.visit(prefix + ".forget", f);
    input.visit(prefix + ".input", f);
    output.visit(prefix + ".output", f);
    candidate.visit(prefix + ".candidate", f);
    scale.visit(prefix + ".scale", f);
  }
};

/// Belief head: n = sigmoid(Wi b + bi) * tanh(Wc b + bc), then two linear
/// heads for the mean and the log std.
struct DMap {
  Dense gate, candidate, mean, scale;

  struct Cache {
    Eigen::VectorXd gi, g, n;
  };

  DMap() = default;
  DMap(int in, int hidden, int out);

  DiagGaussian forward(const Eigen::VectorXd& b, Cache* cache = nullptr) const;
  /// Returns dL/db.
  Eigen::VectorXd backward(const Eigen::VectorXd& b, const Cache& c, const Eigen::VectorXd& dmean,
                           const Eigen::VectorXd& dlog_std, DMap& grad) const;

  void randomize(std::mt19937_64& rng, double scale);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    gate.visit(prefix + ".gate", f);
    candidate.visit(prefix + ".candidate", f);
    mean.visit(prefix + ".mean", f);
    scale.visit(prefix + ".scale", f);
  }
};

/// GRU cell: r, s = sigmoid gates of [u; h], n = tanh(Wn [u; r * h] + bn),
/// h' = (1 - s) * n + s * h.
struct Gru {
  int input_dim = 0;
  int hidden_dim = 0;
  Dense reset, update, candidate;

  struct Cache {
    Eigen::VectorXd uh, r, s, n, urh;
  };

  Gru() = default;
  Gru(int in, int hidden);

  Eigen::VectorXd forward(const Eigen::VectorXd& u, const Eigen::VectorXd& h, Cache* cache = nullptr) const;
  void backward(const Eigen::VectorXd& h, const Cache& c, const Eigen::VectorXd& dh_next, Gru& grad,
                Eigen::VectorXd& du, Eigen::VectorXd& dh) const;

  void randomize(std::mt19937_64& rng, double scale);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    reset.visit(prefix + ".reset", f);
    update.visit(prefix + ".update", f);
    candidate.visit(prefix + ".candidate", f);
  }
};

// Parameter-tree helpers for any type with visit(prefix, f).

template <typename P>
Eigen::Index param_count(P p) {
  Eigen::Index n = 0;
  p.visit("", [&](const std::string&, auto& m) { n += m.size(); });
  return n;
}

template <typename P>
Eigen::VectorXd flatten(P p) {
  Eigen::VectorXd out(param_count(p));
  Eigen::Index at = 0;
  p.visit("", [&](const std::string&, auto& m) {
    out.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  });
  return out;
}

template <typename P>
void unflatten(P& p, const Eigen::VectorXd& v) {
  Eigen::Index at = 0;
  p.visit("", [&](const std::string&, auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = v.segment(at, m.size());
    at += m.size();
  });
}

template <typename P>
P zeros_like(P p) {
  p.visit("", [](const std::string&, auto& m) { m.setZero(); });
  return p;
}

}  // namespace coopgrid
