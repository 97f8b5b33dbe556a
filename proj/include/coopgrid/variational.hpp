#pragma once

#include "coopgrid/gaussian.hpp"
#include "coopgrid/nn.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace coopgrid {

class Checkpoint;

/// Sizes of every vector space in the sequence model. Zero is allowed for
/// v (ego motion), c (controls), a (actions) and m (masks).
struct ModelDims {
  int latent = 2;
  int x = 2;
  int y = 2;
  int v = 0;
  int c = 0;
  int a = 0;
  int m = 0;
  int belief_hidden = 4;
  int head_hidden = 4;

  int belief() const { return x + belief_hidden + c; }
  void validate() const;
};

enum class TransitionKind { Gated, Linear };
enum class YEmission { Gaussian, ClassWeighted };

inline constexpr double kMinEmissionVariance = 0.15915494309189535;  // 1 / (2 pi)

/// Class weights of the cross-entropy y emission, in channel order.
inline constexpr std::array<double, 6> kDefaultClassWeights = {100.0, 10.0, 1.0, 0.2, 0.1, 1.0};

/// p(z_1) = N(0, I); p(z_k | z_{k-1}) from the gated unit (or a linear map
/// with a fixed log std); p(y | z) = N(W z + b, alpha_y); p(x | z) =
/// N(W z + b, alpha_x), extended for the action model by x_{k-1}, y_k and a_k
/// terms; p(m | a, y) = N(W [a; y] + b, alpha_m). Variances are fixed.
struct GenerativeParams {
  ModelDims dims;
  TransitionKind transition_kind = TransitionKind::Gated;
  YEmission y_emission = YEmission::Gaussian;

  GatedUnit transition;
  Dense linear_transition;
  Eigen::VectorXd linear_log_std;
  Dense emit_y;
  Dense emit_x;
  Eigen::MatrixXd x_prev, x_y, x_a;
  Dense mask;

  Eigen::VectorXd alpha_x, alpha_y, alpha_m;
  std::array<double, 6> class_weights = kDefaultClassWeights;

  GenerativeParams() = default;
  explicit GenerativeParams(const ModelDims& d);
  static GenerativeParams random(const ModelDims& d, std::mt19937_64& rng, double scale = 1.0);

  /// alpha >= 1/(2 pi), sizes consistent. Throws ParameterError.
  void validate() const;
  DiagGaussian transition_dist(const Eigen::VectorXd& z) const;
  /// Mean of x_k in the action model.
  Eigen::VectorXd action_x_mean(const Eigen::VectorXd& z, const Eigen::VectorXd& x_prev_k, const Eigen::VectorXd& y_k,
                                const Eigen::VectorXd& a_k) const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    transition.visit(prefix + "transition", f);
    linear_transition.visit(prefix + "linear_transition", f);
    f(prefix + "linear_transition.log_std", linear_log_std);
    emit_y.visit(prefix + "emit_y", f);
    emit_x.visit(prefix + "emit_x", f);
    f(prefix + "emit_x.x_prev", x_prev);
    f(prefix + "emit_x.y", x_y);
    f(prefix + "emit_x.a", x_a);
    mask.visit(prefix + "mask", f);
  }
};

/// Belief network and inference heads. The belief is b_k = [x_k; h_k; c_k]
/// with h_k = GRU(h_{k-1}, [x_k; x_{k-1}; v_k]) and h_0 = x_0 = 0.
struct RecognitionParams {
  ModelDims dims;
  Gru belief;
  DMap head;            // q(z_k | b_k)
  GatedUnit smoothing;  // q(z_k | b_k, z_next), extra input b_k

  RecognitionParams() = default;
  explicit RecognitionParams(const ModelDims& d);
  static RecognitionParams random(const ModelDims& d, std::mt19937_64& rng, double scale = 1.0);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    belief.visit(prefix + "belief", f);
    head.visit(prefix + "head", f);
    smoothing.visit(prefix + "smoothing", f);
  }
};

/// One training sequence, indexed from time 1 at position 0. v and c may be
/// empty (zero-dimensional); a and m hold steps 2..T and are only needed by
/// the action model.
struct Sequence {
  std::vector<Eigen::VectorXd> x, y, v, c, a, m;

  int length() const { return static_cast<int>(x.size()); }
  void validate(const ModelDims& d, bool with_actions) const;
};

/// Standard-normal draws, one latent-sized vector per time step.
struct NoiseBundle {
  std::vector<Eigen::VectorXd> eps;

  static NoiseBundle draw(int T, int latent, std::mt19937_64& rng);
};

struct LossBreakdown {
  double encoder = 0.0;
  double decoder = 0.0;
  double prediction = 0.0;
  double total = 0.0;
};

/// Inference distributions used by the loss evaluator. Times are 1-based.
class PosteriorHeads {
 public:
  virtual ~PosteriorHeads() = default;
  /// q(z_k | b_k).
  virtual DiagGaussian belief(int k) const = 0;
  /// q(z_k | b_k, z_next).
  virtual DiagGaussian smoothing(int k, const Eigen::VectorXd& z_next) const = 0;
};

/// Belief states of a sequence, b_1..b_T.
std::vector<Eigen::VectorXd> beliefs(const RecognitionParams& rec, const Sequence& seq);

class NetworkHeads : public PosteriorHeads {
 public:
  NetworkHeads(const RecognitionParams& rec, const Sequence& seq);
  DiagGaussian belief(int k) const override;
  DiagGaussian smoothing(int k, const Eigen::VectorXd& z_next) const override;

 private:
  const RecognitionParams& rec_;
  std::vector<Eigen::VectorXd> b_;
};

// A loss is a list of reparameterized latent draws plus signed log-density
// terms; every objective below is one such plan.

enum class LossGroup { Encoder, Decoder, Prediction };

struct LatentDraw {
  enum class Source { Belief, Smoothing, Transition } source;
  int k;         // time of the drawn latent
  int from = 0;  // conditioning latent for Smoothing / Transition
};

struct LossTerm {
  enum class Kind {
    Own,          // log density of z_k under the distribution it was drawn from
    BeliefAt,     // log q(z_k | b_k) for a z_k drawn otherwise
    Prior,        // log N(z_k; 0, I)
    Transition,   // log p(z_k | z_from)
    EmitX,        // log p(x_k | z_k)
    EmitY,        // log p(y_k | z_k)
    EmitXAction,  // log p(x_k | x_{k-1}, y_k, z_k, a_k)
    Mask          // log p(m_k | a_k, y_k)
  } kind;
  int k;
  int from = 0;
  double sign = 1.0;  // contribution to the loss is sign * log density
  LossGroup group = LossGroup::Encoder;
};

struct LossPlan {
  int T = 0;
  std::vector<LatentDraw> draws;
  std::vector<LossTerm> terms;
  bool needs_actions = false;
};

/// Default first split: ceil(0.4 T).
int default_t_min(int T);

/// z_t from the belief head, z_{k<t} by smoothing back, z_{k>t} rolled
/// forward through the transition. Loss
///   log q(z_t|b_t) + sum_{k<t} log q(z_k|b_k,z_{k+1}) - log p(z_1)
///   - sum_{k=2..t} log p(z_k|z_{k-1}) - sum_{k<=T} log p(x_k, y_k | z_k),
/// with the emissions at k <= t as decoder and k > t as prediction terms.
/// Requires t_min <= t <= T-1, or t = T = 1. t_min <= 0 selects the default.
LossPlan lpvae_plan(int T, int t, int t_min = 0);
/// As lpvae_plan with p(y_k|z_k) for all k, p(x_k|x_{k-1},y_k,z_k,a_k) for
/// k >= 2 (no x_1 term) and mask terms for k >= 2, grouped like emissions.
LossPlan lpvae_action_plan(int T, int t, int t_min = 0);
/// z_T from the belief head, z_{T-1..t} by smoothing. Loss
///   log q(z_T|b_T) + sum_{k=t..T-1} log q(z_k|b_k,z_{k+1}) - log q(z_t|b_t)
///   - sum_{k=t+1..T} log p(z_k|z_{k-1}) - sum_{k=t..T} log p(x_k|z_k).
/// Requires 1 <= t <= T-1.
LossPlan stdvae_plan(int T, int t);

struct JumpRange {
  int min = 1;
  int max = 4;
};
/// z_{t+d} from the belief head, z_t from the smoothing head given z_{t+d}.
/// Loss log q(z_{t+d}|b_{t+d}) + log q(z_t|b_t,z_{t+d}) - log q(z_t|b_t)
///   - log p(z_{t+d}|z_t) - log p(x_{t+d}|z_{t+d}).
LossPlan tdvae_plan(int T, int t, int delta, JumpRange range = {});

/// Value of a plan with arbitrary inference heads.
LossBreakdown evaluate_plan(const LossPlan& plan, const GenerativeParams& gen, const PosteriorHeads& heads,
                            const Sequence& seq, const NoiseBundle& noise);

struct ParamGradients {
  GenerativeParams gen;
  RecognitionParams rec;
};

/// Value and exact gradient (with the noise held fixed) of a plan under the
/// network heads. Gradients are added into `grad`, which must be shaped like
/// the parameters (see zeros_like).
LossBreakdown plan_gradient(const LossPlan& plan, const GenerativeParams& gen, const RecognitionParams& rec,
                            const Sequence& seq, const NoiseBundle& noise, ParamGradients& grad);

LossBreakdown lpvae_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                         const NoiseBundle& noise, int t_min = 0);
LossBreakdown lpvae_loss(const GenerativeParams& gen, const PosteriorHeads& heads, const Sequence& seq, int t,
                         const NoiseBundle& noise, int t_min = 0);
LossBreakdown lpvae_action_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                                const NoiseBundle& noise, int t_min = 0);
double stdvae_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                   const NoiseBundle& noise);
double tdvae_jumpy_loss(const GenerativeParams& gen, const RecognitionParams& rec, const Sequence& seq, int t,
                        int delta, const NoiseBundle& noise, JumpRange range = {});

/// Class-weighted cross-entropy of channel-major grid features y (6
/// channels) against per-cell logits of the same layout. Each cell takes
/// the class of maximal mass and is weighted by 1 - Omega.
struct CrossEntropy {
  double nll = 0.0;
  Eigen::VectorXd dlogits;
};
CrossEntropy class_weighted_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& logits,
                                const std::array<double, 6>& weights = kDefaultClassWeights);

/// Negative log-likelihood of one mask under the mask map.
double mask_nll(const GenerativeParams& gen, const Eigen::VectorXd& m, const Eigen::VectorXd& a,
                const Eigen::VectorXd& y);

// Training

enum class Objective { LpVae, LpVaeActions, StdVae, TdVaeJumpy };

struct TrainOptions {
  int steps = 100;
  double step_size = 1e-2;
  std::uint64_t seed = 0;
  Objective objective = Objective::LpVae;
  int t_min = 0;
  JumpRange jump;
  bool train_generative = true;
  bool train_recognition = true;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

struct TrainResult {
  GenerativeParams gen;
  RecognitionParams rec;
  std::vector<LossBreakdown> trace;
};

/// Plain SGD with one sequence, one split and one noise draw per step.
/// Throws NumericalError on a non-finite loss or gradient.
TrainResult train_toy(const GenerativeParams& gen, const RecognitionParams& rec, const std::vector<Sequence>& data,
                      const TrainOptions& opts);

/// step,encoder,decoder,prediction,total
std::string loss_trace_header();
void write_loss_trace(std::ostream& out, const std::vector<LossBreakdown>& trace);

/// Stores dims, kinds, fixed variances and all parameters under "gen." and
/// "rec." names.
void save_params(Checkpoint& ck, const GenerativeParams& gen, const RecognitionParams& rec);
std::pair<GenerativeParams, RecognitionParams> load_params(const Checkpoint& ck);

}  // namespace coopgrid
