#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coopgrid {

/// One linear-Gaussian instance of the lower-bound check.
struct BoundCase {
  int system = 0;
  int latent = 0;
  int T = 0;
  int t = 0;
  bool exact_heads = false;  // Kalman x-only heads, else random network heads
  double nll = 0.0;          // exact -log p(x, y)
  double mean_loss = 0.0;    // Monte-Carlo average of lpvae_loss
  double std_error = 0.0;
  double exact_gap = 0.0;    // KL(Q_t || posterior), exact heads only
  bool holds = false;        // mean_loss >= nll - 3 std_error
};

/// For each random system (latent <= 4, T <= 10) the LP-VAE loss is averaged
/// over `samples` noise draws under random and under exact recognition.
std::vector<BoundCase> elbo_bound_suite(int systems, int samples, std::uint64_t seed);

struct GradientCase {
  std::string what;
  int instance = 0;
  double rel_error = 0.0;  // |analytic - numeric| / max(|analytic|, |numeric|), vector norms
};

/// Central finite differences against every analytic gradient: dense map,
/// gated unit (parameters, inputs and the mean Jacobian), belief head, GRU,
/// and the totals of every loss plan.
std::vector<GradientCase> gradient_check_suite(int instances, std::uint64_t seed);

inline constexpr double kGradientTolerance = 1e-4;

}  // namespace coopgrid
