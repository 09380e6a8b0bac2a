#pragma once

// The one-dimensional GAN game: a generator is the equal-weight mixture
// 1/2 N(mu1,1) + 1/2 N(mu2,1), a discriminator is the indicator of
// [l1,r1] u [l2,r2] with l1 <= r1 <= l2 <= r2, and the objective with an
// identity measuring function is
//
//   L(mu, l, r) = E_{x~G*}[D(x)] + E_{x~G_mu}[1 - D(x)].
//
// The generator minimizes L, the discriminator maximizes it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include "coevgan/errors.hpp"
#include "coevgan/gaussmix.hpp"
#include "coevgan/rng.hpp"

namespace coevgan {

struct GeneratorParams {
  double mu1 = 0.0;
  double mu2 = 0.0;

  UnitGaussianMixture density() const { return UnitGaussianMixture::two_component(mu1, mu2); }
  GeneratorParams swapped() const { return {mu2, mu1}; }
  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct DiscriminatorParams {
  double l1 = 0.0;
  double r1 = 0.0;
  double l2 = 0.0;
  double r2 = 0.0;

  Interval left() const { return {l1, r1}; }
  Interval right() const { return {l2, r2}; }
  std::array<double, 4> bounds() const { return {l1, r1, l2, r2}; }
  static DiscriminatorParams from_bounds(const std::array<double, 4>& b) {
    return {b[0], b[1], b[2], b[3]};
  }
  bool ordered() const { return l1 <= r1 && r1 <= l2 && l2 <= r2; }
  void validate() const {
    if (!ordered())
      throw DomainError("DiscriminatorParams: bounds violate l1 <= r1 <= l2 <= r2");
  }
  /// D(x) = 1[l1,r1](x) + 1[l2,r2](x).
  int operator()(double x) const {
    return static_cast<int>(left().contains(x)) + static_cast<int>(right().contains(x));
  }
  friend bool operator==(const DiscriminatorParams&, const DiscriminatorParams&) = default;
};

struct GeneratorGradient {
  double d_mu1 = 0.0;
  double d_mu2 = 0.0;
};

struct DiscriminatorGradient {
  double d_l1 = 0.0;
  double d_r1 = 0.0;
  double d_l2 = 0.0;
  double d_r2 = 0.0;
};

/// Exact evaluation through Gaussian CDFs.
struct ClosedForm {};

/// Empirical estimate from `samples` draws of each of G* and G_mu.
struct MonteCarlo {
  std::uint64_t samples = 1;
  std::uint64_t seed = 0;
};

using EvaluationMode = std::variant<ClosedForm, MonteCarlo>;

/// phi in the objective. Only the identity is supported.
enum class MeasuringFunction { Identity };

/// How a discriminator candidate is mapped back onto l1 <= r1 <= l2 <= r2.
enum class BoundHandling {
  Sort,     ///< sort the four values (repair)
  Project,  ///< Euclidean projection onto the ordered cone (isotonic regression)
};

/// Sorts four finite values into a valid discriminator.
inline DiscriminatorParams repair(const std::array<double, 4>& candidate) {
  for (double v : candidate)
    if (!std::isfinite(v)) throw DomainError("repair: non-finite bound");
  auto b = candidate;
  std::sort(b.begin(), b.end());
  return DiscriminatorParams::from_bounds(b);
}

/// Closest ordered point to `candidate` in the Euclidean norm
/// (pool-adjacent-violators). Violating neighbours are merged to their mean,
/// so an interval whose bounds cross collapses to a point.
inline DiscriminatorParams project_ordered(const std::array<double, 4>& candidate) {
  for (double v : candidate)
    if (!std::isfinite(v)) throw DomainError("project_ordered: non-finite bound");
  std::array<double, 4> value{};
  std::array<int, 4> count{};
  int blocks = 0;
  for (double v : candidate) {
    value[blocks] = v;
    count[blocks] = 1;
    ++blocks;
    while (blocks > 1 && value[blocks - 2] > value[blocks - 1]) {
      const int c = count[blocks - 2] + count[blocks - 1];
      value[blocks - 2] =
          (value[blocks - 2] * count[blocks - 2] + value[blocks - 1] * count[blocks - 1]) / c;
      count[blocks - 2] = c;
      --blocks;
    }
  }
  std::array<double, 4> out{};
  int pos = 0;
  for (int b = 0; b < blocks; ++b)
    for (int i = 0; i < count[b]; ++i) out[pos++] = value[b];
  return DiscriminatorParams::from_bounds(out);
}

inline DiscriminatorParams constrain(const std::array<double, 4>& candidate, BoundHandling h) {
  return h == BoundHandling::Sort ? repair(candidate) : project_ordered(candidate);
}

/// P_G(A) with A = [l1,r1] u [l2,r2] for the generator `g`.
inline double generator_mass(const GeneratorParams& g, const DiscriminatorParams& d) {
  const double left = 0.5 * (unit_normal_interval_prob(g.mu1, d.left()) +
                             unit_normal_interval_prob(g.mu2, d.left()));
  const double right = 0.5 * (unit_normal_interval_prob(g.mu1, d.right()) +
                              unit_normal_interval_prob(g.mu2, d.right()));
  return left + right;
}

namespace detail {

inline double sample_two_component(const GeneratorParams& g, Rng& rng) {
  const double mean = rng.uniform01() < 0.5 ? g.mu1 : g.mu2;
  return mean + rng.normal();
}

}  // namespace detail

/// Empirical loss with its standard error.
struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MonteCarloEstimate monte_carlo_loss(const GeneratorParams& gen,
                                           const DiscriminatorParams& disc,
                                           const GeneratorParams& target, MonteCarlo mc) {
  disc.validate();
  if (mc.samples < 1) throw ConfigError("MonteCarlo: sample_count must be >= 1");
  Rng real_stream(derive_seed(mc.seed, {0}));
  Rng fake_stream(derive_seed(mc.seed, {1}));
  const auto n = static_cast<double>(mc.samples);
  double real_sum = 0.0, real_sq = 0.0, fake_sum = 0.0, fake_sq = 0.0;
  for (std::uint64_t s = 0; s < mc.samples; ++s) {
    const double dr = disc(detail::sample_two_component(target, real_stream));
    real_sum += dr;
    real_sq += dr * dr;
    const double df = 1.0 - disc(detail::sample_two_component(gen, fake_stream));
    fake_sum += df;
    fake_sq += df * df;
  }
  const double real_mean = real_sum / n;
  const double fake_mean = fake_sum / n;
  const double var_real = std::max(0.0, real_sq / n - real_mean * real_mean);
  const double var_fake = std::max(0.0, fake_sq / n - fake_mean * fake_mean);
  return {real_mean + fake_mean, std::sqrt((var_real + var_fake) / n)};
}

/// L(gen, disc) against the target distribution. Result lies in [0, 2].
inline double loss(const GeneratorParams& gen, const DiscriminatorParams& disc,
                   const GeneratorParams& target, const EvaluationMode& mode = ClosedForm{}) {
  disc.validate();
  if (const auto* mc = std::get_if<MonteCarlo>(&mode))
    return monte_carlo_loss(gen, disc, target, *mc).mean;
  return generator_mass(target, disc) + 1.0 - generator_mass(gen, disc);
}

/// Analytic dL/dmu.
inline GeneratorGradient grad_generator(const GeneratorParams& gen,
                                        const DiscriminatorParams& disc,
                                        const GeneratorParams& /*target*/) {
  disc.validate();
  auto component = [&](double mu) {
    return -0.5 * (prob_deriv_wrt_mean(mu, disc.left()) + prob_deriv_wrt_mean(mu, disc.right()));
  };
  return {component(gen.mu1), component(gen.mu2)};
}

/// Analytic dL/d(l1, r1, l2, r2). A lower bound gains p_G(b) - p_*(b), an
/// upper bound gains p_*(b) - p_G(b).
inline DiscriminatorGradient grad_discriminator(const GeneratorParams& gen,
                                                const DiscriminatorParams& disc,
                                                const GeneratorParams& target) {
  disc.validate();
  auto gap = [&](double x) {  // p_*(x) - p_G(x)
    return 0.5 * (detail::pdf_extended(x - target.mu1) + detail::pdf_extended(x - target.mu2) -
                  detail::pdf_extended(x - gen.mu1) - detail::pdf_extended(x - gen.mu2));
  };
  return {-gap(disc.l1), gap(disc.r1), -gap(disc.l2), gap(disc.r2)};
}

/// Euclidean distance minimized over the component labelling.
inline double generator_distance(const GeneratorParams& a, const GeneratorParams& b) {
  const double direct = std::hypot(a.mu1 - b.mu1, a.mu2 - b.mu2);
  const double swapped = std::hypot(a.mu1 - b.mu2, a.mu2 - b.mu1);
  return std::min(direct, swapped);
}

/// True iff the best generator is within `threshold` of the target.
inline bool success(const GeneratorParams& best, const GeneratorParams& target,
                    double threshold = 0.1) {
  if (!(threshold > 0.0)) throw ConfigError("success: threshold must be positive");
  return generator_distance(best, target) < threshold;
}

enum class Sign { Negative = -1, Zero = 0, Positive = 1 };

inline char sign_char(Sign s) {
  return s == Sign::Positive ? '+' : (s == Sign::Negative ? '-' : '0');
}

/// Signs of each interval's contribution P_*(iv) - P_G(iv) to the loss.
struct Quadrant {
  Sign left = Sign::Zero;
  Sign right = Sign::Zero;
  friend bool operator==(const Quadrant&, const Quadrant&) = default;
  std::string name() const { return {'(', sign_char(left), ',', sign_char(right), ')'}; }
  /// Two-character form without separators, e.g. "-+".
  std::string code() const { return {sign_char(left), sign_char(right)}; }
};

inline double interval_contribution(const Interval& iv, const GeneratorParams& gen,
                                    const GeneratorParams& target) {
  const double real = 0.5 * (unit_normal_interval_prob(target.mu1, iv) +
                             unit_normal_interval_prob(target.mu2, iv));
  const double fake =
      0.5 * (unit_normal_interval_prob(gen.mu1, iv) + unit_normal_interval_prob(gen.mu2, iv));
  return real - fake;
}

inline Sign sign_of(double contribution, double zero_tol = 1e-12) {
  if (std::fabs(contribution) < zero_tol) return Sign::Zero;
  return contribution > 0.0 ? Sign::Positive : Sign::Negative;
}

inline Quadrant interval_fitness_signs(const DiscriminatorParams& disc,
                                       const GeneratorParams& gen_fixed,
                                       const GeneratorParams& target) {
  disc.validate();
  return {sign_of(interval_contribution(disc.left(), gen_fixed, target)),
          sign_of(interval_contribution(disc.right(), gen_fixed, target))};
}

/// Rejection-samples a discriminator with four uniform bounds from
/// `bound_range` whose interval signs match `quadrant`.
inline DiscriminatorParams sample_disc_in_quadrant(Quadrant quadrant,
                                                   const GeneratorParams& gen_fixed,
                                                   const GeneratorParams& target,
                                                   const Interval& bound_range, Rng& rng,
                                                   int max_attempts = 10000,
                                                   int* attempts_used = nullptr) {
  bound_range.validate();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::array<double, 4> b{};
    for (double& v : b) v = rng.uniform(bound_range.lo, bound_range.hi);
    const auto disc = repair(b);
    if (interval_fitness_signs(disc, gen_fixed, target) == quadrant) {
      if (attempts_used) *attempts_used = attempt + 1;
      return disc;
    }
  }
  throw InfeasibleError("sample_disc_in_quadrant: quadrant " + quadrant.name() +
                        " not reached after " + std::to_string(max_attempts) + " attempts");
}

enum class UpdateOrder {
  Simultaneous,  ///< both gradients at the pre-step point
  Alternating,   ///< generator first, discriminator gradient at the new generator
};

struct GradientStepOptions {
  UpdateOrder order = UpdateOrder::Simultaneous;
  BoundHandling bounds = BoundHandling::Sort;
};

/// One step of gradient descent (generator) / ascent (discriminator).
inline std::pair<GeneratorParams, DiscriminatorParams> simultaneous_gradient_step(
    const GeneratorParams& gen, const DiscriminatorParams& disc, const GeneratorParams& target,
    double lr_gen, double lr_disc, GradientStepOptions options = {}) {
  const auto gg = grad_generator(gen, disc, target);
  const GeneratorParams next_gen{gen.mu1 - lr_gen * gg.d_mu1, gen.mu2 - lr_gen * gg.d_mu2};
  const auto& gen_for_disc = options.order == UpdateOrder::Simultaneous ? gen : next_gen;
  const auto gd = grad_discriminator(gen_for_disc, disc, target);
  const DiscriminatorParams next_disc =
      constrain({disc.l1 + lr_disc * gd.d_l1, disc.r1 + lr_disc * gd.d_r1,
                 disc.l2 + lr_disc * gd.d_l2, disc.r2 + lr_disc * gd.d_r2},
                options.bounds);
  return {next_gen, next_disc};
}

/// The game as a minimax problem for the coevolution engine.
class TheoreticalGan {
 public:
  using Generator = GeneratorParams;
  using Discriminator = DiscriminatorParams;

  explicit TheoreticalGan(GeneratorParams target, EvaluationMode mode = ClosedForm{})
      : target_(target), mode_(mode) {}

  const GeneratorParams& target() const { return target_; }
  const EvaluationMode& mode() const { return mode_; }

  double loss(const Generator& g, const Discriminator& d) const {
    return coevgan::loss(g, d, target_, mode_);
  }

  Generator descend(const Generator& g, const Discriminator& d, double lr) const {
    const auto grad = grad_generator(g, d, target_);
    return {g.mu1 - lr * grad.d_mu1, g.mu2 - lr * grad.d_mu2};
  }

  /// Step along the summed gradient against several opponents.
  Generator descend(const Generator& g, std::span<const Discriminator> ds, double lr) const {
    double d1 = 0.0, d2 = 0.0;
    for (const auto& d : ds) {
      const auto grad = grad_generator(g, d, target_);
      d1 += grad.d_mu1;
      d2 += grad.d_mu2;
    }
    return {g.mu1 - lr * d1, g.mu2 - lr * d2};
  }

  Discriminator ascend(const Discriminator& d, const Generator& g, double lr) const {
    const auto grad = grad_discriminator(g, d, target_);
    return repair({d.l1 + lr * grad.d_l1, d.r1 + lr * grad.d_r1, d.l2 + lr * grad.d_l2,
                   d.r2 + lr * grad.d_r2});
  }

  Discriminator ascend(const Discriminator& d, std::span<const Generator> gs, double lr) const {
    std::array<double, 4> acc{};
    for (const auto& g : gs) {
      const auto grad = grad_discriminator(g, d, target_);
      acc[0] += grad.d_l1;
      acc[1] += grad.d_r1;
      acc[2] += grad.d_l2;
      acc[3] += grad.d_r2;
    }
    return repair({d.l1 + lr * acc[0], d.r1 + lr * acc[1], d.l2 + lr * acc[2], d.r2 + lr * acc[3]});
  }

  Generator perturb(const Generator& g, double sigma, Rng& rng) const {
    const double a = rng.normal(g.mu1, sigma);
    const double b = rng.normal(g.mu2, sigma);
    return {a, b};
  }

  Discriminator perturb(const Discriminator& d, double sigma, Rng& rng) const {
    std::array<double, 4> b = d.bounds();
    for (double& v : b) v = rng.normal(v, sigma);
    return repair(b);
  }

 private:
  GeneratorParams target_;
  EvaluationMode mode_;
};

}  // namespace coevgan
