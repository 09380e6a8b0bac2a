#pragma once

// Generator neighbourhoods as mixtures: the quality metric g, a (1+1)-ES over
// the mixture weights, and selection of the best neighbourhood mixture.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "coevgan/errors.hpp"
#include "coevgan/gaussmix.hpp"
#include "coevgan/problem.hpp"
#include "coevgan/rng.hpp"

namespace coevgan {

/// A point on the probability simplex.
class MixtureWeights {
 public:
  MixtureWeights() = default;
  explicit MixtureWeights(std::vector<double> w) : w_(std::move(w)) { validate(); }

  static MixtureWeights uniform(std::size_t n) {
    if (n == 0) throw ConfigError("MixtureWeights: empty");
    return MixtureWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  void validate() const {
    if (w_.empty()) throw ConfigError("MixtureWeights: empty");
    double s = 0.0;
    for (double x : w_) {
      if (!(x >= 0.0)) throw DomainError("MixtureWeights: negative or NaN weight");
      s += x;
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw DomainError("MixtureWeights: weights sum to " + std::to_string(s));
  }

  std::span<const double> values() const { return w_; }
  const std::vector<double>& vector() const { return w_; }
  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  friend bool operator==(const MixtureWeights&, const MixtureWeights&) = default;

 private:
  std::vector<double> w_;
};

/// -integral (p_mix - p_*)^2 dx by the trapezoid rule on [lo, hi].
struct NegL2DensityDistance {
  double grid_lo = -15.0;
  double grid_hi = 15.0;
  double grid_step = 0.01;

  void validate() const {
    if (!(grid_lo < grid_hi)) throw ConfigError("NegL2DensityDistance: grid_lo must be < grid_hi");
    if (!(grid_step > 0.0)) throw ConfigError("NegL2DensityDistance: grid_step must be > 0");
  }
};

using CustomMetric = std::function<double(std::span<const GeneratorParams>,
                                          const MixtureWeights&, const GeneratorParams& target)>;

using MixtureMetric = std::variant<NegL2DensityDistance, CustomMetric>;

/// The 2N-component mixture sum_i w_i G_{u_i}.
inline UnitGaussianMixture neighborhood_density(std::span<const GeneratorParams> gens,
                                                const MixtureWeights& w) {
  if (gens.size() != w.size())
    throw ConfigError("neighborhood_density: " + std::to_string(gens.size()) + " generators, " +
                      std::to_string(w.size()) + " weights");
  std::vector<double> means, weights;
  means.reserve(2 * gens.size());
  weights.reserve(2 * gens.size());
  for (std::size_t i = 0; i < gens.size(); ++i) {
    means.push_back(gens[i].mu1);
    means.push_back(gens[i].mu2);
    weights.push_back(0.5 * w[i]);
    weights.push_back(0.5 * w[i]);
  }
  return UnitGaussianMixture(std::move(means), std::move(weights));
}

namespace detail {

inline double neg_l2_distance(const UnitGaussianMixture& mix, const GeneratorParams& target,
                              const NegL2DensityDistance& m) {
  m.validate();
  const auto steps = static_cast<long>(std::llround((m.grid_hi - m.grid_lo) / m.grid_step));
  const auto real = target.density();
  double acc = 0.0;
  for (long k = 0; k <= steps; ++k) {
    const double x = m.grid_lo + static_cast<double>(k) * m.grid_step;
    const double diff = mixture_pdf(mix, x) - mixture_pdf(real, x);
    const double f = diff * diff;
    acc += (k == 0 || k == steps) ? 0.5 * f : f;
  }
  return -acc * m.grid_step;
}

}  // namespace detail

/// Performance of a neighbourhood mixture; higher is better.
inline double metric_g(std::span<const GeneratorParams> gens, const MixtureWeights& w,
                       const GeneratorParams& target, const MixtureMetric& metric) {
  if (const auto* custom = std::get_if<CustomMetric>(&metric)) return (*custom)(gens, w, target);
  return detail::neg_l2_distance(neighborhood_density(gens, w), target,
                                 std::get<NegL2DensityDistance>(metric));
}

/// Gaussian candidate projected back onto the simplex by clamping negatives
/// to zero and renormalizing. Returns nullopt when every coordinate clamps.
inline std::optional<MixtureWeights> mutate_weights(const MixtureWeights& w, double sigma,
                                                    Rng& rng) {
  std::vector<double> c(w.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    c[i] = std::max(0.0, rng.normal(w[i], sigma));
    s += c[i];
  }
  if (!(s > 0.0)) return std::nullopt;
  for (double& x : c) x /= s;
  return MixtureWeights(std::move(c));
}

/// One (1+1)-ES step: keep the candidate iff g strictly improves.
inline MixtureWeights es_step(const MixtureWeights& w, std::span<const GeneratorParams> gens,
                              const GeneratorParams& target, const MixtureMetric& metric,
                              double sigma_w, Rng& rng) {
  if (!(sigma_w >= 0.0)) throw ConfigError("es_step: sigma_w must be >= 0");
  if (sigma_w == 0.0) return w;
  const auto candidate = mutate_weights(w, sigma_w, rng);
  if (!candidate) return w;
  return metric_g(gens, *candidate, target, metric) > metric_g(gens, w, target, metric) ? *candidate
                                                                                        : w;
}

/// (1+1)-ES state with an optional 1/5th success rule on sigma.
struct OnePlusOneEs {
  double sigma = 0.01;
  bool adapt_sigma = false;

  /// Advances `w` by one step and returns whether the candidate was taken.
  bool step(MixtureWeights& w, std::span<const GeneratorParams> gens,
            const GeneratorParams& target, const MixtureMetric& metric, Rng& rng) {
    if (sigma == 0.0) return false;
    const auto candidate = mutate_weights(w, sigma, rng);
    const bool accepted = candidate && metric_g(gens, *candidate, target, metric) >
                                           metric_g(gens, w, target, metric);
    if (accepted) w = *candidate;
    if (adapt_sigma) sigma *= accepted ? std::exp(1.0 / 3.0) : std::exp(-1.0 / 12.0);
    return accepted;
  }
};

/// A neighbourhood's generators with their mixture weights.
struct NeighborhoodMixture {
  std::vector<GeneratorParams> gens;
  MixtureWeights weights;
};

struct BestMixture {
  std::size_t index = 0;
  std::vector<GeneratorParams> gens;
  MixtureWeights weights;
  double g = -std::numeric_limits<double>::infinity();
};

/// argmax_k g(sum_i w^k_i G_{u_i}); ties go to the smallest k.
inline BestMixture select_best_mixture(std::span<const NeighborhoodMixture> candidates,
                                       const GeneratorParams& target,
                                       const MixtureMetric& metric) {
  if (candidates.empty()) throw ConfigError("select_best_mixture: no neighbourhoods");
  BestMixture best;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double g = metric_g(candidates[k].gens, candidates[k].weights, target, metric);
    if (k == 0 || g > best.g) best = {k, candidates[k].gens, candidates[k].weights, g};
  }
  return best;
}

}  // namespace coevgan
