#pragma once

// Competitive coevolution of a generator population against a discriminator
// population: evaluate all pairs, sort, select, mutate, and keep a mutant
// only when it beats its parent against the same opposing snapshot.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coevgan/errors.hpp"
#include "coevgan/rng.hpp"

namespace coevgan {

/// A two-player zero-sum problem the engine can drive. The generator
/// minimizes loss(), the discriminator maximizes it.
template <class P>
concept MinimaxProblem = requires(const P& p, const typename P::Generator& g,
                                  const typename P::Discriminator& d,
                                  std::span<const typename P::Generator> gs,
                                  std::span<const typename P::Discriminator> ds, double x,
                                  Rng& rng) {
  { p.loss(g, d) } -> std::convertible_to<double>;
  { p.descend(g, d, x) } -> std::same_as<typename P::Generator>;
  { p.descend(g, ds, x) } -> std::same_as<typename P::Generator>;
  { p.ascend(d, g, x) } -> std::same_as<typename P::Discriminator>;
  { p.ascend(d, gs, x) } -> std::same_as<typename P::Discriminator>;
  { p.perturb(g, x, rng) } -> std::same_as<typename P::Generator>;
  { p.perturb(d, x, rng) } -> std::same_as<typename P::Discriminator>;
};

template <class Params>
struct Individual {
  Params params{};
  double learning_rate = 1e-3;
  std::optional<double> fitness;

  friend bool operator==(const Individual&, const Individual&) = default;
};

template <class Params>
using Population = std::vector<Individual<Params>>;

enum class MutationKind {
  GradientStep,  ///< params moved by lr times the gradient of the loss
  Gaussian,      ///< params + N(0, mutation_step^2) per coordinate
};

enum class FitnessWeighting {
  Uniform,   ///< every pair counts once
  Weighted,  ///< pair (i, j) scaled by w_u[i] * w_v[j]
};

enum class GradientOpponents {
  SingleRandom,  ///< one uniformly drawn opponent per mutation
  All,           ///< summed over the whole opposing population
};

enum class ReplacementKind {
  SlotWise,    ///< mutant i replaces parent i iff strictly fitter
  Truncation,  ///< parents and mutants re-evaluated together, best T kept
};

struct CoevConfig {
  int generations = 100;
  /// Per-slot rank-keep probabilities. Empty means 1 for every slot.
  std::vector<double> selection_probs;
  /// Per-slot mutation probabilities. Empty means 1 for every slot.
  std::vector<double> mutation_probs;
  double mutation_step = 1.0;
  double lr_mutation_sigma = 1e-7;
  MutationKind mutation_kind = MutationKind::Gaussian;
  FitnessWeighting fitness_weighting = FitnessWeighting::Uniform;
  GradientOpponents gradient_opponents = GradientOpponents::SingleRandom;
  ReplacementKind replacement = ReplacementKind::SlotWise;
  bool freeze_generators = false;
  bool freeze_discriminators = false;
  double lr_floor = 1e-12;

  double alpha(std::size_t i) const { return selection_probs.empty() ? 1.0 : selection_probs[i]; }
  double beta(std::size_t i) const { return mutation_probs.empty() ? 1.0 : mutation_probs[i]; }

  void validate(std::size_t population_size) const {
    if (generations < 0) throw ConfigError("CoevConfig: generations must be >= 0");
    auto check_probs = [&](const std::vector<double>& v, const char* name) {
      if (!v.empty() && v.size() != population_size)
        throw ConfigError(std::string("CoevConfig: ") + name + " has length " +
                          std::to_string(v.size()) + ", population has " +
                          std::to_string(population_size));
      for (double p : v)
        if (!(p >= 0.0 && p <= 1.0))
          throw ConfigError(std::string("CoevConfig: ") + name + " entries must lie in [0,1]");
    };
    check_probs(selection_probs, "selection_probs");
    check_probs(mutation_probs, "mutation_probs");
    if (!(mutation_step > 0.0)) throw ConfigError("CoevConfig: mutation_step must be > 0");
    if (!(lr_mutation_sigma >= 0.0))
      throw ConfigError("CoevConfig: lr_mutation_sigma must be >= 0");
    if (!(lr_floor > 0.0)) throw ConfigError("CoevConfig: lr_floor must be > 0");
    if (replacement == ReplacementKind::Truncation &&
        fitness_weighting == FitnessWeighting::Weighted)
      throw ConfigError("CoevConfig: truncation replacement is not defined for weighted fitness");
  }
};

/// values[i][j] = L(u_i, v_j), stored row-major.
class FitnessMatrix {
 public:
  FitnessMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), v_(rows * cols) {}
  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> v_;
};

/// Mixture weights for the weighted-fitness variant, aligned with the
/// population order at the time of the call.
struct FitnessWeights {
  std::span<const double> gens;
  std::span<const double> discs;
};

namespace detail {

inline void check_simplex(std::span<const double> w, std::size_t n, const char* what) {
  if (w.size() != n)
    throw ConfigError(std::string(what) + ": weight length " + std::to_string(w.size()) +
                      " does not match population size " + std::to_string(n));
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw ConfigError(std::string(what) + ": negative weight");
    s += x;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw ConfigError(std::string(what) + ": weights do not sum to 1");
}

template <class Params>
std::vector<Params> params_of(const Population<Params>& pop) {
  std::vector<Params> out;
  out.reserve(pop.size());
  for (const auto& ind : pop) out.push_back(ind.params);
  return out;
}

}  // namespace detail

/// Evaluates every pair and assigns fitness: generators get minus their
/// (weighted) row sum, discriminators plus their column sum.
template <MinimaxProblem P>
FitnessMatrix evaluate(const P& problem, Population<typename P::Generator>& pop_u,
                       Population<typename P::Discriminator>& pop_v,
                       const FitnessWeights* weights = nullptr) {
  if (pop_u.empty() || pop_v.empty()) throw ConfigError("evaluate: empty population");
  if (weights) {
    detail::check_simplex(weights->gens, pop_u.size(), "evaluate(generators)");
    detail::check_simplex(weights->discs, pop_v.size(), "evaluate(discriminators)");
  }
  FitnessMatrix m(pop_u.size(), pop_v.size());
  std::vector<double> fu(pop_u.size(), 0.0), fv(pop_v.size(), 0.0);
  for (std::size_t i = 0; i < pop_u.size(); ++i) {
    for (std::size_t j = 0; j < pop_v.size(); ++j) {
      const double l = problem.loss(pop_u[i].params, pop_v[j].params);
      m(i, j) = l;
      const double term = weights ? weights->gens[i] * weights->discs[j] * l : l;
      fu[i] -= term;
      fv[j] += term;
    }
  }
  for (std::size_t i = 0; i < pop_u.size(); ++i) pop_u[i].fitness = fu[i];
  for (std::size_t j = 0; j < pop_v.size(); ++j) pop_v[j].fitness = fv[j];
  return m;
}

/// Indices that order `pop` by descending fitness, stable on ties.
template <class Params>
std::vector<std::size_t> sort_order(const Population<Params>& pop) {
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (!pop[i].fitness) throw StateError("sort: fitness of member " + std::to_string(i) + " unset");
  std::vector<std::size_t> idx(pop.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return *pop[a].fitness > *pop[b].fitness; });
  return idx;
}

template <class T>
std::vector<T> permute(const std::vector<T>& v, std::span<const std::size_t> order) {
  std::vector<T> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(v[i]);
  return out;
}

template <class Params>
Population<Params> sort(const Population<Params>& pop) {
  return permute(pop, sort_order(pop));
}

/// Source index for every slot of the next population: rank i is kept with
/// probability alpha_i, otherwise the slot goes to the winner of a binary
/// tournament between two uniformly drawn members (first draw wins ties).
/// `pop` must be sorted.
template <class Params>
std::vector<std::size_t> select_indices(const Population<Params>& pop,
                                        std::span<const double> selection_probs, Rng& rng) {
  const std::size_t n = pop.size();
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = selection_probs.empty() ? 1.0 : selection_probs[i];
    if (rng.bernoulli(alpha)) {
      out[i] = i;
      continue;
    }
    const std::size_t a = rng.index(n);
    const std::size_t b = rng.index(n);
    out[i] = (*pop[b].fitness > *pop[a].fitness) ? b : a;
  }
  return out;
}

template <class Params>
Population<Params> select(const Population<Params>& pop, std::span<const double> selection_probs,
                          Rng& rng) {
  const auto idx = select_indices(pop, selection_probs, rng);
  return permute(pop, idx);
}

/// learning_rate <- max(floor, learning_rate + N(0, sigma^2)).
template <class Params>
Individual<Params> mutate_learning_rate(Individual<Params> ind, double sigma, Rng& rng,
                                        double lr_floor = 1e-12) {
  if (!(sigma >= 0.0)) throw ConfigError("mutate_learning_rate: sigma must be >= 0");
  if (sigma > 0.0) ind.learning_rate = std::max(lr_floor, rng.normal(ind.learning_rate, sigma));
  return ind;
}

/// Mutates a generator. `opponents` is the opposing population snapshot; in
/// SingleRandom mode one member is drawn from it.
template <MinimaxProblem P>
Individual<typename P::Generator> mutate_params(
    const P& problem, Individual<typename P::Generator> ind,
    std::span<const typename P::Discriminator> opponents, const CoevConfig& config, Rng& rng) {
  ind.fitness.reset();
  if (config.mutation_kind == MutationKind::Gaussian) {
    ind.params = problem.perturb(ind.params, config.mutation_step, rng);
  } else if (config.gradient_opponents == GradientOpponents::SingleRandom) {
    ind.params = problem.descend(ind.params, opponents[rng.index(opponents.size())],
                                 ind.learning_rate);
  } else {
    ind.params = problem.descend(ind.params, opponents, ind.learning_rate);
  }
  return ind;
}

template <MinimaxProblem P>
Individual<typename P::Discriminator> mutate_params(
    const P& problem, Individual<typename P::Discriminator> ind,
    std::span<const typename P::Generator> opponents, const CoevConfig& config, Rng& rng) {
  ind.fitness.reset();
  if (config.mutation_kind == MutationKind::Gaussian) {
    ind.params = problem.perturb(ind.params, config.mutation_step, rng);
  } else if (config.gradient_opponents == GradientOpponents::SingleRandom) {
    ind.params = problem.ascend(ind.params, opponents[rng.index(opponents.size())],
                                ind.learning_rate);
  } else {
    ind.params = problem.ascend(ind.params, opponents, ind.learning_rate);
  }
  return ind;
}

/// The full mutation operator: with probability beta, mutate the learning
/// rate and then the parameters; otherwise return a copy.
template <MinimaxProblem P, class Params, class OpponentParams>
Individual<Params> mutate(const P& problem, const Individual<Params>& ind, double beta,
                          std::span<const OpponentParams> opponents, const CoevConfig& config,
                          Rng& rng) {
  if (!rng.bernoulli(beta)) return ind;
  auto out = mutate_learning_rate(ind, config.lr_mutation_sigma, rng, config.lr_floor);
  return mutate_params(problem, std::move(out), opponents, config, rng);
}

/// Slot-wise replacement: mutated[i] survives iff its fitness strictly
/// exceeds pop[i]'s. Both must carry fitness against the same opposing
/// snapshot.
template <class Params>
Population<Params> replace(const Population<Params>& pop, const Population<Params>& mutated) {
  if (pop.size() != mutated.size())
    throw ConfigError("replace: population sizes differ (" + std::to_string(pop.size()) + " vs " +
                      std::to_string(mutated.size()) + ")");
  Population<Params> out;
  out.reserve(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!pop[i].fitness || !mutated[i].fitness)
      throw StateError("replace: fitness unset at slot " + std::to_string(i));
    out.push_back(*mutated[i].fitness > *pop[i].fitness ? mutated[i] : pop[i]);
  }
  return out;
}

namespace detail {

template <MinimaxProblem P>
void score_generators(const P& problem, Population<typename P::Generator>& gens,
                      const Population<typename P::Discriminator>& opposing,
                      std::span<const double> w_gens, std::span<const double> w_discs) {
  for (std::size_t i = 0; i < gens.size(); ++i) {
    double f = 0.0;
    for (std::size_t j = 0; j < opposing.size(); ++j) {
      const double l = problem.loss(gens[i].params, opposing[j].params);
      f -= w_gens.empty() ? l : w_gens[i] * w_discs[j] * l;
    }
    gens[i].fitness = f;
  }
}

template <MinimaxProblem P>
void score_discriminators(const P& problem, Population<typename P::Discriminator>& discs,
                          const Population<typename P::Generator>& opposing,
                          std::span<const double> w_gens, std::span<const double> w_discs) {
  for (std::size_t j = 0; j < discs.size(); ++j) {
    double f = 0.0;
    for (std::size_t i = 0; i < opposing.size(); ++i) {
      const double l = problem.loss(opposing[i].params, discs[j].params);
      f += w_gens.empty() ? l : w_gens[i] * w_discs[j] * l;
    }
    discs[j].fitness = f;
  }
}

}  // namespace detail

/// Replacement with fitness of the mutants computed against `opposing`.
template <MinimaxProblem P>
Population<typename P::Generator> replace(const P& problem,
                                          const Population<typename P::Generator>& pop,
                                          Population<typename P::Generator> mutated,
                                          const Population<typename P::Discriminator>& opposing) {
  detail::score_generators(problem, mutated, opposing, {}, {});
  return replace(pop, mutated);
}

template <MinimaxProblem P>
Population<typename P::Discriminator> replace(
    const P& problem, const Population<typename P::Discriminator>& pop,
    Population<typename P::Discriminator> mutated,
    const Population<typename P::Generator>& opposing) {
  detail::score_discriminators(problem, mutated, opposing, {}, {});
  return replace(pop, mutated);
}

/// Optional observers for run_basic.
template <class G, class D>
struct RunHooks {
  /// Called after every evaluate with the matrix and both populations
  /// (fitness set, not yet sorted).
  std::function<void(int generation, const FitnessMatrix&, const Population<G>&,
                     const Population<D>&)>
      on_evaluate;
  /// Called with the sorted populations at the start of every generation
  /// and once more after the last one.
  std::function<void(int generation, const Population<G>&, const Population<D>&)> on_generation;
};

/// Weights that travel with their individuals through sorting and selection.
struct TrackedWeights {
  std::vector<double> gens;
  std::vector<double> discs;
};

/// Runs `config.generations` iterations of evaluate, sort, select,
/// mutate and replace. Returns both populations evaluated and sorted.
/// In Weighted mode `weights` must be given; it is permuted in step with the
/// populations and returned through the same pointer.
template <MinimaxProblem P>
std::pair<Population<typename P::Generator>, Population<typename P::Discriminator>> run_basic(
    const P& problem, Population<typename P::Generator> pop_u,
    Population<typename P::Discriminator> pop_v, const CoevConfig& config, Rng& rng,
    TrackedWeights* weights = nullptr,
    const RunHooks<typename P::Generator, typename P::Discriminator>& hooks = {}) {
  using G = typename P::Generator;
  using D = typename P::Discriminator;
  if (pop_u.size() != pop_v.size())
    throw ConfigError("run_basic: generator and discriminator populations differ in size");
  config.validate(pop_u.size());
  const bool weighted = config.fitness_weighting == FitnessWeighting::Weighted;
  if (weighted && !weights) throw ConfigError("run_basic: Weighted mode requires weights");
  TrackedWeights local;
  TrackedWeights& w = weights ? *weights : local;
  const std::size_t n = pop_u.size();

  auto evaluate_and_sort = [&](int gen) {
    FitnessWeights fw{w.gens, w.discs};
    const auto matrix = evaluate(problem, pop_u, pop_v, weighted ? &fw : nullptr);
    if (hooks.on_evaluate) hooks.on_evaluate(gen, matrix, pop_u, pop_v);
    const auto ou = sort_order(pop_u);
    const auto ov = sort_order(pop_v);
    pop_u = permute(pop_u, ou);
    pop_v = permute(pop_v, ov);
    if (weighted) {
      w.gens = permute(w.gens, ou);
      w.discs = permute(w.discs, ov);
    }
    if (hooks.on_generation) hooks.on_generation(gen, pop_u, pop_v);
  };

  for (int gen = 0; gen < config.generations; ++gen) {
    evaluate_and_sort(gen);
    // Opposing snapshot the parents were scored against.
    const Population<G> ref_u = pop_u;
    const Population<D> ref_v = pop_v;
    const TrackedWeights ref_w = w;

    const auto su = select_indices(pop_u, config.selection_probs, rng);
    const auto sv = select_indices(pop_v, config.selection_probs, rng);
    pop_u = permute(pop_u, su);
    pop_v = permute(pop_v, sv);
    if (weighted) {
      w.gens = permute(w.gens, su);
      w.discs = permute(w.discs, sv);
    }

    const auto snapshot_u = detail::params_of(ref_u);
    const auto snapshot_v = detail::params_of(ref_v);
    Population<G> mutated_u = pop_u;
    Population<D> mutated_v = pop_v;
    if (!config.freeze_generators)
      for (std::size_t i = 0; i < n; ++i)
        mutated_u[i] = mutate(problem, pop_u[i], config.beta(i), std::span<const D>(snapshot_v),
                              config, rng);
    if (!config.freeze_discriminators)
      for (std::size_t j = 0; j < n; ++j)
        mutated_v[j] = mutate(problem, pop_v[j], config.beta(j), std::span<const G>(snapshot_u),
                              config, rng);
    if (config.replacement == ReplacementKind::Truncation) {
      // A frozen side contributes its parents only; adding their copies
      // would let truncation duplicate the top half.
      Population<G> all_u = pop_u;
      Population<D> all_v = pop_v;
      if (!config.freeze_generators) all_u.insert(all_u.end(), mutated_u.begin(), mutated_u.end());
      if (!config.freeze_discriminators)
        all_v.insert(all_v.end(), mutated_v.begin(), mutated_v.end());
      evaluate(problem, all_u, all_v);
      pop_u = permute(all_u, sort_order(all_u));
      pop_v = permute(all_v, sort_order(all_v));
      pop_u.resize(n);
      pop_v.resize(n);
      continue;
    }
    using Span = std::span<const double>;
    if (weighted) {
      detail::score_generators(problem, mutated_u, ref_v, Span(w.gens), Span(ref_w.discs));
      detail::score_discriminators(problem, mutated_v, ref_u, Span(ref_w.gens), Span(w.discs));
    } else {
      detail::score_generators(problem, mutated_u, ref_v, {}, {});
      detail::score_discriminators(problem, mutated_v, ref_u, {}, {});
    }
    pop_u = replace(pop_u, mutated_u);
    pop_v = replace(pop_v, mutated_v);
  }
  evaluate_and_sort(config.generations);
  return {std::move(pop_u), std::move(pop_v)};
}

}  // namespace coevgan
