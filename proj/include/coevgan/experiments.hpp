#pragma once

// Experiment runners. Each returns plain data; report.hpp turns it into files.
// Every (experiment, cell, run) owns an rng derived from the master seed, so
// results do not depend on the number of workers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "coevgan/coevo.hpp"
#include "coevgan/config.hpp"
#include "coevgan/grid.hpp"
#include "coevgan/mixture.hpp"
#include "coevgan/problem.hpp"
#include "coevgan/rng.hpp"

namespace coevgan {

// Seed-path roots; one per experiment so streams never collide.
inline constexpr std::uint64_t kSeedConverge = 1;
inline constexpr std::uint64_t kSeedModeCollapse = 2;
inline constexpr std::uint64_t kSeedDiscCollapse = 3;
inline constexpr std::uint64_t kSeedGrid = 4;

struct TraceRecord {
  int run = 0;
  int generation = 0;
  GeneratorParams gen;
  DiscriminatorParams disc;
  double best_gen_fitness = 0.0;
  double best_disc_fitness = 0.0;
};

using ConvergenceTrace = std::vector<TraceRecord>;

struct RunSummary {
  int run = 0;
  GeneratorParams final_gen;
  double distance = 0.0;
  bool success = false;
};

struct ConvergeResult {
  ConvergenceTrace coev;
  ConvergenceTrace baseline;
  std::vector<RunSummary> coev_summary;
  std::vector<RunSummary> baseline_summary;

  static double success_rate(const std::vector<RunSummary>& s) {
    int ok = 0;
    for (const auto& r : s) ok += r.success ? 1 : 0;
    return s.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(s.size());
  }
};

struct InitialPopulations {
  Population<GeneratorParams> gens;
  Population<DiscriminatorParams> discs;
};

/// T generators with mu1 from `mu1_range`, mu2 from `mu2_range`, and T
/// discriminators with bounds from the configured range.
inline InitialPopulations init_populations(const ExperimentConfig& cfg, Interval mu1_range,
                                           Interval mu2_range, Rng& rng) {
  InitialPopulations p;
  for (int i = 0; i < cfg.pop_size; ++i) {
    const double a = rng.uniform(mu1_range.lo, mu1_range.hi);
    const double b = rng.uniform(mu2_range.lo, mu2_range.hi);
    p.gens.push_back({{a, b}, cfg.learning_rate, std::nullopt});
  }
  for (int i = 0; i < cfg.pop_size; ++i) {
    std::array<double, 4> bounds{};
    for (double& v : bounds) v = rng.uniform(cfg.disc_init_lo, cfg.disc_init_hi);
    p.discs.push_back({repair(bounds), cfg.learning_rate, std::nullopt});
  }
  return p;
}

namespace detail {

inline TrackedWeights uniform_tracked(std::size_t n) {
  const double w = 1.0 / static_cast<double>(n);
  return {std::vector<double>(n, w), std::vector<double>(n, w)};
}

}  // namespace detail

/// Runs the basic loop, recording the best pair of every generation.
inline std::pair<Population<GeneratorParams>, Population<DiscriminatorParams>> run_traced(
    const ExperimentConfig& cfg, const TheoreticalGan& problem, InitialPopulations init,
    const CoevConfig& coev, Rng& rng, int run, ConvergenceTrace* trace) {
  RunHooks<GeneratorParams, DiscriminatorParams> hooks;
  if (trace)
    hooks.on_generation = [&](int g, const Population<GeneratorParams>& pu,
                              const Population<DiscriminatorParams>& pv) {
      trace->push_back({run, g, pu[0].params, pv[0].params, *pu[0].fitness, *pv[0].fitness});
    };
  TrackedWeights weights;
  TrackedWeights* wp = nullptr;
  if (cfg.fitness_weighting == FitnessWeighting::Weighted) {
    weights = detail::uniform_tracked(init.gens.size());
    wp = &weights;
  }
  return run_basic(problem, std::move(init.gens), std::move(init.discs), coev, rng, wp, hooks);
}

/// Gradient dynamics from (gen, disc): `records` records after the initial
/// one, `baseline_steps_per_generation` steps apart.
inline ConvergenceTrace run_baseline_trace(const ExperimentConfig& cfg, GeneratorParams gen,
                                           DiscriminatorParams disc, int records, int run,
                                           double lr_gen, double lr_disc) {
  ConvergenceTrace out;
  const auto target = cfg.target();
  auto record = [&](int g) {
    const double l = loss(gen, disc, target);
    out.push_back({run, g, gen, disc, -l, l});
  };
  record(0);
  for (int g = 1; g <= records; ++g) {
    for (int s = 0; s < cfg.baseline_steps_per_generation; ++s)
      std::tie(gen, disc) = simultaneous_gradient_step(gen, disc, target, lr_gen, lr_disc,
                                                       cfg.baseline_options());
    record(g);
  }
  return out;
}

inline Rng run_rng(const ExperimentConfig& cfg, std::uint64_t root, std::uint64_t cell,
                   std::uint64_t run) {
  return Rng(derive_seed(cfg.master_seed, {root, cell, run}));
}

/// Coevolution and the gradient baseline from the same initial best pair.
inline ConvergeResult run_converge(const ExperimentConfig& cfg, bool with_coev = true) {
  cfg.validate();
  const auto problem = cfg.problem();
  const Interval range{cfg.gen_init_lo, cfg.gen_init_hi};
  std::vector<ConvergeResult> per_run(static_cast<std::size_t>(cfg.runs));
  detail::run_parallel(per_run.size(), static_cast<unsigned>(cfg.workers), [&](std::size_t r) {
    const int run = static_cast<int>(r);
    Rng rng = run_rng(cfg, kSeedConverge, 0, r);
    auto init = init_populations(cfg, range, range, rng);
    ConvergeResult& out = per_run[r];
    // The baseline starts from the best pair of the initial evaluation.
    const auto coev = cfg.coev_config(cfg.generations, init.gens.size());
    CoevConfig zero = coev;
    zero.generations = 0;
    Rng probe = rng;
    ConvergenceTrace first;
    run_traced(cfg, problem, init, zero, probe, run, &first);
    if (with_coev) {
      auto [pu, pv] = run_traced(cfg, problem, init, coev, rng, run, &out.coev);
      const double d = generator_distance(pu[0].params, cfg.target());
      out.coev_summary.push_back({run, pu[0].params, d, d < cfg.success_threshold});
    }
    out.baseline = run_baseline_trace(cfg, first[0].gen, first[0].disc, cfg.generations, run,
                                      cfg.baseline_lr_gen, cfg.baseline_lr_disc);
    const auto& last = out.baseline.back().gen;
    const double d = generator_distance(last, cfg.target());
    out.baseline_summary.push_back({run, last, d, d < cfg.success_threshold});
  });
  ConvergeResult all;
  for (auto& r : per_run) {
    all.coev.insert(all.coev.end(), r.coev.begin(), r.coev.end());
    all.baseline.insert(all.baseline.end(), r.baseline.begin(), r.baseline.end());
    all.coev_summary.insert(all.coev_summary.end(), r.coev_summary.begin(), r.coev_summary.end());
    all.baseline_summary.insert(all.baseline_summary.end(), r.baseline_summary.begin(),
                                r.baseline_summary.end());
  }
  return all;
}

/// Success counts over a rectangular grid of bins. Row i, column j.
struct HeatmapResult {
  std::vector<double> row_centers;
  std::vector<double> col_centers;
  double bin_width = 0.0;
  std::vector<int> successes;  // row-major
  std::vector<char> applicable;
  int runs_per_cell = 0;

  std::size_t rows() const { return row_centers.size(); }
  std::size_t cols() const { return col_centers.size(); }
  int count(std::size_t i, std::size_t j) const { return successes[i * cols() + j]; }
  bool is_applicable(std::size_t i, std::size_t j) const { return applicable[i * cols() + j]; }
  double rate(std::size_t i, std::size_t j) const {
    return static_cast<double>(count(i, j)) / static_cast<double>(runs_per_cell);
  }
};

inline std::vector<double> bin_centers(double lo, double hi, double step) {
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = lo + static_cast<double>(i) * step;
  return c;
}

struct ModeCollapseResult {
  HeatmapResult coev;
  HeatmapResult baseline;

  /// Mean success rate over bins with equal row and column index.
  static double diagonal_mean(const HeatmapResult& h) {
    double s = 0.0;
    const std::size_t n = std::min(h.rows(), h.cols());
    for (std::size_t i = 0; i < n; ++i) s += h.rate(i, i);
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// Generators initialized inside each (mu1, mu2) bin square; the baseline
/// starts from the first generator and discriminator of the same draw.
inline ModeCollapseResult run_mode_collapse(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto problem = cfg.problem();
  const auto centers = bin_centers(cfg.heatmap_lo, cfg.heatmap_hi, cfg.heatmap_step);
  const std::size_t n = centers.size();
  ModeCollapseResult res;
  for (HeatmapResult* h : {&res.coev, &res.baseline}) {
    h->row_centers = centers;
    h->col_centers = centers;
    h->bin_width = cfg.heatmap_step;
    h->successes.assign(n * n, 0);
    h->applicable.assign(n * n, 1);
    h->runs_per_cell = cfg.heatmap_runs;
  }
  const auto coev = cfg.coev_config(cfg.heatmap_generations, static_cast<std::size_t>(cfg.pop_size));
  const double half = 0.5 * cfg.heatmap_step;
  detail::run_parallel(n * n, static_cast<unsigned>(cfg.workers), [&](std::size_t cell) {
    const Interval r1{centers[cell / n] - half, centers[cell / n] + half};
    const Interval r2{centers[cell % n] - half, centers[cell % n] + half};
    for (int run = 0; run < cfg.heatmap_runs; ++run) {
      Rng rng = run_rng(cfg, kSeedModeCollapse, cell, static_cast<std::uint64_t>(run));
      auto init = init_populations(cfg, r1, r2, rng);
      const auto g0 = init.gens[0].params;
      const auto d0 = init.discs[0].params;
      auto [pu, pv] = run_traced(cfg, problem, std::move(init), coev, rng, run, nullptr);
      if (success(pu[0].params, cfg.target(), cfg.success_threshold)) ++res.coev.successes[cell];
      const auto trace = run_baseline_trace(cfg, g0, d0, cfg.heatmap_generations, run,
                                            cfg.baseline_lr_gen, cfg.baseline_lr_disc);
      if (success(trace.back().gen, cfg.target(), cfg.success_threshold))
        ++res.baseline.successes[cell];
    }
  });
  return res;
}

/// Quadrants laid out as a 2x2 map: columns are the left-interval sign
/// (-, +), rows the right-interval sign (+, -). Bottom-left is (-, -).
inline Quadrant quadrant_at(std::size_t row, std::size_t col) {
  return {col == 0 ? Sign::Negative : Sign::Positive,
          row == 0 ? Sign::Positive : Sign::Negative};
}

struct DiscTraceRecord {
  std::string quadrant;
  std::string dynamics;
  int generation = 0;
  DiscriminatorParams disc;
  double fitness = 0.0;
};

struct DiscCollapseResult {
  HeatmapResult coev;
  HeatmapResult baseline;
  std::vector<DiscTraceRecord> trace;
};

/// Fitness of a discriminator against the frozen generator.
inline double disc_fitness(const ExperimentConfig& cfg, const DiscriminatorParams& d) {
  return loss(cfg.disc_gen_fixed(), d, cfg.target());
}

/// A run succeeds when the best discriminator ends at least disc_margin above
/// the best initial one. Infeasible quadrants are marked not applicable.
inline DiscCollapseResult run_disc_collapse(const ExperimentConfig& cfg) {
  cfg.validate();
  const TheoreticalGan problem = cfg.problem();
  const auto gen_fixed = cfg.disc_gen_fixed();
  const Interval bound_range{cfg.disc_init_lo, cfg.disc_init_hi};
  DiscCollapseResult res;
  for (HeatmapResult* h : {&res.coev, &res.baseline}) {
    h->row_centers = {1.0, -1.0};
    h->col_centers = {-1.0, 1.0};
    h->bin_width = 2.0;
    h->successes.assign(4, 0);
    h->applicable.assign(4, 1);
    h->runs_per_cell = cfg.disc_runs;
  }
  auto coev = cfg.coev_config(cfg.generations, static_cast<std::size_t>(cfg.pop_size));
  coev.freeze_generators = true;
  std::array<std::vector<DiscTraceRecord>, 4> traces;

  detail::run_parallel(4, static_cast<unsigned>(cfg.workers), [&](std::size_t cell) {
    const Quadrant q = quadrant_at(cell / 2, cell % 2);
    for (int run = 0; run < cfg.disc_runs; ++run) {
      Rng rng = run_rng(cfg, kSeedDiscCollapse, cell, static_cast<std::uint64_t>(run));
      InitialPopulations init;
      try {
        for (int i = 0; i < cfg.pop_size; ++i)
          init.discs.push_back({sample_disc_in_quadrant(q, gen_fixed, cfg.target(), bound_range,
                                                        rng, cfg.disc_attempts),
                                cfg.learning_rate, std::nullopt});
      } catch (const InfeasibleError&) {
        res.coev.applicable[cell] = 0;
        res.baseline.applicable[cell] = 0;
        return;
      }
      for (int i = 0; i < cfg.pop_size; ++i)
        init.gens.push_back({gen_fixed, cfg.learning_rate, std::nullopt});

      double initial_best = -1.0;
      for (const auto& d : init.discs) initial_best = std::max(initial_best, disc_fitness(cfg, d.params));
      const auto d0 = init.discs[0].params;
      const bool traced = cfg.disc_trace && run == 0;

      ConvergenceTrace coev_trace;
      auto [pu, pv] = run_traced(cfg, problem, std::move(init), coev, rng, run,
                                 traced ? &coev_trace : nullptr);
      if (disc_fitness(cfg, pv[0].params) >= initial_best + cfg.disc_margin)
        ++res.coev.successes[cell];

      const auto base = run_baseline_trace(cfg, gen_fixed, d0, cfg.generations, run, 0.0,
                                           cfg.baseline_lr_disc);
      if (disc_fitness(cfg, base.back().disc) >= disc_fitness(cfg, d0) + cfg.disc_margin)
        ++res.baseline.successes[cell];

      if (traced) {
        for (const auto& r : coev_trace)
          traces[cell].push_back({q.code(), "coevolution", r.generation, r.disc,
                                  disc_fitness(cfg, r.disc)});
        for (const auto& r : base)
          traces[cell].push_back({q.code(), "baseline", r.generation, r.disc,
                                  disc_fitness(cfg, r.disc)});
      }
    }
  });
  for (auto& t : traces) res.trace.insert(res.trace.end(), t.begin(), t.end());
  return res;
}

struct GridRunResult {
  Grid grid;
  RunGridStats stats;
  std::vector<double> g;  // per neighbourhood
  BestMixture best;
};

inline Grid initial_grid(const ExperimentConfig& cfg) {
  Rng rng(derive_seed(cfg.master_seed, {kSeedGrid, 0}));
  CellInitializer init;
  init.gen_range = {cfg.gen_init_lo, cfg.gen_init_hi};
  init.disc_range = {cfg.disc_init_lo, cfg.disc_init_hi};
  init.learning_rate = cfg.learning_rate;
  init.es_sigma = cfg.es_sigma;
  return build_grid(static_cast<std::size_t>(cfg.grid_m),
                    static_cast<std::size_t>(cfg.per_cell_size), init, rng);
}

/// Runs `generations` cell steps per cell, starting from `start` when given
/// (a resumed checkpoint) and from a fresh grid otherwise.
inline GridRunResult run_grid_experiment(const ExperimentConfig& cfg,
                                         std::optional<Grid> start = std::nullopt) {
  cfg.validate();
  const auto problem = cfg.problem();
  const auto gcfg = cfg.grid_config();
  GridRunResult res{start ? std::move(*start) : initial_grid(cfg), {}, {}, {}};
  RunGridOptions opt;
  opt.total_generations = static_cast<std::uint64_t>(cfg.generations);
  if (cfg.asynchronous) {
    Asynchronous a;
    if (cfg.max_generation_skew > 0) a.max_generation_skew = cfg.max_generation_skew;
    opt.mode = a;
  }
  opt.workers = static_cast<unsigned>(cfg.workers);
  opt.master_seed = derive_seed(cfg.master_seed, {kSeedGrid, 1});
  opt.early_stop_window = cfg.early_stop_window;
  opt.early_stop_tolerance = cfg.early_stop_tolerance;
  res.stats = run_grid(res.grid, problem, gcfg, opt);
  for (const auto& m : neighborhood_mixtures(res.grid))
    res.g.push_back(metric_g(m.gens, m.weights, cfg.target(), gcfg.metric));
  res.best = select_best_mixture(res.grid, cfg.target(), gcfg.metric);
  return res;
}

}  // namespace coevgan
