#pragma once

// Spatial coevolution on an m x m torus. Each cell owns a small generator
// and discriminator sub-population plus mixture weights over its
// neighbourhood's generators. A cell step runs the basic coevolution loop on
// the union of the five-cell neighbourhood and keeps the top individuals for
// the centre only.

#include <algorithm>
#include <array>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "coevgan/coevo.hpp"
#include "coevgan/errors.hpp"
#include "coevgan/mixture.hpp"
#include "coevgan/problem.hpp"
#include "coevgan/rng.hpp"

namespace coevgan {

inline constexpr std::size_t kNeighborhoodSize = 5;

struct Cell {
  Population<GeneratorParams> center_gens;
  Population<DiscriminatorParams> center_discs;
  MixtureWeights mixture_weights;
  std::uint64_t generation_counter = 0;
  /// Current ES step size; only changes when sigma adaptation is on.
  double es_sigma = 0.01;

  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Snapshots of a centre cell (first) and its four toroidal neighbours.
struct Neighborhood {
  std::size_t k = 0;
  std::array<Cell, kNeighborhoodSize> members;

  Population<GeneratorParams> union_gens() const {
    Population<GeneratorParams> out;
    for (const auto& c : members) out.insert(out.end(), c.center_gens.begin(), c.center_gens.end());
    return out;
  }
  Population<DiscriminatorParams> union_discs() const {
    Population<DiscriminatorParams> out;
    for (const auto& c : members)
      out.insert(out.end(), c.center_discs.begin(), c.center_discs.end());
    return out;
  }
};

class Grid {
 public:
  Grid() = default;
  Grid(std::size_t m, std::vector<Cell> cells) : m_(m), cells_(std::move(cells)) {
    if (m_ == 0) throw ConfigError("Grid: m must be >= 1");
    if (cells_.size() != m_ * m_)
      throw ConfigError("Grid: expected " + std::to_string(m_ * m_) + " cells, got " +
                        std::to_string(cells_.size()));
    const std::size_t n = cells_.front().center_gens.size();
    for (const auto& c : cells_) {
      if (c.center_gens.size() != n || c.center_discs.size() != n || n == 0)
        throw ConfigError("Grid: sub-population sizes differ between cells");
      if (c.mixture_weights.size() != kNeighborhoodSize * n)
        throw ConfigError("Grid: mixture weights must have length " +
                          std::to_string(kNeighborhoodSize * n));
    }
    init_locks();
  }
  Grid(const Grid& o) : m_(o.m_), cells_(o.all_cells()) { init_locks(); }
  Grid& operator=(const Grid& o) {
    if (this != &o) {
      auto copy = o.all_cells();
      m_ = o.m_;
      cells_ = std::move(copy);
      init_locks();
    }
    return *this;
  }
  Grid(Grid&&) = default;
  Grid& operator=(Grid&&) = default;

  std::size_t side() const { return m_; }
  std::size_t size() const { return cells_.size(); }
  std::size_t per_cell_size() const { return cells_.front().center_gens.size(); }
  /// N, the size of every neighbourhood union population.
  std::size_t neighborhood_population() const { return kNeighborhoodSize * per_cell_size(); }

  std::size_t index(std::size_t i, std::size_t j) const { return i * m_ + j; }

  /// Centre first, then up, down, left, right on the torus.
  std::array<std::size_t, kNeighborhoodSize> neighbors(std::size_t k) const {
    check(k);
    const std::size_t i = k / m_, j = k % m_;
    return {k, index((i + m_ - 1) % m_, j), index((i + 1) % m_, j), index(i, (j + m_ - 1) % m_),
            index(i, (j + 1) % m_)};
  }

  /// Consistent copy of one cell.
  Cell snapshot(std::size_t k) const {
    check(k);
    std::lock_guard lock(*locks_[k]);
    return cells_[k];
  }

  void store(std::size_t k, Cell cell) {
    check(k);
    std::lock_guard lock(*locks_[k]);
    cells_[k] = std::move(cell);
  }

  std::uint64_t generation_counter(std::size_t k) const {
    check(k);
    std::lock_guard lock(*locks_[k]);
    return cells_[k].generation_counter;
  }

  std::vector<Cell> all_cells() const {
    std::vector<Cell> out;
    out.reserve(cells_.size());
    for (std::size_t k = 0; k < cells_.size(); ++k) out.push_back(snapshot(k));
    return out;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.m_ == b.m_ && a.all_cells() == b.all_cells();
  }

 private:
  void check(std::size_t k) const {
    if (k >= cells_.size())
      throw ConfigError("Grid: cell index " + std::to_string(k) + " out of range");
  }
  void init_locks() {
    locks_.clear();
    for (std::size_t k = 0; k < cells_.size(); ++k) locks_.push_back(std::make_unique<std::mutex>());
  }

  std::size_t m_ = 0;
  std::vector<Cell> cells_;
  std::vector<std::unique_ptr<std::mutex>> locks_;
};

/// Uniform initialization ranges for fresh individuals.
struct CellInitializer {
  Interval gen_range{-10.0, 10.0};
  Interval disc_range{-10.0, 10.0};
  double learning_rate = 1e-3;
  double es_sigma = 0.01;
};

inline Grid build_grid(std::size_t m, std::size_t per_cell_size, const CellInitializer& init,
                       Rng& rng) {
  if (m == 0) throw ConfigError("build_grid: m must be >= 1");
  if (per_cell_size == 0) throw ConfigError("build_grid: per-cell size must be >= 1");
  init.gen_range.validate();
  init.disc_range.validate();
  std::vector<Cell> cells(m * m);
  for (auto& c : cells) {
    for (std::size_t i = 0; i < per_cell_size; ++i) {
      const double a = rng.uniform(init.gen_range.lo, init.gen_range.hi);
      const double b = rng.uniform(init.gen_range.lo, init.gen_range.hi);
      c.center_gens.push_back({{a, b}, init.learning_rate, std::nullopt});
    }
    for (std::size_t i = 0; i < per_cell_size; ++i) {
      std::array<double, 4> bounds{};
      for (double& v : bounds) v = rng.uniform(init.disc_range.lo, init.disc_range.hi);
      c.center_discs.push_back({repair(bounds), init.learning_rate, std::nullopt});
    }
    c.mixture_weights = MixtureWeights::uniform(kNeighborhoodSize * per_cell_size);
    c.es_sigma = init.es_sigma;
  }
  return Grid(m, std::move(cells));
}

inline Neighborhood gather_neighborhood(const Grid& grid, std::size_t k) {
  Neighborhood nb{k, {}};
  const auto idx = grid.neighbors(k);
  for (std::size_t s = 0; s < kNeighborhoodSize; ++s) nb.members[s] = grid.snapshot(idx[s]);
  return nb;
}

enum class EsSchedule {
  PerCellStep,    ///< one ES step at the end of every cell step
  PerGeneration,  ///< one ES step per cell after each synchronous generation
};

struct GridConfig {
  /// Inner loop configuration; `generations` is the number of basic
  /// iterations run on the neighbourhood per cell step.
  CoevConfig coev = [] {
    CoevConfig c;
    c.generations = 1;
    return c;
  }();
  MixtureMetric metric = NegL2DensityDistance{};
  bool adapt_es_sigma = false;
  EsSchedule es_schedule = EsSchedule::PerCellStep;
};

namespace detail {

inline std::vector<GeneratorParams> gen_params(const Population<GeneratorParams>& pop) {
  return params_of(pop);
}

inline void mixture_es(Cell& cell, std::span<const GeneratorParams> gens,
                       const GeneratorParams& target, const GridConfig& config, Rng& rng) {
  OnePlusOneEs es{cell.es_sigma, config.adapt_es_sigma};
  es.step(cell.mixture_weights, gens, target, config.metric, rng);
  cell.es_sigma = es.sigma;
}

}  // namespace detail

/// Runs the ES step for cell k against its current neighbourhood.
inline Cell es_update_cell(const Grid& grid, std::size_t k, const TheoreticalGan& problem,
                           const GridConfig& config, Rng& rng) {
  const auto nb = gather_neighborhood(grid, k);
  Cell cell = nb.members[0];
  const auto gens = detail::gen_params(nb.union_gens());
  detail::mixture_es(cell, gens, problem.target(), config, rng);
  return cell;
}

/// Evolves the neighbourhood of k and returns the new centre cell. Does not
/// write to the grid.
inline Cell step_cell(const Grid& grid, std::size_t k, const TheoreticalGan& problem,
                      const GridConfig& config, Rng& rng) {
  const auto nb = gather_neighborhood(grid, k);
  const Cell& center = nb.members[0];
  const std::size_t n = center.center_gens.size();
  const std::size_t big_n = kNeighborhoodSize * n;

  TrackedWeights weights;
  TrackedWeights* wp = nullptr;
  if (config.coev.fitness_weighting == FitnessWeighting::Weighted) {
    weights.gens = center.mixture_weights.vector();
    weights.discs.assign(big_n, 1.0 / static_cast<double>(big_n));
    wp = &weights;
  }
  auto [pu, pv] = run_basic(problem, nb.union_gens(), nb.union_discs(), config.coev, rng, wp);

  Cell out = center;
  out.center_gens.assign(pu.begin(), pu.begin() + static_cast<std::ptrdiff_t>(n));
  out.center_discs.assign(pv.begin(), pv.begin() + static_cast<std::ptrdiff_t>(n));
  out.generation_counter = center.generation_counter + 1;

  if (config.es_schedule == EsSchedule::PerCellStep) {
    auto mix = nb.union_gens();
    std::copy(out.center_gens.begin(), out.center_gens.end(), mix.begin());
    const auto gens = detail::gen_params(mix);
    detail::mixture_es(out, gens, problem.target(), config, rng);
  }
  return out;
}

/// Current mixture of every neighbourhood, in cell order.
inline std::vector<NeighborhoodMixture> neighborhood_mixtures(const Grid& grid) {
  std::vector<NeighborhoodMixture> out;
  out.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto nb = gather_neighborhood(grid, k);
    out.push_back({detail::gen_params(nb.union_gens()), nb.members[0].mixture_weights});
  }
  return out;
}

inline BestMixture select_best_mixture(const Grid& grid, const GeneratorParams& target,
                                       const MixtureMetric& metric) {
  const auto mixtures = neighborhood_mixtures(grid);
  return select_best_mixture(std::span<const NeighborhoodMixture>(mixtures), target, metric);
}

struct Synchronous {};
struct Asynchronous {
  /// Largest allowed counter difference between adjacent cells; nullopt
  /// means unbounded.
  std::optional<std::uint64_t> max_generation_skew;
};
using ExecutionMode = std::variant<Synchronous, Asynchronous>;

struct RunGridOptions {
  std::uint64_t total_generations = 0;
  ExecutionMode mode = Synchronous{};
  unsigned workers = 1;
  std::uint64_t master_seed = 0;
  /// Synchronous only: stop when the best neighbourhood g has not improved
  /// by more than early_stop_tolerance for this many generations. 0 disables.
  std::uint64_t early_stop_window = 0;
  double early_stop_tolerance = 0.0;
  /// Synchronous only: called after each completed generation.
  std::function<void(std::uint64_t generation, const Grid&)> on_generation;
  /// Called with a copy of all counters after every completed cell step.
  std::function<void(std::span<const std::uint64_t>)> on_counters;
};

struct RunGridStats {
  std::uint64_t cell_steps = 0;
  std::uint64_t max_adjacent_skew = 0;
  std::uint64_t generations_run = 0;
  bool stopped_early = false;
};

/// A cell step threw; the run was aborted.
class CellFailure : public std::runtime_error {
 public:
  CellFailure(std::size_t cell, const std::string& what)
      : std::runtime_error("cell " + std::to_string(cell) + " failed: " + what), cell_(cell) {}
  std::size_t cell() const { return cell_; }

 private:
  std::size_t cell_;
};

namespace detail {

// Seed of the step that moves cell k from counter c to c + 1.
inline Rng cell_rng(std::uint64_t master, std::size_t k, std::uint64_t counter,
                    std::uint64_t stream = 0) {
  return Rng(derive_seed(master, {static_cast<std::uint64_t>(k), counter, stream}));
}

inline std::uint64_t max_adjacent_skew(const Grid& grid, std::span<const std::uint64_t> counters) {
  std::uint64_t worst = 0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    for (std::size_t s = 1; s < kNeighborhoodSize; ++s) {
      const std::uint64_t a = counters[k], b = counters[grid.neighbors(k)[s]];
      worst = std::max(worst, a > b ? a - b : b - a);
    }
  return worst;
}

inline void run_parallel(std::size_t count, unsigned workers,
                         const std::function<void(std::size_t)>& body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  const unsigned w = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  for (unsigned t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          body(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline RunGridStats run_sync(Grid& grid, const TheoreticalGan& problem, const GridConfig& config,
                             const RunGridOptions& opt) {
  RunGridStats stats;
  double best_g = -std::numeric_limits<double>::infinity();
  std::uint64_t stale = 0;
  for (std::uint64_t t = 0; t < opt.total_generations; ++t) {
    const Grid before = grid;
    std::vector<Cell> next(grid.size());
    run_parallel(grid.size(), opt.workers, [&](std::size_t k) {
      Rng rng = cell_rng(opt.master_seed, k, before.generation_counter(k));
      try {
        next[k] = step_cell(before, k, problem, config, rng);
      } catch (const std::exception& e) {
        throw CellFailure(k, e.what());
      }
    });
    for (std::size_t k = 0; k < grid.size(); ++k) grid.store(k, std::move(next[k]));

    if (config.es_schedule == EsSchedule::PerGeneration) {
      const Grid evolved = grid;
      std::vector<Cell> updated(grid.size());
      run_parallel(grid.size(), opt.workers, [&](std::size_t k) {
        Rng rng = cell_rng(opt.master_seed, k, evolved.generation_counter(k), 1);
        updated[k] = es_update_cell(evolved, k, problem, config, rng);
      });
      for (std::size_t k = 0; k < grid.size(); ++k) grid.store(k, std::move(updated[k]));
    }

    stats.cell_steps += grid.size();
    stats.generations_run = t + 1;
    if (opt.on_counters) {
      std::vector<std::uint64_t> counters(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k) counters[k] = grid.generation_counter(k);
      opt.on_counters(counters);
    }
    if (opt.on_generation) opt.on_generation(t + 1, grid);

    if (opt.early_stop_window > 0) {
      const double g = select_best_mixture(grid, problem.target(), config.metric).g;
      if (g > best_g + opt.early_stop_tolerance) {
        best_g = g;
        stale = 0;
      } else if (++stale >= opt.early_stop_window) {
        stats.stopped_early = true;
        break;
      }
    }
  }
  return stats;
}

inline RunGridStats run_async(Grid& grid, const TheoreticalGan& problem, const GridConfig& config,
                              const RunGridOptions& opt, std::optional<std::uint64_t> skew) {
  const std::size_t cells = grid.size();
  std::vector<std::uint64_t> counters(cells);
  for (std::size_t k = 0; k < cells; ++k) counters[k] = grid.generation_counter(k);
  const std::uint64_t target = opt.total_generations + *std::min_element(counters.begin(), counters.end());
  std::vector<char> busy(cells, 0);
  std::mutex mu;
  std::condition_variable cv;
  std::optional<CellFailure> failure;
  RunGridStats stats;
  stats.max_adjacent_skew = max_adjacent_skew(grid, counters);

  auto ready = [&](std::size_t k) {
    if (busy[k] || counters[k] >= target) return false;
    if (!skew) return true;
    for (std::size_t s = 1; s < kNeighborhoodSize; ++s) {
      const std::uint64_t other = counters[grid.neighbors(k)[s]];
      if (counters[k] + 1 > other && counters[k] + 1 - other > *skew) return false;
    }
    return true;
  };
  auto finished = [&] {
    for (std::size_t k = 0; k < cells; ++k)
      if (counters[k] < target || busy[k]) return false;
    return true;
  };
  // Least-advanced ready cell, lowest index on ties.
  auto pick = [&]() -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < cells; ++k)
      if (ready(k) && (!best || counters[k] < counters[*best])) best = k;
    return best;
  };

  auto worker = [&] {
    std::unique_lock lock(mu);
    for (;;) {
      std::optional<std::size_t> k;
      cv.wait(lock, [&] { return failure || finished() || (k = pick()).has_value(); });
      if (failure || !k) return;
      busy[*k] = 1;
      const std::uint64_t c = counters[*k];
      lock.unlock();

      std::optional<Cell> result;
      std::optional<CellFailure> err;
      try {
        Rng rng = cell_rng(opt.master_seed, *k, c);
        result = step_cell(grid, *k, problem, config, rng);
        grid.store(*k, std::move(*result));
      } catch (const std::exception& e) {
        err.emplace(*k, e.what());
      }

      lock.lock();
      busy[*k] = 0;
      if (err) {
        if (!failure) failure = std::move(err);
      } else {
        ++counters[*k];
        ++stats.cell_steps;
        stats.max_adjacent_skew =
            std::max(stats.max_adjacent_skew, max_adjacent_skew(grid, counters));
        if (opt.on_counters) opt.on_counters(counters);
      }
      cv.notify_all();
    }
  };

  const unsigned w = std::max(1u, opt.workers);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < w; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) throw *failure;
  stats.generations_run = opt.total_generations;
  return stats;
}

}  // namespace detail

/// Runs every cell for `total_generations` steps. Synchronous mode is a
/// deterministic function of the grid, configuration and master seed.
/// Throws CellFailure naming the first failing cell.
inline RunGridStats run_grid(Grid& grid, const TheoreticalGan& problem, const GridConfig& config,
                             const RunGridOptions& options) {
  if (grid.size() == 0) throw ConfigError("run_grid: empty grid");
  if (const auto* a = std::get_if<Asynchronous>(&options.mode)) {
    if (a->max_generation_skew && *a->max_generation_skew == 0)
      throw ConfigError("run_grid: max_generation_skew must be >= 1");
    if (config.es_schedule == EsSchedule::PerGeneration)
      throw ConfigError("run_grid: per-generation ES needs synchronous execution");
    if (options.early_stop_window > 0)
      throw ConfigError("run_grid: early stop needs synchronous execution");
    return detail::run_async(grid, problem, config, options, a->max_generation_skew);
  }
  return detail::run_sync(grid, problem, config, options);
}

}  // namespace coevgan
