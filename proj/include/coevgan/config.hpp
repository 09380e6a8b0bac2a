#pragma once

// Flat `key = value` experiment configuration. Every key has a default; files
// and command-line flags go through the same setters.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "coevgan/checkpoint.hpp"
#include "coevgan/coevo.hpp"
#include "coevgan/errors.hpp"
#include "coevgan/grid.hpp"
#include "coevgan/problem.hpp"

namespace coevgan {

enum class Experiment { Converge, ModeCollapseHeatmap, DiscCollapseHeatmap, GridRun, Baseline };

struct ExperimentConfig {
  Experiment experiment = Experiment::Converge;

  // Replication and the basic loop.
  int runs = 120;
  int generations = 100;
  int pop_size = 10;
  double mutation_step = 1.0;
  MutationKind mutation_kind = MutationKind::Gaussian;
  GradientOpponents gradient_opponents = GradientOpponents::SingleRandom;
  ReplacementKind replacement = ReplacementKind::SlotWise;
  double selection_prob = 1.0;
  double mutation_prob = 1.0;
  double learning_rate = 1e-3;
  double lr_mutation_sigma = 1e-7;
  double lr_floor = 1e-12;
  FitnessWeighting fitness_weighting = FitnessWeighting::Uniform;
  bool monte_carlo = false;
  std::uint64_t mc_samples = 10000;

  // Problem.
  double target_mu1 = -3.0;
  double target_mu2 = 3.0;
  double gen_init_lo = -10.0;
  double gen_init_hi = 10.0;
  double disc_init_lo = -10.0;
  double disc_init_hi = 10.0;
  double success_threshold = 0.1;

  // Baseline gradient dynamics.
  double baseline_lr_gen = 0.1;
  double baseline_lr_disc = 0.1;
  int baseline_steps_per_generation = 1;
  UpdateOrder baseline_order = UpdateOrder::Simultaneous;
  BoundHandling baseline_bounds = BoundHandling::Project;

  // Mode-collapse heatmap.
  double heatmap_lo = -10.0;
  double heatmap_hi = 10.0;
  double heatmap_step = 2.0;
  int heatmap_runs = 20;
  int heatmap_generations = 50;
  int image_scale = 10;
  bool svg = false;

  // Discriminator-collapse experiment.
  double disc_gen_mu1 = -1.0;
  double disc_gen_mu2 = 2.5;
  int disc_runs = 50;
  double disc_margin = 0.1;
  int disc_attempts = 10000;
  bool disc_trace = false;

  // Grid.
  int grid_m = 2;
  int per_cell_size = 1;
  int grid_inner_generations = 1;
  bool asynchronous = false;
  std::uint64_t max_generation_skew = 0;  // 0 = unbounded
  double es_sigma = 0.01;
  bool es_adapt = false;
  EsSchedule es_schedule = EsSchedule::PerCellStep;
  std::uint64_t early_stop_window = 0;
  double early_stop_tolerance = 0.0;
  double metric_grid_lo = -15.0;
  double metric_grid_hi = 15.0;
  double metric_grid_step = 0.01;

  std::uint64_t master_seed = 0;
  int workers = 1;

  GeneratorParams target() const { return {target_mu1, target_mu2}; }
  GeneratorParams disc_gen_fixed() const { return {disc_gen_mu1, disc_gen_mu2}; }
  EvaluationMode evaluation() const {
    if (monte_carlo) return MonteCarlo{mc_samples, derive_seed(master_seed, {0x4d43})};
    return ClosedForm{};
  }
  TheoreticalGan problem() const { return TheoreticalGan(target(), evaluation()); }

  CoevConfig coev_config(int gens, std::size_t population) const {
    CoevConfig c;
    c.generations = gens;
    c.selection_probs.assign(population, selection_prob);
    c.mutation_probs.assign(population, mutation_prob);
    c.mutation_step = mutation_step;
    c.lr_mutation_sigma = lr_mutation_sigma;
    c.mutation_kind = mutation_kind;
    c.fitness_weighting = fitness_weighting;
    c.gradient_opponents = gradient_opponents;
    c.replacement = replacement;
    c.lr_floor = lr_floor;
    return c;
  }

  GridConfig grid_config() const {
    GridConfig g;
    g.coev = coev_config(grid_inner_generations,
                         kNeighborhoodSize * static_cast<std::size_t>(per_cell_size));
    g.metric = NegL2DensityDistance{metric_grid_lo, metric_grid_hi, metric_grid_step};
    g.adapt_es_sigma = es_adapt;
    g.es_schedule = es_schedule;
    return g;
  }

  GradientStepOptions baseline_options() const { return {baseline_order, baseline_bounds}; }

  /// Switches the sweep settings to the full published protocol.
  void apply_paper_scale() {
    runs = 120;
    generations = 100;
    pop_size = 10;
    heatmap_step = 0.1;
    heatmap_runs = 120;
    heatmap_generations = 100;
    image_scale = 1;
  }

  void validate() const;
};

namespace detail {

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value,
                                   std::string_view expected) {
  throw ConfigError(std::string(key) + ": invalid value '" + std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(std::string_view key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const ConfigError&) {
    bad_value(key, v, "a number");
  }
}

inline std::int64_t parse_int(std::string_view key, const std::string& v) {
  std::int64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return x;
}

inline bool parse_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

namespace detail {

template <class T>
ConfigKey real_key(std::string name, std::string help, T ExperimentConfig::*field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            c.*field = parse_real(name, v);
          },
          [field](const ExperimentConfig& c) { return format_double(c.*field); }};
}

template <class T>
ConfigKey int_key(std::string name, std::string help, T ExperimentConfig::*field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            if constexpr (std::is_unsigned_v<T>) {
              if (!v.empty() && v[0] == '-') bad_value(name, v, "a non-negative integer");
              T x = 0;
              const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
              if (res.ec != std::errc() || res.ptr != v.data() + v.size())
                bad_value(name, v, "a non-negative integer");
              c.*field = x;
            } else {
              const auto x = parse_int(name, v);
              if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
                bad_value(name, v, "an integer in range");
              c.*field = static_cast<T>(x);
            }
          },
          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

inline ConfigKey bool_key(std::string name, std::string help, bool ExperimentConfig::*field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            c.*field = parse_bool(name, v);
          },
          [field](const ExperimentConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

template <class E>
ConfigKey enum_key(std::string name, std::string help, E ExperimentConfig::*field,
                   std::initializer_list<std::pair<const char*, E>> names) {
  std::vector<std::pair<const char*, E>> table(names);
  return {name, std::move(help),
          [name, field, table](ExperimentConfig& c, const std::string& v) {
            std::string expected;
            for (const auto& [n, value] : table) {
              if (v == n) {
                c.*field = value;
                return;
              }
              expected += expected.empty() ? n : std::string(" | ") + n;
            }
            bad_value(name, v, expected);
          },
          [field, table](const ExperimentConfig& c) {
            for (const auto& [n, value] : table)
              if (value == c.*field) return std::string(n);
            return std::string("?");
          }};
}

}  // namespace detail

/// Every recognised key, in documentation order.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  using C = ExperimentConfig;
  static const std::vector<ConfigKey> keys = {
      enum_key("experiment", "which experiment to run", &C::experiment,
               {{"converge", Experiment::Converge},
                {"mode-collapse", Experiment::ModeCollapseHeatmap},
                {"disc-collapse", Experiment::DiscCollapseHeatmap},
                {"grid-run", Experiment::GridRun},
                {"baseline", Experiment::Baseline}}),
      int_key("runs", "independent runs for converge and baseline", &C::runs),
      int_key("generations", "generations per run", &C::generations),
      int_key("pop_size", "population size T", &C::pop_size),
      real_key("mutation_step", "Gaussian mutation sigma for parameters", &C::mutation_step),
      enum_key("mutation_kind", "parameter mutation operator", &C::mutation_kind,
               {{"gaussian", MutationKind::Gaussian}, {"gradient", MutationKind::GradientStep}}),
      enum_key("gradient_opponents", "opponents used by gradient mutation",
               &C::gradient_opponents,
               {{"single", GradientOpponents::SingleRandom}, {"all", GradientOpponents::All}}),
      enum_key("replacement", "survivor rule after mutation", &C::replacement,
               {{"slotwise", ReplacementKind::SlotWise},
                {"truncation", ReplacementKind::Truncation}}),
      real_key("selection_prob", "rank-keep probability for every slot", &C::selection_prob),
      real_key("mutation_prob", "mutation probability for every slot", &C::mutation_prob),
      real_key("learning_rate", "initial per-individual learning rate", &C::learning_rate),
      real_key("lr_mutation_sigma", "Gaussian sigma for learning-rate mutation",
               &C::lr_mutation_sigma),
      real_key("lr_floor", "lower clamp for learning rates", &C::lr_floor),
      enum_key("fitness_weighting", "fitness aggregation", &C::fitness_weighting,
               {{"uniform", FitnessWeighting::Uniform}, {"weighted", FitnessWeighting::Weighted}}),
      bool_key("monte_carlo", "estimate the loss by sampling", &C::monte_carlo),
      int_key("mc_samples", "samples per Monte Carlo loss", &C::mc_samples),
      real_key("target_mu1", "first mean of the real distribution", &C::target_mu1),
      real_key("target_mu2", "second mean of the real distribution", &C::target_mu2),
      real_key("gen_init_lo", "generator init lower bound", &C::gen_init_lo),
      real_key("gen_init_hi", "generator init upper bound", &C::gen_init_hi),
      real_key("disc_init_lo", "discriminator init lower bound", &C::disc_init_lo),
      real_key("disc_init_hi", "discriminator init upper bound", &C::disc_init_hi),
      real_key("success_threshold", "distance below which a run succeeds",
               &C::success_threshold),
      real_key("baseline_lr_gen", "baseline generator step size", &C::baseline_lr_gen),
      real_key("baseline_lr_disc", "baseline discriminator step size", &C::baseline_lr_disc),
      int_key("baseline_steps_per_generation", "baseline gradient steps between records",
              &C::baseline_steps_per_generation),
      enum_key("baseline_order", "baseline update order", &C::baseline_order,
               {{"simultaneous", UpdateOrder::Simultaneous},
                {"alternating", UpdateOrder::Alternating}}),
      enum_key("baseline_bounds", "baseline bound ordering rule", &C::baseline_bounds,
               {{"project", BoundHandling::Project}, {"sort", BoundHandling::Sort}}),
      real_key("heatmap_lo", "first heatmap bin centre", &C::heatmap_lo),
      real_key("heatmap_hi", "last heatmap bin centre", &C::heatmap_hi),
      real_key("heatmap_step", "heatmap bin width", &C::heatmap_step),
      int_key("heatmap_runs", "runs per heatmap bin", &C::heatmap_runs),
      int_key("heatmap_generations", "generations per heatmap run", &C::heatmap_generations),
      int_key("image_scale", "pixels per heatmap bin", &C::image_scale),
      bool_key("svg", "also write SVG images", &C::svg),
      real_key("disc_gen_mu1", "frozen generator first mean", &C::disc_gen_mu1),
      real_key("disc_gen_mu2", "frozen generator second mean", &C::disc_gen_mu2),
      int_key("disc_runs", "runs per quadrant", &C::disc_runs),
      real_key("disc_margin", "required fitness gain for success", &C::disc_margin),
      int_key("disc_attempts", "rejection sampler attempt cap", &C::disc_attempts),
      bool_key("disc_trace", "write per-generation bound traces", &C::disc_trace),
      int_key("grid_m", "grid side length", &C::grid_m),
      int_key("per_cell_size", "individuals per cell and population", &C::per_cell_size),
      int_key("grid_inner_generations", "basic iterations per cell step",
              &C::grid_inner_generations),
      bool_key("asynchronous", "run cells without a global barrier", &C::asynchronous),
      int_key("max_generation_skew", "async adjacent counter bound, 0 for none",
              &C::max_generation_skew),
      real_key("es_sigma", "mixture weight mutation sigma", &C::es_sigma),
      bool_key("es_adapt", "adapt es_sigma with the 1/5th success rule", &C::es_adapt),
      enum_key("es_schedule", "when mixture weights evolve", &C::es_schedule,
               {{"per-cell-step", EsSchedule::PerCellStep},
                {"per-generation", EsSchedule::PerGeneration}}),
      int_key("early_stop_window", "stagnation window, 0 disables", &C::early_stop_window),
      real_key("early_stop_tolerance", "minimum g improvement", &C::early_stop_tolerance),
      real_key("metric_grid_lo", "quadrature lower limit", &C::metric_grid_lo),
      real_key("metric_grid_hi", "quadrature upper limit", &C::metric_grid_hi),
      real_key("metric_grid_step", "quadrature step", &C::metric_grid_step),
      int_key("master_seed", "seed for every random stream", &C::master_seed),
      int_key("workers", "worker threads", &C::workers),
  };
  return keys;
}

inline const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline void set_config_value(ExperimentConfig& c, std::string_view key, const std::string& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + std::string(key) + "'");
  k->set(c, value);
}

inline void ExperimentConfig::validate() const {
  auto positive = [](bool ok, const char* key, const std::string& why) {
    if (!ok) throw ConfigError(std::string(key) + ": " + why);
  };
  positive(runs > 0, "runs", "must be > 0");
  positive(generations >= 0, "generations", "must be >= 0");
  positive(pop_size > 0, "pop_size", "must be > 0");
  positive(mutation_step > 0.0, "mutation_step", "must be > 0");
  positive(selection_prob >= 0.0 && selection_prob <= 1.0, "selection_prob", "must lie in [0,1]");
  positive(mutation_prob >= 0.0 && mutation_prob <= 1.0, "mutation_prob", "must lie in [0,1]");
  positive(learning_rate > 0.0, "learning_rate", "must be > 0");
  positive(lr_mutation_sigma >= 0.0, "lr_mutation_sigma", "must be >= 0");
  positive(lr_floor > 0.0, "lr_floor", "must be > 0");
  positive(mc_samples > 0, "mc_samples", "must be > 0");
  positive(std::isfinite(target_mu1), "target_mu1", "must be finite");
  positive(std::isfinite(target_mu2), "target_mu2", "must be finite");
  positive(gen_init_lo <= gen_init_hi, "gen_init_lo", "must be <= gen_init_hi");
  positive(disc_init_lo <= disc_init_hi, "disc_init_lo", "must be <= disc_init_hi");
  positive(success_threshold > 0.0, "success_threshold", "must be > 0");
  positive(baseline_lr_gen >= 0.0, "baseline_lr_gen", "must be >= 0");
  positive(baseline_lr_disc >= 0.0, "baseline_lr_disc", "must be >= 0");
  positive(baseline_steps_per_generation > 0, "baseline_steps_per_generation", "must be > 0");
  positive(heatmap_lo <= heatmap_hi, "heatmap_lo", "must be <= heatmap_hi");
  positive(heatmap_step > 0.0, "heatmap_step", "must be > 0");
  positive(heatmap_runs > 0, "heatmap_runs", "must be > 0");
  positive(heatmap_generations >= 0, "heatmap_generations", "must be >= 0");
  positive(image_scale > 0, "image_scale", "must be > 0");
  positive(disc_runs > 0, "disc_runs", "must be > 0");
  positive(disc_margin >= 0.0, "disc_margin", "must be >= 0");
  positive(disc_attempts > 0, "disc_attempts", "must be > 0");
  positive(grid_m > 0, "grid_m", "must be > 0");
  positive(per_cell_size > 0, "per_cell_size", "must be > 0");
  positive(grid_inner_generations >= 0, "grid_inner_generations", "must be >= 0");
  positive(es_sigma >= 0.0, "es_sigma", "must be >= 0");
  positive(metric_grid_lo < metric_grid_hi, "metric_grid_lo", "must be < metric_grid_hi");
  positive(metric_grid_step > 0.0, "metric_grid_step", "must be > 0");
  positive(workers > 0, "workers", "must be > 0");
  positive(!(replacement == ReplacementKind::Truncation &&
             fitness_weighting == FitnessWeighting::Weighted),
           "replacement", "truncation cannot be combined with weighted fitness");
  if (asynchronous) {
    positive(es_schedule == EsSchedule::PerCellStep, "es_schedule",
             "per-generation needs synchronous execution");
    positive(early_stop_window == 0, "early_stop_window", "early stop needs synchronous execution");
  }
}

/// Applies `key = value` lines. Blank lines and lines starting with '#' are
/// ignored. Errors carry the 1-based line number.
inline void apply_config_stream(ExperimentConfig& c, std::istream& is,
                                const std::string& source = "config") {
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

inline ExperimentConfig parse_config(std::istream& is, const std::string& source = "config") {
  ExperimentConfig c;
  apply_config_stream(c, is, source);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  return parse_config(f, path);
}

/// The effective configuration in file syntax, one key per line.
inline std::string dump_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(c) + "\n";
  return out;
}

}  // namespace coevgan
