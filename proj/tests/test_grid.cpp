#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "coevgan/checkpoint.hpp"
#include "coevgan/grid.hpp"

using namespace coevgan;

namespace {

const GeneratorParams kTarget{-3.0, 3.0};

Grid make_grid(std::size_t m, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return build_grid(m, n, CellInitializer{}, rng);
}

GridConfig fast_config() {
  GridConfig c;
  c.metric = NegL2DensityDistance{-15, 15, 0.1};
  return c;
}

std::set<std::size_t> neighbourhood_set(const Grid& g, std::size_t k) {
  const auto nb = g.neighbors(k);
  return {nb.begin(), nb.end()};
}

std::set<std::size_t> overlap(const Grid& g, std::size_t a, std::size_t b) {
  const auto x = neighbourhood_set(g, a), y = neighbourhood_set(g, b);
  std::set<std::size_t> out;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::inserter(out, out.end()));
  return out;
}

}  // namespace

TEST_CASE("toroidal neighbourhoods", "[grid]") {
  const auto g = make_grid(4, 1, 1);
  CHECK(g.neighbors(0) == std::array<std::size_t, 5>{0, 12, 4, 3, 1});
  CHECK(g.neighbors(g.index(2, 3)) == std::array<std::size_t, 5>{11, 7, 15, 10, 8});
  // Every cell belongs to exactly five neighbourhoods.
  for (std::size_t m : {3u, 4u, 5u}) {
    const auto gm = make_grid(m, 1, 2);
    std::vector<int> seen(gm.size(), 0);
    for (std::size_t k = 0; k < gm.size(); ++k)
      for (std::size_t c : gm.neighbors(k)) ++seen[c];
    for (int s : seen) CHECK(s == 5);
  }
  CHECK_THROWS_AS(g.neighbors(16), ConfigError);
}

TEST_CASE("adjacent neighbourhoods overlap in their two centres from m = 4", "[grid]") {
  for (std::size_t m : {4u, 5u, 6u}) {
    const auto g = make_grid(m, 1, 3);
    for (std::size_t k = 0; k < g.size(); ++k)
      for (std::size_t s = 1; s < kNeighborhoodSize; ++s) {
        const std::size_t other = g.neighbors(k)[s];
        CHECK(overlap(g, k, other) == std::set<std::size_t>{k, other});
      }
  }
}

TEST_CASE("on a 3 x 3 torus adjacent neighbourhoods share a third cell", "[grid]") {
  const auto g = make_grid(3, 1, 4);
  // N(0,0) and N(0,1) both contain (0,2) through the wrap-around.
  CHECK(overlap(g, g.index(0, 0), g.index(0, 1)) ==
        std::set<std::size_t>{g.index(0, 0), g.index(0, 1), g.index(0, 2)});
}

TEST_CASE("grid construction", "[grid]") {
  const auto g = make_grid(3, 2, 5);
  CHECK(g.size() == 9);
  CHECK(g.per_cell_size() == 2);
  CHECK(g.neighborhood_population() == 10);
  const auto c = g.snapshot(4);
  CHECK(c.mixture_weights == MixtureWeights::uniform(10));
  CHECK(c.generation_counter == 0);
  for (const auto& d : c.center_discs) CHECK(d.params.ordered());
  for (const auto& u : c.center_gens) {
    CHECK(std::fabs(u.params.mu1) <= 10.0);
    CHECK(std::fabs(u.params.mu2) <= 10.0);
  }
  auto cells = g.all_cells();
  cells.pop_back();
  CHECK_THROWS_AS(Grid(3, cells), ConfigError);
  cells = g.all_cells();
  cells[2].mixture_weights = MixtureWeights::uniform(5);
  CHECK_THROWS_AS(Grid(3, cells), ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(build_grid(0, 1, {}, rng), ConfigError);
}

TEST_CASE("copies are independent snapshots", "[grid]") {
  auto g = make_grid(2, 1, 6);
  const Grid copy = g;
  auto c = g.snapshot(1);
  c.generation_counter = 42;
  g.store(1, c);
  CHECK(g.generation_counter(1) == 42);
  CHECK(copy.generation_counter(1) == 0);
  CHECK_FALSE(g == copy);
}

TEST_CASE("cell step keeps the top individuals of the neighbourhood", "[grid]") {
  const auto g = make_grid(4, 2, 7);
  const TheoreticalGan gan(kTarget);
  auto cfg = fast_config();
  cfg.coev.generations = 0;  // evaluation and truncation only
  Rng rng(8);
  const std::size_t k = 5;
  const Grid before = g;
  const Cell out = step_cell(g, k, gan, cfg, rng);
  CHECK(g == before);
  CHECK(out.generation_counter == 1);

  // Brute force: total loss of each union generator against every union
  // discriminator; the two smallest totals win.
  const auto nb = gather_neighborhood(g, k);
  const auto gens = nb.union_gens();
  const auto discs = nb.union_discs();
  std::vector<std::pair<double, std::size_t>> gen_total, disc_total;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    double s = 0.0;
    for (const auto& d : discs) s += loss(gens[i].params, d.params, kTarget);
    gen_total.push_back({s, i});
  }
  for (std::size_t j = 0; j < discs.size(); ++j) {
    double s = 0.0;
    for (const auto& u : gens) s += loss(u.params, discs[j].params, kTarget);
    disc_total.push_back({-s, j});
  }
  std::sort(gen_total.begin(), gen_total.end());
  std::sort(disc_total.begin(), disc_total.end());
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(out.center_gens[r].params == gens[gen_total[r].second].params);
    CHECK(out.center_discs[r].params == discs[disc_total[r].second].params);
  }
}

TEST_CASE("weighted cell step runs", "[grid]") {
  const auto g = make_grid(4, 1, 9);
  const TheoreticalGan gan(kTarget);
  auto cfg = fast_config();
  cfg.coev.fitness_weighting = FitnessWeighting::Weighted;
  Rng rng(10);
  const Cell out = step_cell(g, 0, gan, cfg, rng);
  CHECK(out.center_gens.size() == 1);
  CHECK(out.mixture_weights.size() == 5);
}

TEST_CASE("synchronous runs are deterministic and worker-independent", "[grid]") {
  const TheoreticalGan gan(kTarget);
  const auto cfg = fast_config();
  auto run = [&](unsigned workers, std::uint64_t seed) {
    Grid g = make_grid(3, 1, 11);
    RunGridOptions opt;
    opt.total_generations = 6;
    opt.workers = workers;
    opt.master_seed = seed;
    const auto stats = run_grid(g, gan, cfg, opt);
    CHECK(stats.cell_steps == 54);
    CHECK(stats.max_adjacent_skew == 0);
    return checkpoint_string(g);
  };
  const auto one = run(1, 3);
  CHECK(run(1, 3) == one);
  CHECK(run(4, 3) == one);
  CHECK(run(9, 3) == one);
  CHECK_FALSE(run(1, 4) == one);
}

TEST_CASE("asynchronous runs respect the skew bound", "[grid]") {
  const TheoreticalGan gan(kTarget);
  const auto cfg = fast_config();
  for (std::uint64_t skew : {1u, 2u, 3u}) {
    Grid g = make_grid(3, 1, 12);
    RunGridOptions opt;
    opt.total_generations = 12;
    opt.workers = 4;
    opt.mode = Asynchronous{skew};
    std::uint64_t worst = 0, samples = 0;
    opt.on_counters = [&](std::span<const std::uint64_t> c) {
      worst = std::max(worst, detail::max_adjacent_skew(g, c));
      ++samples;
    };
    const auto stats = run_grid(g, gan, cfg, opt);
    INFO("skew " << skew);
    CHECK(samples == 9 * 12);
    CHECK(worst <= skew);
    CHECK(stats.max_adjacent_skew <= skew);
    CHECK(stats.cell_steps == 9 * 12);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(g.generation_counter(k) == 12);
  }
}

TEST_CASE("unbounded asynchronous run completes", "[grid]") {
  const TheoreticalGan gan(kTarget);
  Grid g = make_grid(2, 1, 13);
  RunGridOptions opt;
  opt.total_generations = 8;
  opt.workers = 3;
  opt.mode = Asynchronous{};
  run_grid(g, gan, fast_config(), opt);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(g.generation_counter(k) == 8);
}

TEST_CASE("single-worker asynchronous runs are reproducible", "[grid]") {
  const TheoreticalGan gan(kTarget);
  auto run = [&] {
    Grid g = make_grid(3, 1, 14);
    RunGridOptions opt;
    opt.total_generations = 5;
    opt.mode = Asynchronous{1};
    run_grid(g, gan, fast_config(), opt);
    return checkpoint_string(g);
  };
  CHECK(run() == run());
}

TEST_CASE("a failing cell aborts the run with its index", "[grid]") {
  const TheoreticalGan gan(kTarget);
  auto cfg = fast_config();
  std::atomic<int> calls{0};
  cfg.metric = CustomMetric([&](std::span<const GeneratorParams>, const MixtureWeights&,
                                const GeneratorParams&) -> double {
    ++calls;
    throw std::runtime_error("metric exploded");
  });
  for (bool async : {false, true}) {
    Grid g = make_grid(3, 1, 15);
    RunGridOptions opt;
    opt.total_generations = 3;
    opt.workers = 4;
    if (async) opt.mode = Asynchronous{1};
    try {
      run_grid(g, gan, cfg, opt);
      FAIL("expected CellFailure");
    } catch (const CellFailure& e) {
      CHECK(e.cell() < 9);
      CHECK(std::string(e.what()).find("metric exploded") != std::string::npos);
      if (!async) CHECK(e.cell() == 0);
    }
  }
  CHECK(calls > 0);
}

TEST_CASE("run_grid rejects invalid option combinations", "[grid]") {
  const TheoreticalGan gan(kTarget);
  Grid g = make_grid(2, 1, 16);
  RunGridOptions opt;
  opt.total_generations = 1;
  opt.mode = Asynchronous{0};
  CHECK_THROWS_AS(run_grid(g, gan, fast_config(), opt), ConfigError);
  opt.mode = Asynchronous{1};
  auto per_gen = fast_config();
  per_gen.es_schedule = EsSchedule::PerGeneration;
  CHECK_THROWS_AS(run_grid(g, gan, per_gen, opt), ConfigError);
  opt.early_stop_window = 2;
  CHECK_THROWS_AS(run_grid(g, gan, fast_config(), opt), ConfigError);
}

TEST_CASE("early stop ends a stalled synchronous run", "[grid]") {
  const TheoreticalGan gan(kTarget);
  Grid g = make_grid(2, 1, 17);
  RunGridOptions opt;
  opt.total_generations = 20;
  opt.early_stop_window = 2;
  opt.early_stop_tolerance = 1e9;  // nothing counts as an improvement
  std::uint64_t last = 0;
  opt.on_generation = [&](std::uint64_t t, const Grid&) { last = t; };
  const auto stats = run_grid(g, gan, fast_config(), opt);
  CHECK(stats.stopped_early);
  CHECK(stats.generations_run == 3);
  CHECK(last == 3);
}

TEST_CASE("per-generation ES schedule", "[grid]") {
  const TheoreticalGan gan(kTarget);
  auto cfg = fast_config();
  cfg.es_schedule = EsSchedule::PerGeneration;
  auto run = [&](unsigned workers) {
    Grid g = make_grid(3, 1, 18);
    RunGridOptions opt;
    opt.total_generations = 4;
    opt.workers = workers;
    run_grid(g, gan, cfg, opt);
    return g;
  };
  const Grid a = run(1);
  CHECK(checkpoint_string(a) == checkpoint_string(run(3)));
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a.generation_counter(k) == 4);
}

TEST_CASE("best grid mixture is the argmax over neighbourhoods", "[grid]") {
  const TheoreticalGan gan(kTarget);
  const auto cfg = fast_config();
  Grid g = make_grid(3, 1, 19);
  RunGridOptions opt;
  opt.total_generations = 3;
  run_grid(g, gan, cfg, opt);
  const auto mixtures = neighborhood_mixtures(g);
  REQUIRE(mixtures.size() == 9);
  std::size_t arg = 0;
  double best = -1e300;
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(mixtures[k].gens.size() == 5);
    const double v = metric_g(mixtures[k].gens, mixtures[k].weights, kTarget, cfg.metric);
    if (v > best) best = v, arg = k;
  }
  const auto sel = select_best_mixture(g, kTarget, cfg.metric);
  CHECK(sel.index == arg);
  CHECK(sel.g == best);
}

TEST_CASE("checkpoint round trip", "[checkpoint]") {
  const TheoreticalGan gan(kTarget);
  Grid g = make_grid(3, 2, 20);
  RunGridOptions opt;
  opt.total_generations = 2;
  run_grid(g, gan, fast_config(), opt);
  const auto text = checkpoint_string(g);
  std::istringstream is(text);
  const Grid back = read_checkpoint(is);
  CHECK(checkpoint_string(back) == text);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto a = g.snapshot(k), b = back.snapshot(k);
    CHECK(a.generation_counter == b.generation_counter);
    CHECK(a.mixture_weights == b.mixture_weights);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(a.center_gens[i].params == b.center_gens[i].params);
      CHECK(a.center_discs[i].params == b.center_discs[i].params);
      CHECK(a.center_gens[i].learning_rate == b.center_gens[i].learning_rate);
    }
  }
  CHECK(text.rfind("coevgan-grid 1\nm 3\nper_cell 2\ncell 0 generation 2 es_sigma 0.01\n", 0) == 0);
}

TEST_CASE("format_double is shortest round-trip", "[checkpoint]") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-3.0) == "-3");
  for (double x : {1.0 / 3.0, 1e-300, -2.5e17, 0.30000000000000004})
    CHECK(parse_double(format_double(x)) == x);
  CHECK_THROWS_AS(parse_double("1.5x"), ConfigError);
}

TEST_CASE("malformed checkpoints name the failing line", "[checkpoint]") {
  const auto good = checkpoint_string(make_grid(2, 1, 21));
  auto expect_error = [](const std::string& text, const std::string& fragment) {
    std::istringstream is(text);
    try {
      read_checkpoint(is);
      FAIL("accepted malformed checkpoint");
    } catch (const ConfigError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  auto replace_line = [&](int line, const std::string& with) {
    std::istringstream is(good);
    std::ostringstream os;
    int n = 0;
    for (std::string l; std::getline(is, l);) os << (++n == line ? with : l) << '\n';
    return os.str();
  };
  expect_error(replace_line(1, "coevgan-grid 2"), "line 1: unsupported version");
  expect_error(replace_line(2, "m zero"), "line 2: bad integer");
  expect_error(replace_line(5, "gen 1 nope 0.001"), "line 5");
  expect_error(replace_line(6, "disc 3 2 1 0 0.001"), "line 6");
  expect_error(replace_line(7, "weights 0.5 0.5 0.5 0.5 0.5"), "line 7");
  expect_error(replace_line(8, "cell 2 generation 0 es_sigma 0.01"), "line 8: cells out of order");
  expect_error(good.substr(0, good.size() - 4), "unexpected end of input");
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run", "[checkpoint]") {
  const TheoreticalGan gan(kTarget);
  const auto cfg = fast_config();
  RunGridOptions opt;
  opt.master_seed = 99;
  opt.workers = 2;

  Grid straight = make_grid(3, 1, 22);
  opt.total_generations = 10;
  run_grid(straight, gan, cfg, opt);

  Grid first = make_grid(3, 1, 22);
  opt.total_generations = 5;
  run_grid(first, gan, cfg, opt);
  std::istringstream is(checkpoint_string(first));
  Grid resumed = read_checkpoint(is);
  run_grid(resumed, gan, cfg, opt);

  CHECK(checkpoint_string(resumed) == checkpoint_string(straight));
}
