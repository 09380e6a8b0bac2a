#include <sstream>

#include "catch_amalgamated.hpp"
#include "coevgan/experiments.hpp"
#include "coevgan/report.hpp"

using namespace coevgan;

namespace {

ExperimentConfig small() {
  ExperimentConfig c;
  c.runs = 4;
  c.generations = 5;
  c.pop_size = 4;
  c.heatmap_step = 5.0;
  c.heatmap_runs = 2;
  c.heatmap_generations = 3;
  c.disc_runs = 3;
  c.grid_m = 3;
  c.metric_grid_step = 0.1;
  return c;
}

std::string lines(const std::string& s, int n) {
  std::istringstream is(s);
  std::string out, l;
  for (int i = 0; i < n && std::getline(is, l); ++i) out += l + "\n";
  return out;
}

}  // namespace

TEST_CASE("converge traces have one record per generation and run", "[experiments]") {
  auto c = small();
  const auto res = run_converge(c);
  CHECK(res.coev.size() == 4 * 6);
  CHECK(res.baseline.size() == 4 * 6);
  CHECK(res.coev_summary.size() == 4);
  CHECK(res.coev.front().generation == 0);
  CHECK(res.coev.back().generation == 5);
  // The baseline starts at the best initial pair of coevolution.
  for (int r = 0; r < 4; ++r) {
    CHECK(res.baseline[r * 6].gen == res.coev[r * 6].gen);
    CHECK(res.baseline[r * 6].disc == res.coev[r * 6].disc);
  }
  for (const auto& s : res.coev_summary)
    CHECK(s.distance == generator_distance(s.final_gen, c.target()));
}

TEST_CASE("zero generations gives only the initial record", "[experiments]") {
  auto c = small();
  c.generations = 0;
  const auto res = run_converge(c);
  CHECK(res.coev.size() == 4);
  CHECK(res.baseline.size() == 4);
}

TEST_CASE("results do not depend on the worker count", "[experiments]") {
  auto c = small();
  auto text = [](const ExperimentConfig& cfg) {
    std::ostringstream os;
    const auto conv = run_converge(cfg);
    write_trace_csv(os, conv.coev);
    write_trace_csv(os, conv.baseline);
    const auto mc = run_mode_collapse(cfg);
    write_heatmap_csv(os, mc.coev, mc.baseline, "mu1", "mu2");
    const auto dc = run_disc_collapse(cfg);
    write_heatmap_csv(os, dc.coev, dc.baseline, "r", "l");
    return os.str();
  };
  const auto one = text(c);
  c.workers = 4;
  CHECK(text(c) == one);
  c.master_seed = 1;
  CHECK_FALSE(text(c) == one);
}

TEST_CASE("mode-collapse bins", "[experiments]") {
  CHECK(bin_centers(-10, 10, 5) == std::vector<double>{-10, -5, 0, 5, 10});
  CHECK(bin_centers(-10, 10, 0.1).size() == 201);
  const auto res = run_mode_collapse(small());
  CHECK(res.coev.rows() == 5);
  CHECK(res.coev.runs_per_cell == 2);
  for (int s : res.coev.successes) CHECK((s >= 0 && s <= 2));
}

TEST_CASE("disc-collapse quadrant layout", "[experiments]") {
  CHECK(quadrant_at(1, 0).name() == "(-,-)");
  CHECK(quadrant_at(0, 1).name() == "(+,+)");
  CHECK(quadrant_at(0, 0).name() == "(-,+)");
  auto c = small();
  c.disc_trace = true;
  c.generations = 4;
  const auto res = run_disc_collapse(c);
  // Two dynamics, five records each, four quadrants.
  CHECK(res.trace.size() == 4 * 2 * 5);
  for (const auto& r : res.trace) CHECK(r.fitness == disc_fitness(c, r.disc));
}

TEST_CASE("infeasible quadrants are reported as not applicable", "[experiments]") {
  auto c = small();
  // A frozen generator equal to the target has zero contribution everywhere.
  c.disc_gen_mu1 = -3.0;
  c.disc_gen_mu2 = 3.0;
  c.disc_attempts = 50;
  const auto res = run_disc_collapse(c);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK_FALSE(res.coev.is_applicable(i, j));
  std::ostringstream os;
  write_heatmap_csv(os, res.coev, res.baseline, "right_sign", "left_sign");
  CHECK(lines(os.str(), 2) ==
        "dynamics,right_sign,left_sign,successes,runs,success_rate\n"
        "coevolution,1,-1,na,3,na\n");
  std::ostringstream pgm;
  write_pgm(pgm, res.coev, 1);
  CHECK(pgm.str() == "P2\n2 2\n255\n0 0\n0 0\n");
}

TEST_CASE("grid experiment report marks the argmax", "[experiments]") {
  auto c = small();
  c.generations = 2;
  const auto res = run_grid_experiment(c);
  REQUIRE(res.g.size() == 9);
  const auto it = std::max_element(res.g.begin(), res.g.end());
  CHECK(res.best.index == static_cast<std::size_t>(it - res.g.begin()));
  CHECK(res.best.g == *it);
  std::ostringstream os;
  write_grid_report_csv(os, res);
  int selected = 0;
  std::istringstream is(os.str());
  std::string l;
  std::getline(is, l);
  CHECK(l == "k,generation_counter,g,selected");
  while (std::getline(is, l)) selected += l.back() == '1' ? 1 : 0;
  CHECK(selected == 1);
  std::ostringstream mix;
  write_grid_mixture_csv(mix, res);
  CHECK(lines(mix.str(), 1) == "k,slot,weight,mu1,mu2\n");
}

TEST_CASE("gray levels and PGM layout", "[report]") {
  CHECK(detail::gray_level(0, 20) == 0);
  CHECK(detail::gray_level(20, 20) == 255);
  CHECK(detail::gray_level(1, 2) == 128);  // 127.5 rounds up
  CHECK(detail::gray_level(1, 3) == 85);
  HeatmapResult h;
  h.row_centers = {0, 1};
  h.col_centers = {0, 1, 2};
  h.successes = {0, 1, 2, 2, 2, 2};
  h.applicable = {1, 1, 1, 1, 1, 0};
  h.runs_per_cell = 2;
  std::ostringstream os;
  write_pgm(os, h, 2);
  // Row 1 is drawn on top; its last bin is not applicable.
  CHECK(os.str() ==
        "P2\n6 4\n255\n"
        "255 255 255 255 0 0\n"
        "255 255 255 255 0 0\n"
        "0 0 128 128 255 255\n"
        "0 0 128 128 255 255\n");
}

TEST_CASE("trace and summary CSV layout", "[report]") {
  ConvergenceTrace t{{0, 1, {-3, 3}, {-4, -2, 2, 4}, -1.5, 1.25}};
  std::ostringstream os;
  write_trace_csv(os, t);
  CHECK(os.str() ==
        "run,generation,mu1,mu2,l1,r1,l2,r2,best_gen_fitness,best_disc_fitness\n"
        "0,1,-3,3,-4,-2,2,4,-1.5,1.25\n");
  std::ostringstream s;
  write_summary_csv(s, {{0, {-3, 3}, 0, true}}, {{0, {1, 1}, 5.656854249492381, false}});
  CHECK(s.str() ==
        "dynamics,run,mu1,mu2,distance,success\n"
        "coevolution,0,-3,3,0,1\n"
        "baseline,0,1,1,5.656854249492381,0\n");
}
