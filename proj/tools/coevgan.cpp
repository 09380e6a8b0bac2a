// coevgan: command-line driver for the experiments.
//
// Exit status: 0 on success, 1 for invalid configuration or arguments,
// 2 for runtime failures (I/O, failing cells).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "coevgan/checkpoint.hpp"
#include "coevgan/config.hpp"
#include "coevgan/experiments.hpp"
#include "coevgan/report.hpp"

namespace fs = std::filesystem;
using namespace coevgan;

namespace {

constexpr const char* kOutEnv = "COEVGAN_OUT_DIR";

std::string dashed(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir_.string());
  }

  template <class F>
  void write(const std::string& name, F&& body) {
    const fs::path p = dir_ / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + p.string() + " for writing");
    body(f);
    f.flush();
    if (!f) throw std::runtime_error("write to " + p.string() + " failed");
    std::cout << "wrote " << p.string() << '\n';
  }

 private:
  fs::path dir_;
};

std::string rate_line(const char* name, const std::vector<RunSummary>& s) {
  int ok = 0;
  for (const auto& r : s) ok += r.success ? 1 : 0;
  return std::string(name) + " success " + std::to_string(ok) + "/" + std::to_string(s.size());
}

void cmd_converge(const ExperimentConfig& cfg, Output& out, bool with_coev) {
  const auto res = run_converge(cfg, with_coev);
  if (with_coev) {
    out.write("converge_coev.csv", [&](std::ostream& os) { write_trace_csv(os, res.coev); });
    out.write("converge_baseline.csv",
              [&](std::ostream& os) { write_trace_csv(os, res.baseline); });
    out.write("converge_summary.csv", [&](std::ostream& os) {
      write_summary_csv(os, res.coev_summary, res.baseline_summary);
    });
    std::cout << rate_line("coevolution", res.coev_summary) << '\n';
  } else {
    out.write("baseline.csv", [&](std::ostream& os) { write_trace_csv(os, res.baseline); });
    out.write("baseline_summary.csv",
              [&](std::ostream& os) { write_summary_csv(os, {}, res.baseline_summary); });
  }
  std::cout << rate_line("baseline", res.baseline_summary) << '\n';
}

void write_heatmaps(const ExperimentConfig& cfg, Output& out, const std::string& stem,
                    const HeatmapResult& coev, const HeatmapResult& base) {
  out.write(stem + "_coev.pgm", [&](std::ostream& os) { write_pgm(os, coev, cfg.image_scale); });
  out.write(stem + "_baseline.pgm",
            [&](std::ostream& os) { write_pgm(os, base, cfg.image_scale); });
  if (cfg.svg) {
    out.write(stem + "_coev.svg",
              [&](std::ostream& os) { write_heatmap_svg(os, coev, stem + " coevolution"); });
    out.write(stem + "_baseline.svg",
              [&](std::ostream& os) { write_heatmap_svg(os, base, stem + " baseline"); });
  }
}

void cmd_mode_collapse(const ExperimentConfig& cfg, Output& out) {
  const auto res = run_mode_collapse(cfg);
  out.write("mode_collapse.csv", [&](std::ostream& os) {
    write_heatmap_csv(os, res.coev, res.baseline, "mu1", "mu2");
  });
  write_heatmaps(cfg, out, "mode_collapse", res.coev, res.baseline);
  std::cout << "diagonal mean: coevolution " << format_double(ModeCollapseResult::diagonal_mean(res.coev))
            << ", baseline " << format_double(ModeCollapseResult::diagonal_mean(res.baseline))
            << '\n';
}

void cmd_disc_collapse(const ExperimentConfig& cfg, Output& out) {
  const auto res = run_disc_collapse(cfg);
  out.write("disc_collapse.csv", [&](std::ostream& os) {
    write_heatmap_csv(os, res.coev, res.baseline, "right_sign", "left_sign");
  });
  write_heatmaps(cfg, out, "disc_collapse", res.coev, res.baseline);
  if (cfg.disc_trace) {
    out.write("disc_trace.csv", [&](std::ostream& os) { write_disc_trace_csv(os, res.trace); });
    if (cfg.svg) {
      // First and last record of each (quadrant, dynamics) series.
      std::map<std::string, std::pair<DiscriminatorParams, DiscriminatorParams>> ends;
      for (const auto& r : res.trace) {
        std::string key = r.dynamics + "_";
        for (char c : r.quadrant) key += c == '+' ? 'p' : (c == '-' ? 'm' : 'z');
        auto it = ends.find(key);
        if (it == ends.end())
          ends.emplace(key, std::make_pair(r.disc, r.disc));
        else
          it->second.second = r.disc;
      }
      for (const auto& [key, fl] : ends)
        out.write("disc_bounds_" + key + ".svg", [&](std::ostream& os) {
          write_bounds_svg(os, cfg.disc_gen_fixed(), cfg.target(), fl.first, fl.second, key);
        });
    }
  }
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      std::cout << quadrant_at(i, j).name() << ' ';
      if (res.coev.is_applicable(i, j))
        std::cout << "coevolution " << res.coev.count(i, j) << '/' << res.coev.runs_per_cell
                  << ", baseline " << res.baseline.count(i, j) << '/'
                  << res.baseline.runs_per_cell << '\n';
      else
        std::cout << "not applicable\n";
    }
}

void cmd_grid_run(const ExperimentConfig& cfg, Output& out, const std::string& resume) {
  std::optional<Grid> start;
  if (!resume.empty()) {
    std::ifstream f(resume);
    if (!f) throw std::runtime_error("cannot read checkpoint " + resume);
    start = read_checkpoint(f);
  }
  const auto res = run_grid_experiment(cfg, std::move(start));
  out.write("grid.ckpt", [&](std::ostream& os) { write_checkpoint(os, res.grid); });
  out.write("grid_report.csv", [&](std::ostream& os) { write_grid_report_csv(os, res); });
  out.write("grid_mixture.csv", [&](std::ostream& os) { write_grid_mixture_csv(os, res); });
  std::cout << "best neighbourhood " << res.best.index << " g " << format_double(res.best.g)
            << " (cell steps " << res.stats.cell_steps << ", max adjacent skew "
            << res.stats.max_adjacent_skew << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coevolutionary training of a toy two-Gaussian GAN"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume;
  std::optional<std::uint64_t> seed;
  bool paper_scale = false, weighted = false, async_flag = false, sync_flag = false;
  bool print_config = false;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master seed (same as --master-seed)");
  app.add_option("--out", out_dir,
                 std::string("output directory (default $") + kOutEnv + " or ./coevgan-out)");
  app.add_flag("--paper-scale", paper_scale, "full published sweep sizes");
  app.add_flag("--weighted-fitness", weighted, "weight fitness terms by mixture weights");
  auto* async_opt = app.add_flag("--async", async_flag, "asynchronous grid execution");
  auto* sync_opt = app.add_flag("--sync", sync_flag, "synchronous grid execution");
  async_opt->excludes(sync_opt);
  app.add_flag("--print-config", print_config, "print the effective configuration");

  std::map<std::string, std::string> key_values;
  for (const auto& k : config_keys()) {
    if (k.name == "experiment") continue;  // chosen by the subcommand
    std::string names = "--" + dashed(k.name);
    if (dashed(k.name) != k.name) names += ",--" + k.name;
    app.add_option(names, key_values[k.name], k.help);
  }

  const std::map<std::string, Experiment> commands = {
      {"converge", Experiment::Converge},
      {"mode-collapse", Experiment::ModeCollapseHeatmap},
      {"disc-collapse", Experiment::DiscCollapseHeatmap},
      {"grid-run", Experiment::GridRun},
      {"baseline", Experiment::Baseline}};
  const std::map<std::string, std::string> descriptions = {
      {"converge", "coevolution and gradient baseline traces"},
      {"mode-collapse", "success heatmap over generator initializations"},
      {"disc-collapse", "success per discriminator sign quadrant"},
      {"grid-run", "spatial coevolution on a torus with mixture selection"},
      {"baseline", "gradient baseline traces only"}};
  for (const auto& [name, exp] : commands) {
    auto* sub = app.add_subcommand(name, descriptions.at(name));
    sub->fallthrough();
    if (exp == Experiment::GridRun)
      sub->add_option("--resume", resume, "continue from a checkpoint file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  ExperimentConfig cfg;
  std::string command;
  try {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    if (paper_scale) cfg.apply_paper_scale();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ConfigError("cannot read config file '" + config_path + "'");
      apply_config_stream(cfg, f, config_path);
    }
    for (const auto& k : config_keys()) {
      if (k.name == "experiment") continue;
      if (app.count("--" + dashed(k.name)) > 0) k.set(cfg, key_values[k.name]);
    }
    if (seed) cfg.master_seed = *seed;
    if (weighted) cfg.fitness_weighting = FitnessWeighting::Weighted;
    if (async_flag) cfg.asynchronous = true;
    if (sync_flag) cfg.asynchronous = false;
    cfg.experiment = commands.at(command);
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  }

  if (print_config) std::cout << dump_config(cfg);

  if (out_dir.empty()) {
    const char* env = std::getenv(kOutEnv);
    out_dir = env && *env ? env : "coevgan-out";
  }

  try {
    Output out(out_dir);
    out.write("config.txt", [&](std::ostream& os) { os << dump_config(cfg); });
    switch (cfg.experiment) {
      case Experiment::Converge: cmd_converge(cfg, out, true); break;
      case Experiment::Baseline: cmd_converge(cfg, out, false); break;
      case Experiment::ModeCollapseHeatmap: cmd_mode_collapse(cfg, out); break;
      case Experiment::DiscCollapseHeatmap: cmd_disc_collapse(cfg, out); break;
      case Experiment::GridRun: cmd_grid_run(cfg, out, resume); break;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
