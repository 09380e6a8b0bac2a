#pragma once

// CSV, plain PGM and SVG writers for experiment results. Column layouts are
// listed in docs/formats.md.

#include <cmath>
#include <ostream>
#include <string>

#include "coevgan/checkpoint.hpp"
#include "coevgan/experiments.hpp"

namespace coevgan {

inline void write_trace_csv(std::ostream& os, const ConvergenceTrace& trace) {
  os << "run,generation,mu1,mu2,l1,r1,l2,r2,best_gen_fitness,best_disc_fitness\n";
  for (const auto& r : trace)
    os << r.run << ',' << r.generation << ',' << format_double(r.gen.mu1) << ','
       << format_double(r.gen.mu2) << ',' << format_double(r.disc.l1) << ','
       << format_double(r.disc.r1) << ',' << format_double(r.disc.l2) << ','
       << format_double(r.disc.r2) << ',' << format_double(r.best_gen_fitness) << ','
       << format_double(r.best_disc_fitness) << '\n';
}

inline void write_summary_csv(std::ostream& os, const std::vector<RunSummary>& coev,
                              const std::vector<RunSummary>& baseline) {
  os << "dynamics,run,mu1,mu2,distance,success\n";
  auto rows = [&](const char* name, const std::vector<RunSummary>& v) {
    for (const auto& r : v)
      os << name << ',' << r.run << ',' << format_double(r.final_gen.mu1) << ','
         << format_double(r.final_gen.mu2) << ',' << format_double(r.distance) << ','
         << (r.success ? 1 : 0) << '\n';
  };
  rows("coevolution", coev);
  rows("baseline", baseline);
}

/// One row per bin; `na` marks bins that could not be initialized.
inline void write_heatmap_csv(std::ostream& os, const HeatmapResult& coev,
                              const HeatmapResult& baseline, const char* row_name,
                              const char* col_name) {
  os << "dynamics," << row_name << ',' << col_name << ",successes,runs,success_rate\n";
  auto rows = [&](const char* name, const HeatmapResult& h) {
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) {
        os << name << ',' << format_double(h.row_centers[i]) << ','
           << format_double(h.col_centers[j]) << ',';
        if (h.is_applicable(i, j))
          os << h.count(i, j) << ',' << h.runs_per_cell << ',' << format_double(h.rate(i, j));
        else
          os << "na," << h.runs_per_cell << ",na";
        os << '\n';
      }
  };
  rows("coevolution", coev);
  rows("baseline", baseline);
}

namespace detail {

// successes/runs scaled to 0..255 with round-half-up, in integers.
inline int gray_level(int successes, int runs) { return (510 * successes + runs) / (2 * runs); }

}  // namespace detail

/// Plain (P2) graymap. White is rate 1. Row 0 of the result is drawn at
/// the bottom so the row axis points up. Non-applicable bins are black.
inline void write_pgm(std::ostream& os, const HeatmapResult& h, int scale) {
  const std::size_t w = h.cols() * static_cast<std::size_t>(scale);
  const std::size_t ht = h.rows() * static_cast<std::size_t>(scale);
  os << "P2\n" << w << ' ' << ht << "\n255\n";
  for (std::size_t y = 0; y < ht; ++y) {
    const std::size_t i = h.rows() - 1 - y / static_cast<std::size_t>(scale);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t j = x / static_cast<std::size_t>(scale);
      const int v = h.is_applicable(i, j) ? detail::gray_level(h.count(i, j), h.runs_per_cell) : 0;
      os << v << (x + 1 == w ? '\n' : ' ');
    }
  }
}

inline void write_heatmap_svg(std::ostream& os, const HeatmapResult& h, const std::string& title,
                              int cell_px = 20) {
  const std::size_t margin = 40;
  const std::size_t w = h.cols() * static_cast<std::size_t>(cell_px) + margin;
  const std::size_t ht = h.rows() * static_cast<std::size_t>(cell_px) + margin;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << ht
     << "\">\n";
  os << "<text x=\"" << margin << "\" y=\"14\" font-size=\"12\">" << title << "</text>\n";
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) {
      const int v = h.is_applicable(i, j) ? detail::gray_level(h.count(i, j), h.runs_per_cell) : 0;
      const std::size_t x = margin + j * static_cast<std::size_t>(cell_px);
      const std::size_t y = 20 + (h.rows() - 1 - i) * static_cast<std::size_t>(cell_px);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_px << "\" height=\""
         << cell_px << "\" fill=\"rgb(" << v << ',' << v << ',' << v << ")\"/>\n";
    }
  os << "</svg>\n";
}

inline void write_disc_trace_csv(std::ostream& os, const std::vector<DiscTraceRecord>& trace) {
  os << "quadrant,dynamics,generation,l1,r1,l2,r2,fitness\n";
  for (const auto& r : trace)
    os << r.quadrant << ',' << r.dynamics << ',' << r.generation << ','
       << format_double(r.disc.l1) << ',' << format_double(r.disc.r1) << ','
       << format_double(r.disc.l2) << ',' << format_double(r.disc.r2) << ','
       << format_double(r.fitness) << '\n';
}

/// Both densities with the first (light) and last (dark) discriminator
/// intervals drawn underneath.
inline void write_bounds_svg(std::ostream& os, const GeneratorParams& gen,
                             const GeneratorParams& target, const DiscriminatorParams& first,
                             const DiscriminatorParams& last, const std::string& title) {
  const double x_lo = -8.0, x_hi = 8.0, y_max = 0.25;
  const double W = 640.0, H = 320.0;
  auto px = [&](double x) { return (x - x_lo) / (x_hi - x_lo) * W; };
  auto py = [&](double y) { return H - 40.0 - y / y_max * (H - 80.0); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\">\n<text x=\"10\" y=\"16\" font-size=\"12\">" << title << "</text>\n";
  auto band = [&](const DiscriminatorParams& d, double y, const char* color) {
    for (const auto& iv : {d.left(), d.right()}) {
      const double a = px(std::clamp(iv.lo, x_lo, x_hi));
      const double b = px(std::clamp(iv.hi, x_lo, x_hi));
      os << "<rect x=\"" << format_double(a) << "\" y=\"" << y << "\" width=\""
         << format_double(std::max(b - a, 1.0)) << "\" height=\"8\" fill=\"" << color << "\"/>\n";
    }
  };
  band(first, H - 32.0, "#9ecae1");
  band(last, H - 20.0, "#08519c");
  auto curve = [&](const UnitGaussianMixture& mix, const char* color) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (int k = 0; k <= 320; ++k) {
      const double x = x_lo + (x_hi - x_lo) * k / 320.0;
      os << format_double(px(x)) << ',' << format_double(py(mixture_pdf(mix, x))) << ' ';
    }
    os << "\"/>\n";
  };
  curve(target.density(), "#238b45");
  curve(gen.density(), "#cb181d");
  os << "</svg>\n";
}

inline void write_grid_report_csv(std::ostream& os, const GridRunResult& r) {
  os << "k,generation_counter,g,selected\n";
  for (std::size_t k = 0; k < r.g.size(); ++k)
    os << k << ',' << r.grid.generation_counter(k) << ',' << format_double(r.g[k]) << ','
       << (k == r.best.index ? 1 : 0) << '\n';
}

inline void write_grid_mixture_csv(std::ostream& os, const GridRunResult& r) {
  os << "k,slot,weight,mu1,mu2\n";
  for (std::size_t s = 0; s < r.best.gens.size(); ++s)
    os << r.best.index << ',' << s << ',' << format_double(r.best.weights[s]) << ','
       << format_double(r.best.gens[s].mu1) << ',' << format_double(r.best.gens[s].mu2) << '\n';
}

}  // namespace coevgan
