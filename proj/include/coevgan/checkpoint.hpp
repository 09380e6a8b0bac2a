#pragma once

// Text checkpoint of a grid. Layout is documented in docs/checkpoint.md.

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "coevgan/errors.hpp"
#include "coevgan/grid.hpp"

namespace coevgan {

inline constexpr int kCheckpointVersion = 1;

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("not a number: '" + s + "'");
  return x;
}

inline void write_checkpoint(std::ostream& os, const Grid& grid) {
  os << "coevgan-grid " << kCheckpointVersion << '\n';
  os << "m " << grid.side() << '\n';
  os << "per_cell " << grid.per_cell_size() << '\n';
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Cell c = grid.snapshot(k);
    os << "cell " << k << " generation " << c.generation_counter << " es_sigma "
       << format_double(c.es_sigma) << '\n';
    for (const auto& g : c.center_gens)
      os << "gen " << format_double(g.params.mu1) << ' ' << format_double(g.params.mu2) << ' '
         << format_double(g.learning_rate) << '\n';
    for (const auto& d : c.center_discs)
      os << "disc " << format_double(d.params.l1) << ' ' << format_double(d.params.r1) << ' '
         << format_double(d.params.l2) << ' ' << format_double(d.params.r2) << ' '
         << format_double(d.learning_rate) << '\n';
    os << "weights";
    for (double w : c.mixture_weights.values()) os << ' ' << format_double(w);
    os << '\n';
  }
  os << "end\n";
}

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::vector<std::string> next(const std::string& expected_tag) {
    std::string line;
    if (!std::getline(is_, line))
      throw ConfigError("checkpoint: unexpected end of input, expected '" + expected_tag + "'");
    ++line_no_;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string t; ss >> t;) tokens.push_back(t);
    if (tokens.empty() || tokens[0] != expected_tag)
      fail("expected '" + expected_tag + "'");
    return tokens;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("checkpoint line " + std::to_string(line_no_) + ": " + msg);
  }

  std::uint64_t to_u64(const std::string& s) const {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad integer '" + s + "'");
    return v;
  }

  double to_double(const std::string& s) const {
    try {
      return parse_double(s);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }

 private:
  std::istream& is_;
  int line_no_ = 0;
};

}  // namespace detail

inline Grid read_checkpoint(std::istream& is) {
  detail::LineReader r(is);
  auto header = r.next("coevgan-grid");
  if (header.size() != 2) r.fail("malformed header");
  if (r.to_u64(header[1]) != static_cast<std::uint64_t>(kCheckpointVersion))
    r.fail("unsupported version " + header[1]);
  auto size_line = [&](const char* tag) {
    auto t = r.next(tag);
    if (t.size() != 2) r.fail("malformed size line");
    const std::size_t v = r.to_u64(t[1]);
    if (v == 0) r.fail(std::string(tag) + " must be >= 1");
    return v;
  };
  const std::size_t m = size_line("m");
  const std::size_t n = size_line("per_cell");

  std::vector<Cell> cells(m * m);
  for (std::size_t k = 0; k < m * m; ++k) {
    auto head = r.next("cell");
    if (head.size() != 6 || head[2] != "generation" || head[4] != "es_sigma")
      r.fail("malformed cell line");
    if (r.to_u64(head[1]) != k) r.fail("cells out of order");
    Cell& c = cells[k];
    c.generation_counter = r.to_u64(head[3]);
    c.es_sigma = r.to_double(head[5]);
    for (std::size_t i = 0; i < n; ++i) {
      auto t = r.next("gen");
      if (t.size() != 4) r.fail("gen needs 3 values");
      c.center_gens.push_back(
          {{r.to_double(t[1]), r.to_double(t[2])}, r.to_double(t[3]), std::nullopt});
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto t = r.next("disc");
      if (t.size() != 6) r.fail("disc needs 5 values");
      DiscriminatorParams d{r.to_double(t[1]), r.to_double(t[2]), r.to_double(t[3]),
                            r.to_double(t[4])};
      try {
        d.validate();
      } catch (const DomainError& e) {
        r.fail(e.what());
      }
      c.center_discs.push_back({d, r.to_double(t[5]), std::nullopt});
    }
    auto w = r.next("weights");
    if (w.size() != kNeighborhoodSize * n + 1)
      r.fail("weights needs " + std::to_string(kNeighborhoodSize * n) + " values");
    std::vector<double> ws;
    for (std::size_t i = 1; i < w.size(); ++i) ws.push_back(r.to_double(w[i]));
    try {
      c.mixture_weights = MixtureWeights(std::move(ws));
    } catch (const std::exception& e) {
      r.fail(e.what());
    }
  }
  r.next("end");
  return Grid(m, std::move(cells));
}

inline std::string checkpoint_string(const Grid& grid) {
  std::ostringstream os;
  write_checkpoint(os, grid);
  return os.str();
}

}  // namespace coevgan
