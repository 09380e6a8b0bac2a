#include <array>
#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"
#include "coevgan/problem.hpp"
#include "oracles.hpp"

using namespace coevgan;
using Catch::Matchers::WithinAbs;

namespace {

const GeneratorParams kTarget{-3.0, 3.0};

DiscriminatorParams disc(const double (&b)[4]) { return {b[0], b[1], b[2], b[3]}; }

}  // namespace

TEST_CASE("loss is 1 when the generator equals the target", "[problem]") {
  for (const auto& d : {DiscriminatorParams{-5, -1, 1, 5}, DiscriminatorParams{-9, 0, 0.5, 2},
                        DiscriminatorParams{0, 0, 0, 0}})
    CHECK_THAT(loss(kTarget, d, kTarget), WithinAbs(1.0, 1e-15));
}

TEST_CASE("loss of a far generator against symmetric intervals", "[problem]") {
  const double b[4] = {-5, -1, 1, 5};
  const double expected = oracle::loss_erfc(50, 50, -3, 3, b);
  // P*(A) = Phi(2) - Phi(-2) + Phi(8) - Phi(4) and P_G(A) = 0
  // (value from mpmath at 30 digits).
  CHECK_THAT(expected, WithinAbs(1.954531407345474083, 1e-14));
  CHECK_THAT(loss({50, 50}, disc(b), kTarget), WithinAbs(expected, 1e-14));
}

TEST_CASE("loss matches the erfc oracle on random inputs", "[problem]") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 5000; ++i) {
    double b[4] = {u(gen), u(gen), u(gen), u(gen)};
    std::sort(b, b + 4);
    const double g1 = u(gen), g2 = u(gen);
    const double l = loss({g1, g2}, disc(b), kTarget);
    CHECK_THAT(l, WithinAbs(oracle::loss_erfc(g1, g2, -3, 3, b), 1e-13));
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
    CHECK_THAT(loss({g2, g1}, disc(b), kTarget), WithinAbs(l, 1e-15));
  }
}

TEST_CASE("loss matches Monte Carlo sampling", "[problem]") {
  const double b[4] = {-4, -1.5, 0.5, 2.5};
  const auto mc = oracle::mc_loss(-1.0, 2.0, -3, 3, b, 10'000'000, 5);
  CHECK(std::fabs(loss({-1, 2}, disc(b), kTarget) - mc.mean) <= 3.0 * mc.std_error);
}

TEST_CASE("Monte Carlo evaluation mode", "[problem]") {
  const DiscriminatorParams d{-4, -1.5, 0.5, 2.5};
  const MonteCarlo mc{200'000, 9};
  const auto est = monte_carlo_loss({-1, 2}, d, kTarget, mc);
  CHECK(std::fabs(est.mean - loss({-1, 2}, d, kTarget)) <= 4.0 * est.std_error);
  CHECK(loss({-1, 2}, d, kTarget, mc) == est.mean);
  CHECK(monte_carlo_loss({-1, 2}, d, kTarget, mc).mean == est.mean);
  CHECK_THROWS_AS(monte_carlo_loss({-1, 2}, d, kTarget, MonteCarlo{0, 1}), ConfigError);
}

TEST_CASE("loss rejects unordered discriminators", "[problem]") {
  CHECK_THROWS_AS(loss(kTarget, {1, 0, 2, 3}, kTarget), DomainError);
  CHECK_THROWS_AS(loss(kTarget, {0, 2, 1, 3}, kTarget), DomainError);
}

TEST_CASE("discriminator indicator", "[problem]") {
  const DiscriminatorParams d{-2, -1, 1, 2};
  CHECK(d(-1.5) == 1);
  CHECK(d(-2.0) == 1);
  CHECK(d(0.0) == 0);
  CHECK(d(2.0) == 1);
  CHECK(d(2.5) == 0);
}

TEST_CASE("gradients match central differences", "[problem]") {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 500; ++i) {
    double b[4] = {u(gen), u(gen), u(gen), u(gen)};
    std::sort(b, b + 4);
    if (b[1] - b[0] < 1e-3 || b[2] - b[1] < 1e-3 || b[3] - b[2] < 1e-3) continue;
    const GeneratorParams g{u(gen), u(gen)};
    const auto gg = grad_generator(g, disc(b), kTarget);
    auto by_mu1 = [&](double x) { return oracle::loss_erfc(x, g.mu2, -3, 3, b); };
    auto by_mu2 = [&](double x) { return oracle::loss_erfc(g.mu1, x, -3, 3, b); };
    CHECK(oracle::relative_close(gg.d_mu1, oracle::central_difference(by_mu1, g.mu1)));
    CHECK(oracle::relative_close(gg.d_mu2, oracle::central_difference(by_mu2, g.mu2)));

    const auto gd = grad_discriminator(g, disc(b), kTarget);
    const double analytic[4] = {gd.d_l1, gd.d_r1, gd.d_l2, gd.d_r2};
    for (int k = 0; k < 4; ++k) {
      auto by_bound = [&](double x) {
        double c[4] = {b[0], b[1], b[2], b[3]};
        c[k] = x;
        return oracle::loss_erfc(g.mu1, g.mu2, -3, 3, c);
      };
      INFO("bound " << k);
      CHECK(oracle::relative_close(analytic[k], oracle::central_difference(by_bound, b[k])));
    }
  }
}

TEST_CASE("gradient examples", "[problem]") {
  // Generator at the target: every boundary gap vanishes.
  const auto gd = grad_discriminator(kTarget, {-5, -1, 1, 5}, kTarget);
  CHECK_THAT(gd.d_l1, WithinAbs(0.0, 1e-16));
  CHECK_THAT(gd.d_r2, WithinAbs(0.0, 1e-16));
  // Interval centred on mu1 only: moving mu1 does not change its mass.
  const auto gg = grad_generator({0, 40}, {-1, 1, 50, 50}, kTarget);
  CHECK_THAT(gg.d_mu1, WithinAbs(0.0, 1e-16));
  CHECK(gg.d_mu2 == 0.0);
}

TEST_CASE("repair sorts bounds", "[problem]") {
  CHECK(repair({3, 1, 2, 0}) == DiscriminatorParams{0, 1, 2, 3});
  CHECK(repair({0, 1, 2, 3}) == DiscriminatorParams{0, 1, 2, 3});
  CHECK_THROWS_AS(repair({0, NAN, 2, 3}), DomainError);
}

TEST_CASE("project_ordered is the Euclidean projection", "[problem]") {
  CHECK(project_ordered({0, 1, 2, 3}) == DiscriminatorParams{0, 1, 2, 3});
  CHECK(project_ordered({1, 0, 2, 3}) == DiscriminatorParams{0.5, 0.5, 2, 3});
  CHECK(project_ordered({3, 2, 1, 0}) == DiscriminatorParams{1.5, 1.5, 1.5, 1.5});
  // Variational inequality: <c - p, q - p> <= 0 for every ordered q.
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const std::array<double, 4> c{u(gen), u(gen), u(gen), u(gen)};
    const auto p = project_ordered(c).bounds();
    REQUIRE(DiscriminatorParams::from_bounds(p).ordered());
    for (int t = 0; t < 20; ++t) {
      std::array<double, 4> q{u(gen), u(gen), u(gen), u(gen)};
      std::sort(q.begin(), q.end());
      double dot = 0.0;
      for (int k = 0; k < 4; ++k) dot += (c[k] - p[k]) * (q[k] - p[k]);
      CHECK(dot <= 1e-12);
    }
  }
}

TEST_CASE("generator distance and success", "[problem]") {
  CHECK(generator_distance({3, -3}, kTarget) == 0.0);
  CHECK_THAT(generator_distance({-3.06, 3.08}, kTarget), WithinAbs(0.1, 1e-12));
  CHECK(success({-3.05, 3.05}, kTarget));
  CHECK(success({3.05, -3.05}, kTarget));
  CHECK_FALSE(success({-3.06, 3.08}, kTarget));
  CHECK_FALSE(success({-3, -3}, kTarget));
  CHECK_THROWS_AS(success(kTarget, kTarget, 0.0), ConfigError);
}

TEST_CASE("interval signs match sampled contributions", "[problem]") {
  const GeneratorParams g{-1, 2.5};
  std::mt19937_64 gen(14);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.5);
  const Interval iv{-2.5, -0.5};
  long real = 0, fake = 0;
  const long n = 2'000'000;
  for (long i = 0; i < n; ++i) {
    real += iv.contains((coin(gen) ? -3.0 : 3.0) + z(gen));
    fake += iv.contains((coin(gen) ? -1.0 : 2.5) + z(gen));
  }
  const double mc = static_cast<double>(real - fake) / static_cast<double>(n);
  const double c = interval_contribution(iv, g, kTarget);
  CHECK(std::fabs(c - mc) < 5e-3);
  CHECK(c < 0.0);
  CHECK(interval_fitness_signs({-2.5, -0.5, 4, 6}, g, kTarget) ==
        Quadrant{Sign::Negative, Sign::Positive});
  CHECK(Quadrant{Sign::Negative, Sign::Positive}.name() == "(-,+)");
  CHECK(Quadrant{Sign::Negative, Sign::Positive}.code() == "-+");
}

TEST_CASE("quadrant sampler returns matching discriminators", "[problem]") {
  const GeneratorParams g{-1, 2.5};
  Rng rng(15);
  for (Sign a : {Sign::Negative, Sign::Positive})
    for (Sign b : {Sign::Negative, Sign::Positive}) {
      const Quadrant q{a, b};
      for (int i = 0; i < 50; ++i) {
        const auto d = sample_disc_in_quadrant(q, g, kTarget, {-10, 10}, rng);
        CHECK(d.ordered());
        CHECK(interval_fitness_signs(d, g, kTarget) == q);
      }
    }
}

TEST_CASE("quadrant sampler reports infeasible quadrants", "[problem]") {
  Rng rng(16);
  // A generator equal to the target makes every contribution zero.
  CHECK_THROWS_AS(sample_disc_in_quadrant({Sign::Positive, Sign::Positive}, kTarget, kTarget,
                                          {-10, 10}, rng, 500),
                  InfeasibleError);
}

TEST_CASE("quadrant sampler acceptance rate", "[problem]") {
  const GeneratorParams g{-1, 2.5};
  const Quadrant q{Sign::Negative, Sign::Negative};
  // Brute-force acceptance probability with an independent classifier.
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  long hits = 0;
  const long draws = 1'000'000;
  for (long i = 0; i < draws; ++i) {
    double b[4] = {u(gen), u(gen), u(gen), u(gen)};
    std::sort(b, b + 4);
    const double left = oracle::two_mass(-3, 3, b[0], b[1]) - oracle::two_mass(-1, 2.5, b[0], b[1]);
    const double right = oracle::two_mass(-3, 3, b[2], b[3]) - oracle::two_mass(-1, 2.5, b[2], b[3]);
    hits += (left < -1e-12 && right < -1e-12) ? 1 : 0;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(draws);
  REQUIRE(p > 0.0);

  Rng rng(18);
  const int trials = 20000;
  double total = 0.0;
  for (int i = 0; i < trials; ++i) {
    int used = 0;
    sample_disc_in_quadrant(q, g, kTarget, {-10, 10}, rng, 100000, &used);
    total += used;
  }
  const double mean = total / trials;
  const double se = std::sqrt((1.0 - p) / (p * p) / trials);
  INFO("p=" << p << " mean attempts=" << mean << " expected=" << 1.0 / p);
  CHECK(std::fabs(mean - 1.0 / p) <= 4.0 * se + 0.01 / p);
}

TEST_CASE("simultaneous gradient step", "[problem]") {
  const GeneratorParams g{-1, 2};
  const DiscriminatorParams d{-4, -1.5, 0.5, 2.5};
  const double lr_g = 0.1, lr_d = 0.2;

  SECTION("zero learning rates keep the point") {
    const auto [g2, d2] = simultaneous_gradient_step(g, d, kTarget, 0.0, 0.0);
    CHECK(g2 == g);
    CHECK(d2 == d);
  }
  SECTION("matches finite-difference gradients") {
    const double b[4] = {d.l1, d.r1, d.l2, d.r2};
    const auto [g2, d2] = simultaneous_gradient_step(g, d, kTarget, lr_g, lr_d);
    auto by_mu1 = [&](double x) { return oracle::loss_erfc(x, g.mu2, -3, 3, b); };
    auto by_mu2 = [&](double x) { return oracle::loss_erfc(g.mu1, x, -3, 3, b); };
    CHECK_THAT(g2.mu1, WithinAbs(g.mu1 - lr_g * oracle::central_difference(by_mu1, g.mu1), 1e-8));
    CHECK_THAT(g2.mu2, WithinAbs(g.mu2 - lr_g * oracle::central_difference(by_mu2, g.mu2), 1e-8));
    const double got[4] = {d2.l1, d2.r1, d2.l2, d2.r2};
    for (int k = 0; k < 4; ++k) {
      auto by_bound = [&](double x) {
        double c[4] = {b[0], b[1], b[2], b[3]};
        c[k] = x;
        return oracle::loss_erfc(g.mu1, g.mu2, -3, 3, c);
      };
      CHECK_THAT(got[k], WithinAbs(b[k] + lr_d * oracle::central_difference(by_bound, b[k]), 1e-8));
    }
  }
  SECTION("alternating order uses the updated generator") {
    const auto [g_alt, d_alt] = simultaneous_gradient_step(
        g, d, kTarget, lr_g, lr_d, {UpdateOrder::Alternating, BoundHandling::Sort});
    const auto [g_sim, d_sim] = simultaneous_gradient_step(g, d, kTarget, lr_g, lr_d);
    CHECK(g_alt == g_sim);
    const auto gd = grad_discriminator(g_alt, d, kTarget);
    CHECK(d_alt.l1 == d.l1 + lr_d * gd.d_l1);
    CHECK(d_alt.r2 == d.r2 + lr_d * gd.d_r2);
  }
  SECTION("crossing bounds are constrained") {
    const DiscriminatorParams tight{-0.5, -0.5 + 1e-9, 0.0, 0.0 + 1e-9};
    for (auto h : {BoundHandling::Sort, BoundHandling::Project}) {
      const auto [g2, d2] = simultaneous_gradient_step({5, 6}, tight, kTarget, 0.1, 50.0,
                                                       {UpdateOrder::Simultaneous, h});
      CHECK(d2.ordered());
    }
  }
}

TEST_CASE("multi-opponent gradient steps sum gradients", "[problem]") {
  const TheoreticalGan gan(kTarget);
  const std::vector<DiscriminatorParams> ds{{-4, -1, 1, 3}, {-2, 0, 0.5, 5}};
  const GeneratorParams g{-1, 2};
  const auto a = grad_generator(g, ds[0], kTarget);
  const auto b = grad_generator(g, ds[1], kTarget);
  const auto stepped = gan.descend(g, std::span<const DiscriminatorParams>(ds), 0.5);
  CHECK_THAT(stepped.mu1, WithinAbs(g.mu1 - 0.5 * (a.d_mu1 + b.d_mu1), 1e-15));
  CHECK_THAT(stepped.mu2, WithinAbs(g.mu2 - 0.5 * (a.d_mu2 + b.d_mu2), 1e-15));
  CHECK(gan.descend(g, ds[0], 0.5).mu1 == g.mu1 - 0.5 * a.d_mu1);
}
