#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>

#include "vpd/market.hpp"

using namespace vpd;

namespace {

// Golub-Welsch nodes/weights for E[f(Z)], Z standard normal.
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double beta = std::sqrt(k / 2.0);
    J(k, k - 1) = J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = std::sqrt(2.0) * es.eigenvalues();
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    weights(i) = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

PopulationSpec all_accept_population() {
  PopulationSpec pop = default_market_population();
  pop.rule_probs.assign(pop.rule_probs.size(), 0.0);
  pop.rule_probs.back() = 1.0;  // mask 511: every style passes
  return pop;
}

}  // namespace

TEST_CASE("generated markets respect the attribute ranges") {
  Rng rng(3);
  AttributeRanges ranges;
  auto markets = generate_markets(50, 6, rng, ranges);
  REQUIRE(markets.size() == 50);
  for (const Market& mk : markets) {
    REQUIRE(mk.size() == 6);
    for (const Vehicle& v : mk.vehicles) {
      CHECK(v.e >= ranges.e_lo);
      CHECK(v.e <= ranges.e_hi);
      CHECK(v.a >= ranges.a_lo);
      CHECK(v.a <= ranges.a_hi);
      CHECK(v.p >= ranges.p_lo);
      CHECK(v.p <= ranges.p_hi);
      CHECK(v.b >= 0);
      CHECK(v.b < ranges.num_styles);
    }
  }
}

TEST_CASE("share vectors are distributions") {
  Rng rng(4);
  auto markets = generate_markets(20, 5, rng);
  ShareData data = simulate_shares(markets, default_market_population(), 300,
                                   rng.derive("shares"));
  REQUIRE(data.shares.size() == 20);
  for (const auto& s : data.shares) {
    REQUIRE(s.size() == 6);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.minCoeff() >= 0.0);
  }
}

TEST_CASE("identical seeds replay bit-identical data") {
  auto run = [] {
    Rng rng(99);
    auto markets = generate_markets(10, 4, rng);
    return simulate_shares(markets, default_market_population(), 200,
                           rng.derive("shares"));
  };
  ShareData a = run();
  ShareData b = run();
  for (int m = 0; m < 10; ++m) {
    for (int j = 0; j < 4; ++j) {
      CHECK(a.markets[m].vehicles[j].e == b.markets[m].vehicles[j].e);
      CHECK(a.markets[m].vehicles[j].p == b.markets[m].vehicles[j].p);
    }
    CHECK((a.shares[m] - b.shares[m]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a style no screen accepts never sells") {
  PopulationSpec pop = default_market_population();
  // zero out every rule that accepts style 0, renormalize
  double total = 0.0;
  for (std::uint32_t mask = 1; mask <= pop.rule_probs.size(); ++mask) {
    if (mask & 1u) pop.rule_probs[mask - 1] = 0.0;
    total += pop.rule_probs[mask - 1];
  }
  for (double& w : pop.rule_probs) w /= total;

  Market mk;
  mk.vehicles.push_back({40.0, 9.0, 2.0, 0});  // the unconsidered style
  mk.vehicles.push_back({30.0, 8.0, 2.5, 3});
  Eigen::VectorXd probs = true_choice_probability(mk, pop, 20000);
  CHECK(probs(1) == 0.0);
  CHECK(probs(2) > 0.0);

  Rng rng(5);
  ShareData data = simulate_shares({mk}, pop, 5000, rng);
  CHECK(data.shares[0](1) == 0.0);
}

TEST_CASE("single-vehicle market matches Gauss-Hermite quadrature") {
  PopulationSpec pop = all_accept_population();
  Market mk;
  mk.vehicles.push_back({32.0, 9.0, 2.4, 2});

  Eigen::VectorXd nodes, weights;
  gauss_hermite(24, nodes, weights);
  double buy = 0.0;
  for (int i = 0; i < 24; ++i) {
    double tp = pop.coeff_means(0) + pop.coeff_sds(0) * nodes(i);
    for (int j = 0; j < 24; ++j) {
      double te = pop.coeff_means(1) + pop.coeff_sds(1) * nodes(j);
      for (int k = 0; k < 24; ++k) {
        double ta = pop.coeff_means(2) + pop.coeff_sds(2) * nodes(k);
        for (int l = 0; l < 24; ++l) {
          double t0 = pop.coeff_means(3) + pop.coeff_sds(3) * nodes(l);
          double u = -std::exp(tp) * 2.4 + te / 32.0 + ta / 9.0 + t0;
          double w = weights(i) * weights(j) * weights(k) * weights(l);
          buy += w * (1.0 / (1.0 + std::exp(-u)));
        }
      }
    }
  }

  const int draws = 400000;
  Eigen::VectorXd probs = true_choice_probability(mk, pop, draws);
  double se = std::sqrt(buy * (1 - buy) / draws);  // loose: MC averages probabilities
  CHECK(std::abs(probs(1) - buy) < 4 * se + 1e-4);
  CHECK(probs(0) == doctest::Approx(1.0 - probs(1)).epsilon(1e-12));
}

TEST_CASE("taste draws are seed-deterministic with the documented layout") {
  PopulationSpec pop = default_market_population();
  TasteDraws d1 = make_taste_draws(pop, 500);
  TasteDraws d2 = make_taste_draws(pop, 500);
  CHECK(d1.count() == 500);
  CHECK((d1.theta - d2.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d1.exp_price - d1.theta.row(0).transpose().array().exp().matrix())
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  TasteDraws d3 = make_taste_draws(pop, 500, 123);
  CHECK((d1.theta - d3.theta).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("share CSV and bundle round trips") {
  Rng rng(12);
  auto markets = generate_markets(7, 3, rng);
  ShareData data = simulate_shares(markets, default_market_population(), 150,
                                   rng.derive("shares"));
  const char* csv = "shares_roundtrip.csv";
  write_share_csv(data, csv);
  ShareData back = read_share_csv(csv);
  REQUIRE(back.markets.size() == data.markets.size());
  for (int m = 0; m < 7; ++m) {
    for (int j = 0; j < 3; ++j) {
      CHECK(back.markets[m].vehicles[j].e == data.markets[m].vehicles[j].e);
      CHECK(back.markets[m].vehicles[j].a == data.markets[m].vehicles[j].a);
      CHECK(back.markets[m].vehicles[j].p == data.markets[m].vehicles[j].p);
      CHECK(back.markets[m].vehicles[j].b == data.markets[m].vehicles[j].b);
    }
    CHECK((back.shares[m] - data.shares[m]).cwiseAbs().maxCoeff() == 0.0);
  }
  std::remove(csv);

  const char* bundle = "shares_roundtrip.json";
  write_market_bundle(data, 42, bundle);
  std::uint64_t seed = 0;
  ShareData jb = read_market_bundle(bundle, &seed);
  CHECK(seed == 42);
  CHECK(jb.individuals == data.individuals);
  REQUIRE(jb.markets.size() == data.markets.size());
  for (int m = 0; m < 7; ++m) {
    CHECK((jb.shares[m] - data.shares[m]).cwiseAbs().maxCoeff() == 0.0);
  }
  std::remove(bundle);
}
