#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "vpd/engineering.hpp"
#include "vpd/population.hpp"

using namespace vpd;

TEST_CASE("default config covers every body style") {
  EngineeringConfig cfg = default_engineering_config();
  REQUIRE(cfg.num_styles() == kNumStyles);
  for (int b = 0; b < cfg.num_styles(); ++b) {
    CHECK(cfg.style(b).name == style_names()[b]);
    auto [lo, hi] = feasible_accel_interval(cfg.style(b));
    CHECK(lo < hi);
    CHECK(lo >= cfg.style(b).a_lo);
    CHECK(hi <= cfg.style(b).a_hi);
  }
  CHECK_THROWS(cfg.style(-1));
  CHECK_THROWS(cfg.style(cfg.num_styles()));
}

TEST_CASE("sedans span a sensible efficiency band") {
  // design targets for the shipped defaults: 15-45 mpg over 5-12 s, costs
  // within 1-4 (10k$)
  EngineeringConfig cfg = default_engineering_config();
  const StyleEngineering& sedan = cfg.style(3);
  auto [lo, hi] = feasible_accel_interval(sedan);
  for (double a = std::max(5.0, lo); a <= std::min(12.0, hi); a += 0.25) {
    double e = feasible_fuel_economy(sedan, a);
    CHECK(e >= 15.0);
    CHECK(e <= 45.0);
    double c = unit_cost(sedan, a);
    CHECK(c >= 1.0);
    CHECK(c <= 4.0);
  }
}

TEST_CASE("faster cars burn more fuel and cost more") {
  EngineeringConfig cfg = default_engineering_config();
  for (int b = 0; b < cfg.num_styles(); ++b) {
    const StyleEngineering& s = cfg.style(b);
    auto [lo, hi] = feasible_accel_interval(s);
    double prev_e = -1.0, prev_c = 1e9;
    for (double a = lo + 1e-6; a <= hi; a += (hi - lo) / 40.0) {
      double e = feasible_fuel_economy(s, a);
      double c = unit_cost(s, a);
      CHECK(e > prev_e);   // slower 0-60 => better economy
      CHECK(c < prev_c);   // slower 0-60 => cheaper build
      CHECK(c > 0.0);
      prev_e = e;
      prev_c = c;
    }
  }
}

TEST_CASE("slopes match finite differences") {
  EngineeringConfig cfg = default_engineering_config();
  for (int b = 0; b < cfg.num_styles(); ++b) {
    const StyleEngineering& s = cfg.style(b);
    auto [lo, hi] = feasible_accel_interval(s);
    double a = 0.5 * (lo + hi);
    double h = 1e-6;
    double de = (feasible_fuel_economy(s, a + h) - feasible_fuel_economy(s, a - h)) / (2 * h);
    double dc = (unit_cost(s, a + h) - unit_cost(s, a - h)) / (2 * h);
    CHECK(economy_slope(s, a) == doctest::Approx(de).epsilon(1e-6));
    CHECK(cost_slope(s, a) == doctest::Approx(dc).epsilon(1e-6));
  }
}

TEST_CASE("non-positive power denominator throws with context") {
  StyleEngineering s;
  s.name = "impossible";
  s.g_const = -100.0;  // denominator is -100 everywhere
  CHECK_THROWS_AS(feasible_fuel_economy(s, 8.0), InfeasibleDesign);
  CHECK_THROWS_AS(economy_slope(s, 8.0), InfeasibleDesign);
  CHECK_THROWS_AS(feasible_accel_interval(s), InfeasibleDesign);
  try {
    feasible_fuel_economy(s, 8.0);
  } catch (const InfeasibleDesign& e) {
    CHECK(e.a == doctest::Approx(8.0));
  }
  // endpoints of the reported interval stay feasible for every default style
  EngineeringConfig cfg = default_engineering_config();
  for (int b = 0; b < cfg.num_styles(); ++b) {
    auto [lo, hi] = feasible_accel_interval(cfg.style(b));
    CHECK(feasible_fuel_economy_checked(cfg.style(b), lo).within_bounds);
    CHECK(feasible_fuel_economy_checked(cfg.style(b), hi).within_bounds);
  }
}

TEST_CASE("engineering JSON round trip") {
  EngineeringConfig cfg = default_engineering_config();
  const char* path = "eng_roundtrip.json";
  save_engineering(cfg, path);
  EngineeringConfig back = load_engineering(path);
  REQUIRE(back.num_styles() == cfg.num_styles());
  for (int b = 0; b < cfg.num_styles(); ++b) {
    CHECK(back.style(b).name == cfg.style(b).name);
    CHECK(back.style(b).weight == doctest::Approx(cfg.style(b).weight).epsilon(1e-15));
    CHECK(back.style(b).g_a == doctest::Approx(cfg.style(b).g_a).epsilon(1e-15));
    CHECK(back.style(b).c_w == doctest::Approx(cfg.style(b).c_w).epsilon(1e-15));
  }
  std::remove(path);
}

TEST_CASE("feasibility table is monotone per style") {
  EngineeringConfig cfg = default_engineering_config();
  const char* path = "feas_table.csv";
  write_feasibility_curves(cfg, path, 10);
  FILE* f = std::fopen(path, "r");
  REQUIRE(f != nullptr);
  char line[256];
  REQUIRE(std::fgets(line, sizeof(line), f) != nullptr);  // header
  int rows = 0;
  while (std::fgets(line, sizeof(line), f)) ++rows;
  std::fclose(f);
  CHECK(rows == 11 * cfg.num_styles());  // inclusive endpoint grid
  std::remove(path);
}
