#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vpd/metrics.hpp"
#include "vpd/rng.hpp"

using namespace vpd;

TEST_CASE("divergence hand oracle, vehicles only") {
  Eigen::VectorXd truth(3), model(3);
  truth << 0.2, 0.5, 0.3;
  model << 0.2, 0.4, 0.4;
  // 0.5*log(1.25) + 0.3*log(0.75), computed independently
  CHECK(kld(truth, model) == doctest::Approx(0.025267153921570612).epsilon(1e-14));
  // identical distributions diverge by zero
  CHECK(kld(truth, truth) == 0.0);
  CHECK(kld(truth, truth, true) == 0.0);
}

TEST_CASE("full-distribution divergence is nonnegative") {
  Rng rng(808);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd t(5), q(5);
    for (int i = 0; i < 5; ++i) {
      t(i) = rng.uniform() + 1e-3;
      q(i) = rng.uniform() + 1e-3;
    }
    t /= t.sum();
    q /= q.sum();
    CHECK(kld(t, q, true) >= -1e-15);
  }
}

TEST_CASE("vehicles-only divergence may dip below zero on sub-distributions") {
  // mass moved from the outside good onto the vehicles: every vehicle ratio
  // is below one, so the restricted sum goes negative by design
  Eigen::VectorXd t(3), q(3);
  t << 0.5, 0.25, 0.25;
  q << 0.2, 0.4, 0.4;
  CHECK(kld(t, q) < 0.0);
  CHECK(kld(t, q, true) >= 0.0);
}

TEST_CASE("unmatched support is flagged with infinity") {
  Eigen::VectorXd t(3), q(3);
  t << 0.4, 0.6, 0.0;
  q << 0.4, 0.0, 0.6;
  CHECK(std::isinf(kld(t, q)));
  // zero truth entries contribute nothing, whatever the model says
  Eigen::VectorXd q2(3);
  q2 << 0.7, 0.3, 0.0;
  CHECK(std::isfinite(kld(t, q2)));
  Eigen::VectorXd bad(2);
  CHECK_THROWS(kld(t, bad));
}

TEST_CASE("design error vanishes only at the ideal") {
  PortfolioDesign ideal;
  ideal.products.push_back({2, 8.0, 30.0, 2.5});
  ideal.products.push_back({5, 10.0, 36.0, 2.0});
  DesignError zero = design_error(ideal, ideal);
  CHECK(zero.total == 0.0);
  CHECK(zero.count_term == 0.0);
  CHECK(zero.attribute_term == 0.0);
}

TEST_CASE("count term tracks line-up mismatches") {
  PortfolioDesign ideal;
  ideal.products.push_back({2, 8.0, 30.0, 2.5});
  ideal.products.push_back({2, 9.0, 32.0, 2.1});

  // duplicate style: candidate has one where the ideal has two
  PortfolioDesign one;
  one.products.push_back({2, 8.0, 30.0, 2.5});
  DesignError e1 = design_error(one, ideal);
  CHECK(e1.count_term == doctest::Approx(0.5));  // |1-2|/2
  // the unmatched second ideal product drives the forward gap:
  // 0.5*(|30-32|/32 + |8-9|/9)
  CHECK(e1.attribute_term == doctest::Approx(1.0 / 32 + 1.0 / 18).epsilon(1e-12));
  CHECK(e1.total == doctest::Approx(0.5 * (0.5 + 1.0 / 32 + 1.0 / 18)).epsilon(1e-12));

  // style the ideal never offers costs its full count
  PortfolioDesign extra = ideal;
  extra.products.push_back({7, 11.0, 22.0, 3.0});
  extra.products.push_back({7, 11.5, 21.0, 3.1});
  DesignError e2 = design_error(extra, ideal);
  CHECK(e2.count_term == doctest::Approx(2.0));
  CHECK(e2.attribute_term == 0.0);  // no shared-style gaps
  CHECK(e2.total == doctest::Approx(1.0));
}

TEST_CASE("attribute term is the worse directed Hausdorff gap") {
  PortfolioDesign ideal;
  ideal.products.push_back({3, 10.0, 40.0, 2.0});

  PortfolioDesign off;
  off.products.push_back({3, 11.0, 36.0, 2.0});  // |36-40|/40=0.1, |11-10|/10=0.1
  DesignError e = design_error(off, ideal);
  CHECK(e.count_term == 0.0);
  CHECK(e.attribute_term == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(e.total == doctest::Approx(0.05).epsilon(1e-12));

  // an extra near-duplicate in the candidate leaves the forward distance
  // intact and cannot shrink the backward one below the lone pair
  PortfolioDesign two = off;
  two.products.push_back({3, 10.0, 40.0, 2.4});
  DesignError e2 = design_error(two, ideal);
  CHECK(e2.attribute_term == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(e2.count_term == doctest::Approx(1.0));  // |2-1|/1
}

TEST_CASE("design error is invariant to product order") {
  Rng rng(809);
  PortfolioDesign a, b, ideal;
  for (int k = 0; k < 4; ++k) {
    ProductDesign pr{k % 3, 6.0 + rng.uniform() * 4, 20.0 + rng.uniform() * 15,
                     1.5 + rng.uniform()};
    a.products.push_back(pr);
    ideal.products.push_back({k % 3, 6.0 + rng.uniform() * 4, 20.0 + rng.uniform() * 15,
                              1.5 + rng.uniform()});
  }
  b = a;
  std::swap(b.products[0], b.products[3]);
  std::swap(b.products[1], b.products[2]);
  DesignError ea = design_error(a, ideal);
  DesignError eb = design_error(b, ideal);
  CHECK(ea.total == eb.total);
  CHECK(ea.count_term == eb.count_term);
  CHECK(ea.attribute_term == eb.attribute_term);
}
