// Acceptance gate: one pass/fail line per criterion, exit code = failures.
// Criteria 6-10 share two desk-scale experiment runs, so expect a long wall
// time on one core; everything is deterministic in the hard-coded seeds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vpd/design.hpp"
#include "vpd/estimation.hpp"
#include "vpd/experiment.hpp"
#include "vpd/market.hpp"
#include "vpd/metrics.hpp"
#include "vpd/models.hpp"

using namespace vpd;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("[%s] %2d. %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

ShareData sampled_data(int markets, int vehicles, int individuals, std::uint64_t seed) {
  Rng rng(seed);
  ShareData data;
  data.markets = generate_markets(markets, vehicles, rng);
  ShareData sim = simulate_shares(data.markets, default_market_population(), individuals,
                                  rng.derive("shares"));
  return sim;
}

// ---- criterion 1: analytic gradients vs central differences ---------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  ShareData data = sampled_data(10, 5, 100, 11001);
  LikelihoodOptions opt;
  opt.rcl_draws = 300;
  Rng rng(11002);
  double worst = 0.0;
  for (Family f : {Family::mnl, Family::rcl, Family::nml, Family::ctc}) {
    LikelihoodProblem prob(f, data, opt);
    for (int point = 0; point < 20; ++point) {
      Eigen::VectorXd x(prob.dim());
      for (int k = 0; k < x.size(); ++k) x(k) = 0.3 * rng.normal();
      LogLik at = prob(x);
      if (!at.finite) {
        worst = 1.0;
        break;
      }
      const double h = 1e-6;
      for (int k = 0; k < x.size(); ++k) {
        Eigen::VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        double fd = (prob(xp).value - prob(xm).value) / (2 * h);
        double rel = std::abs(at.grad(k) - fd) / std::max(1.0, std::abs(at.grad(k)));
        worst = std::max(worst, rel);
      }
    }
  }
  double secs = seconds_since(t0);
  report(1, worst < 1e-5 && secs < 60.0,
         "likelihood gradients match central differences on 20 points x 4 families",
         fmt("worst rel %.2e, %.1fs", worst, secs));
}

// ---- criterion 2: structural collapses ------------------------------------

void criterion_collapses() {
  const auto t0 = Clock::now();
  Rng rng(12001);
  auto markets = generate_markets(100, 5, rng);
  Eigen::MatrixXd draws = make_standard_normal_draws(4 + kNumStyles, 64, 12002);
  double worst = 0.0;
  for (const Market& mk : markets) {
    MnlParams mnl;
    mnl.theta = {0.5 + 0.2 * rng.normal(), -20.0 + rng.normal(), 8.0 + rng.normal(),
                 1.0 + rng.normal()};
    mnl.style = Eigen::VectorXd::Zero(kNumStyles);
    for (int b = 0; b < kNumStyles - 1; ++b) mnl.style(b) = 0.4 * rng.normal();
    mnl.style(kNumStyles - 1) = -mnl.style.head(kNumStyles - 1).sum();
    Eigen::VectorXd pm = mnl_probabilities(mk, mnl);

    RclParams rcl;
    rcl.mean = Eigen::VectorXd::Zero(4 + kNumStyles);
    rcl.mean.head<4>() = mnl.theta;
    rcl.mean.tail(kNumStyles) = mnl.style;
    rcl.sd = Eigen::VectorXd::Zero(4 + kNumStyles);
    worst = std::max(worst, (rcl_probabilities(mk, rcl, draws) - pm).cwiseAbs().maxCoeff());

    NmlParams nml;
    nml.theta = mnl.theta;
    nml.style = mnl.style;
    nml.lambda = Eigen::VectorXd::Ones(kNumStyles);
    worst = std::max(worst, (nml_probabilities(mk, nml) - pm).cwiseAbs().maxCoeff());

    MnlParams flat = mnl;
    flat.style.setZero();
    CtcParams ctc;
    ctc.theta = mnl.theta;
    ctc.alpha = Eigen::VectorXd::Zero(rule_count(kNumStyles));
    ctc.alpha(rule_count(kNumStyles) - 1) = 1.0;
    worst = std::max(worst, (ctc_probabilities(mk, ctc) - mnl_probabilities(mk, flat))
                                .cwiseAbs()
                                .maxCoeff());
  }
  double secs = seconds_since(t0);
  report(2, worst < 1e-10 && secs < 60.0,
         "sigma=0 / lambda=1 / all-ones-screen collapses on 100 markets",
         fmt("worst abs %.2e, %.1fs", worst, secs));
}

// ---- criterion 3: simulation consistency ----------------------------------

void criterion_simulation() {
  const auto t0 = Clock::now();
  PopulationSpec pop = default_market_population();
  Rng rng(13001);
  auto markets = generate_markets(20, 5, rng);
  ShareData sim = simulate_shares(markets, pop, 100000, rng.derive("shares"));
  double worst = 0.0;
  for (int m = 0; m < 20; ++m) {
    Eigen::VectorXd probs = true_choice_probability(markets[m], pop, 200000);
    worst = std::max(worst, (sim.shares[m] - probs).cwiseAbs().sum());
  }
  double secs = seconds_since(t0);
  report(3, worst < 0.02 && secs < 300.0,
         "simulated shares at N=1e5 match true probabilities on 20 markets",
         fmt("worst L1 %.4f, %.1fs", worst, secs));
}

// ---- criterion 4: estimation self-consistency -----------------------------

void criterion_estimation() {
  const auto t0 = Clock::now();

  MnlParams truth;
  truth.theta = {0.4, -18.0, 9.0, 0.8};
  truth.style = Eigen::VectorXd::Zero(kNumStyles);
  for (int b = 0; b < kNumStyles - 1; ++b) truth.style(b) = 0.3 * ((b % 3) - 1);
  truth.style(kNumStyles - 1) = -truth.style.head(kNumStyles - 1).sum();
  Rng rng(14001);
  ShareData data;
  data.markets = generate_markets(1000, 5, rng);
  for (const Market& mk : data.markets) {
    data.shares.push_back(mnl_probabilities(mk, truth));
  }
  EstimationOptions opt;
  opt.multistart = 1;
  FitResult fit = estimate(Family::mnl, data, opt);
  const MnlParams& hat = std::get<MnlParams>(fit.model);
  double mnl_err = std::max((hat.theta - truth.theta).cwiseAbs().maxCoeff(),
                            (hat.style - truth.style).cwiseAbs().maxCoeff());

  const int B = 3;
  CtcParams ctruth;
  ctruth.B = B;
  ctruth.theta = {0.5, -14.0, 6.0, 1.2};
  ctruth.alpha.resize(rule_count(B));
  ctruth.alpha << 0.25, 0.10, 0.05, 0.20, 0.08, 0.12, 0.20;
  AttributeRanges ranges;
  ranges.num_styles = B;
  Rng crng(14002);
  ShareData cdata;
  cdata.markets = generate_markets(400, 4, crng, ranges);
  for (const Market& mk : cdata.markets) {
    cdata.shares.push_back(ctc_probabilities(mk, ctruth));
  }
  EstimationOptions copt;
  copt.num_styles = B;
  copt.multistart = 2;
  copt.max_iterations = 800;
  FitResult cfit = estimate(Family::ctc, cdata, copt);
  double alpha_l1 = (std::get<CtcParams>(cfit.model).alpha - ctruth.alpha).cwiseAbs().sum();

  double secs = seconds_since(t0);
  report(4, mnl_err < 1e-3 && alpha_l1 < 0.01 && secs < 600.0,
         "noiseless shares return the generating parameters",
         fmt("logit max-abs %.2e, screen-mix L1 %.2e, %.1fs", mnl_err, alpha_l1, secs));
}

// ---- criterion 5: brute-force oracles -------------------------------------

void criterion_oracles() {
  const auto t0 = Clock::now();

  const int B = 3;
  AttributeRanges ranges;
  ranges.num_styles = B;
  Rng rng(15001);
  auto markets = generate_markets(25, 6, rng, ranges);
  double worst = 0.0;
  for (const Market& mk : markets) {
    CtcParams p;
    p.B = B;
    p.theta = {0.6, -15.0, 7.0, 0.5};
    p.alpha.resize(rule_count(B));
    double total = 0.0;
    for (int r = 0; r < p.alpha.size(); ++r) total += (p.alpha(r) = rng.uniform() + 0.05);
    p.alpha /= total;

    Eigen::VectorXd direct = Eigen::VectorXd::Zero(mk.size() + 1);
    for (std::uint32_t mask = 1; mask <= 7; ++mask) {
      double den = 1.0;
      for (const Vehicle& v : mk.vehicles) {
        if ((mask >> v.b) & 1u) {
          den += std::exp(-std::exp(p.theta(0)) * v.p + p.theta(1) / v.e +
                          p.theta(2) / v.a + p.theta(3));
        }
      }
      direct(0) += p.alpha(mask - 1) / den;
      for (int j = 0; j < mk.size(); ++j) {
        const Vehicle& v = mk.vehicles[j];
        if ((mask >> v.b) & 1u) {
          double u = -std::exp(p.theta(0)) * v.p + p.theta(1) / v.e + p.theta(2) / v.a +
                     p.theta(3);
          direct(j + 1) += p.alpha(mask - 1) * std::exp(u) / den;
        }
      }
    }
    worst = std::max(worst, (ctc_probabilities(mk, p) - direct).cwiseAbs().maxCoeff());
  }

  EngineeringConfig eng2 = default_engineering_config();
  eng2.styles.resize(2);
  MnlParams mnl2;
  mnl2.B = 2;
  mnl2.theta = {0.0, -14.0, 8.0, 1.5};
  mnl2.style = Eigen::VectorXd::Zero(2);
  mnl2.style << 0.4, -0.4;
  auto kernel = make_model_kernel(ChoiceModel(mnl2));
  OuterOptions oopt;
  oopt.max_products = 3;
  oopt.population = 20;
  oopt.generations = 25;
  oopt.seed = 15002;
  DesignResult ga = optimize_portfolio(*kernel, eng2, oopt);
  double best = -1.0;
  std::vector<int> best_styles;
  InnerOptions inner;
  inner.multistart = 3;
  inner.seed = 15003;
  for (int n0 = 0; n0 <= 3; ++n0) {
    for (int n1 = 0; n1 + n0 <= 3; ++n1) {
      if (n0 + n1 == 0) continue;
      std::vector<int> styles;
      styles.insert(styles.end(), n0, 0);
      styles.insert(styles.end(), n1, 1);
      InnerResult r = optimize_attributes(*kernel, eng2, styles, inner);
      if (r.profit > best) {
        best = r.profit;
        best_styles = styles;
      }
    }
  }
  std::vector<int> got = portfolio_styles(ga.design);
  std::sort(got.begin(), got.end());
  std::sort(best_styles.begin(), best_styles.end());
  bool ga_exact = got == best_styles;

  double secs = seconds_since(t0);
  report(5, worst < 1e-12 && ga_exact && secs < 300.0,
         "screen enumeration and exhaustive line-up search agree",
         fmt("worst abs %.2e, line-up match %.0f, %.1fs", worst, ga_exact ? 1.0 : 0.0,
             secs));
}

// ---- criteria 6-10: the desk-scale study ----------------------------------

struct GroupStat {
  double sum = 0.0;
  int n = 0;

  void add(double v) {
    sum += v;
    ++n;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criteria_desk() {
  ExperimentConfig cfg;  // the desk-scale defaults: {10,50,200} x 5 x 4 families
  cfg.output_dir = "acceptance_run_a";
  std::printf("       running desk-scale study twice; this is the long part\n");
  std::fflush(stdout);

  const auto t0 = Clock::now();
  RunRecord rec = run_experiment(cfg, [](const std::string& msg) {
    std::printf("       [run a] %s\n", msg.c_str());
    std::fflush(stdout);
  });
  double secs_a = seconds_since(t0);

  bool all_ok = rec.all_succeeded();

  // 6: divergence ordering and monotonicity
  std::map<std::pair<std::string, int>, GroupStat> kld_stat;
  std::map<std::pair<std::string, int>, GroupStat> rec_stat, reprec_stat;
  for (const CellRecord& c : rec.cells) {
    if (c.failed) continue;
    kld_stat[{family_name(c.family), c.num_markets}].add(c.mean_kld);
    rec_stat[{family_name(c.family), c.num_markets}].add(c.recovery);
    reprec_stat[{family_name(c.family), c.num_markets}].add(c.repriced_recovery);
  }
  bool ctc_beats_mnl = true;
  for (int m : cfg.market_grid) {
    if (!(kld_stat[{"ctc", m}].mean() < kld_stat[{"mnl", m}].mean())) {
      ctc_beats_mnl = false;
    }
  }
  bool kld_decreasing = true;
  for (Family f : cfg.families) {
    for (std::size_t i = 1; i < cfg.market_grid.size(); ++i) {
      double prev = kld_stat[{family_name(f), cfg.market_grid[i - 1]}].mean();
      double curr = kld_stat[{family_name(f), cfg.market_grid[i]}].mean();
      if (!(curr < prev)) kld_decreasing = false;
    }
  }
  report(6, all_ok && ctc_beats_mnl && kld_decreasing,
         "screening model dominates plain logit in divergence, all models improve "
         "with data",
         fmt("ctc@10 %.3f vs mnl@10 %.3f", kld_stat[{"ctc", 10}].mean(),
             kld_stat[{"mnl", 10}].mean()));

  // 7: profit recovery gap at the smallest grid point
  double gap = rec_stat[{"ctc", 10}].mean() - rec_stat[{"mnl", 10}].mean();
  report(7, all_ok && gap > 0.10,
         "screening model recovers clearly more profit than plain logit at M=10",
         fmt("ctc %.3f, mnl %.3f, gap %.3f", rec_stat[{"ctc", 10}].mean(),
             rec_stat[{"mnl", 10}].mean(), gap));

  // 8: plain-logit portfolios duplicate one style with identical vehicles
  bool homogeneous = true;
  double worst_rel = 0.0;
  for (const CellRecord& c : rec.cells) {
    if (c.failed || c.family != Family::mnl) continue;
    for (std::size_t i = 0; i < c.design.products.size(); ++i) {
      for (std::size_t j = i + 1; j < c.design.products.size(); ++j) {
        const ProductDesign& x = c.design.products[i];
        const ProductDesign& y = c.design.products[j];
        if (x.b != y.b) continue;
        double rel = std::max({std::abs(x.e - y.e) / std::abs(y.e),
                               std::abs(x.a - y.a) / std::abs(y.a),
                               std::abs(x.p - y.p) / std::abs(y.p)});
        worst_rel = std::max(worst_rel, rel);
        if (rel > 1e-4) homogeneous = false;
      }
    }
  }
  report(8, all_ok && homogeneous,
         "same-style vehicles in plain-logit portfolios are identical",
         fmt("worst rel gap %.2e", worst_rel));

  // 9: pricing on the offering never hurts, and cannot fix the logit line-up
  bool reprice_ok = true;
  double worst_drop = 0.0;
  for (const CellRecord& c : rec.cells) {
    if (c.failed) continue;
    double slack = c.repriced.value - (c.profit.value - 2 * c.profit.se);
    worst_drop = std::min(worst_drop, slack);
    if (slack < 0.0) reprice_ok = false;
  }
  double mnl_repriced = 0.0;
  int mnl_groups = 0;
  for (int m : cfg.market_grid) {
    mnl_repriced += reprec_stat[{"mnl", m}].mean();
    ++mnl_groups;
  }
  mnl_repriced /= std::max(1, mnl_groups);
  bool persistent_gap = mnl_repriced < 0.95;
  report(9, all_ok && reprice_ok && persistent_gap,
         "re-pricing never hurts and leaves the plain-logit gap open",
         fmt("worst slack %.2e, mean mnl re-priced recovery %.3f", worst_drop,
             mnl_repriced));

  // 10: two runs, identical bytes, bounded wall time
  cfg.output_dir = "acceptance_run_b";
  RunRecord rec_b = run_experiment(cfg);
  (void)rec_b;
  bool bytes_equal = slurp("acceptance_run_a/metrics.csv") ==
                         slurp("acceptance_run_b/metrics.csv") &&
                     slurp("acceptance_run_a/designs.csv") ==
                         slurp("acceptance_run_b/designs.csv") &&
                     !slurp("acceptance_run_a/metrics.csv").empty();
  report(10, bytes_equal && secs_a < 4 * 3600.0,
         "desk-scale study is byte-deterministic and fits the time budget",
         fmt("first run %.0fs", secs_a));

  std::filesystem::remove_all("acceptance_run_a");
  std::filesystem::remove_all("acceptance_run_b");
}

}  // namespace

int main() {
  std::printf("acceptance gate\n");
  criterion_gradients();
  criterion_collapses();
  criterion_simulation();
  criterion_estimation();
  criterion_oracles();
  criteria_desk();
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
