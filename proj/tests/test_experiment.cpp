#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vpd/experiment.hpp"

using namespace vpd;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.market_grid = {4, 8};
  cfg.replicates = 2;
  cfg.vehicles_per_market = 3;
  cfg.individuals_per_market = 60;
  cfg.validation_markets = 20;
  cfg.rcl_draws = 50;
  cfg.truth_draws = 600;
  cfg.multistart = 1;
  cfg.max_products = 2;
  cfg.families = {Family::mnl, Family::ctc};
  cfg.seed = 13;
  cfg.outer.population = 14;
  cfg.outer.generations = 6;
  cfg.outer.stall_generations = 4;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("a small grid runs every cell and scores it") {
  ExperimentConfig cfg = tiny_config();
  RunRecord rec = run_experiment(cfg);
  REQUIRE(rec.cells.size() == 2 * 2 * 2);
  CHECK(rec.all_succeeded());
  CHECK(rec.ideal_profit.value > 0.0);
  CHECK(rec.ideal.products.size() >= 1);
  for (const CellRecord& c : rec.cells) {
    CHECK_FALSE(c.failed);
    CHECK(c.error.empty());
    CHECK(c.fit.num_markets == c.num_markets);
    CHECK(c.design.products.size() >= 1);
    CHECK(c.profit.se >= 0.0);
    CHECK(c.recovery == doctest::Approx(c.profit.value / rec.ideal_profit.value));
    // freezing attributes and re-optimizing prices under the truth never hurts
    CHECK(c.repriced.value >= c.profit.value - 2 * (c.profit.se + c.repriced.se) - 1e-9);
    CHECK(c.estimate_seconds >= 0.0);
    CHECK(c.design_seconds >= 0.0);
  }
}

TEST_CASE("metrics rows mirror the cell records") {
  ExperimentConfig cfg = tiny_config();
  RunRecord rec = run_experiment(cfg);
  std::vector<MetricsRow> rows = metrics_rows(rec);
  REQUIRE(rows.size() == rec.cells.size());
  for (std::size_t i = 0; i < rec.cells.size(); ++i) {
    const MetricsRow& r = rows[i];
    const CellRecord& c = rec.cells[i];
    CHECK(r.model == family_name(c.family));
    CHECK(r.num_markets == c.num_markets);
    CHECK(r.replicate == c.replicate);
    CHECK(r.mean_kld == c.mean_kld);
    CHECK(r.profit_recovery == c.recovery);
    CHECK(r.ideal_profit == rec.ideal_profit.value);
    CHECK(r.ideal_profit_se == rec.ideal_profit.se);
  }
}

TEST_CASE("same seed, same bytes") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = tiny_config();
  cfg.output_dir = "exp_rep_a";
  run_experiment(cfg);
  cfg.output_dir = "exp_rep_b";
  run_experiment(cfg);
  CHECK(slurp("exp_rep_a/metrics.csv") == slurp("exp_rep_b/metrics.csv"));
  CHECK(slurp("exp_rep_a/metrics.csv").size() > 0);
  CHECK(slurp("exp_rep_a/designs.csv") == slurp("exp_rep_b/designs.csv"));
  CHECK(fs::exists("exp_rep_a/manifest.json"));
  fs::remove_all("exp_rep_a");
  fs::remove_all("exp_rep_b");
}

TEST_CASE("metrics CSV round trips through files") {
  ExperimentConfig cfg = tiny_config();
  RunRecord rec = run_experiment(cfg);
  std::vector<MetricsRow> rows = metrics_rows(rec);
  const char* path = "metrics_roundtrip.csv";
  write_metrics_csv(rows, path);
  std::vector<MetricsRow> back = read_metrics_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].model == rows[i].model);
    CHECK(back[i].num_markets == rows[i].num_markets);
    CHECK(back[i].mean_kld == rows[i].mean_kld);          // %.17g is lossless
    CHECK(back[i].true_profit == rows[i].true_profit);
    CHECK(back[i].repriced_recovery == rows[i].repriced_recovery);
    CHECK(back[i].failed == rows[i].failed);
  }
  std::remove(path);
}

TEST_CASE("figure tables recompute from the raw rows") {
  ExperimentConfig cfg = tiny_config();
  RunRecord rec = run_experiment(cfg);
  std::vector<MetricsRow> rows = metrics_rows(rec);

  std::ostringstream out;
  emit_figure_csv(rows, 1, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "schema,figure,model,num_markets,min_value,mean_value,max_value");

  int data_rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++data_rows;
    std::istringstream ls(line);
    std::string schema, fig, model, markets, mn, mean, mx;
    std::getline(ls, schema, ',');
    std::getline(ls, fig, ',');
    std::getline(ls, model, ',');
    std::getline(ls, markets, ',');
    std::getline(ls, mn, ',');
    std::getline(ls, mean, ',');
    std::getline(ls, mx, ',');
    double lo = 1e300, hi = -1e300, sum = 0.0;
    int n = 0;
    for (const MetricsRow& r : rows) {
      if (r.model != model || r.num_markets != std::stoi(markets) || r.failed) continue;
      lo = std::min(lo, r.mean_kld);
      hi = std::max(hi, r.mean_kld);
      sum += r.mean_kld;
      ++n;
    }
    REQUIRE(n > 0);
    // an overfit cell can push mean_kld to infinity; compare accordingly
    auto close = [](double a, double b) {
      if (std::isinf(a) || std::isinf(b)) return a == b;
      return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b));
    };
    CHECK(close(std::stod(mn), lo));
    CHECK(close(std::stod(mean), sum / n));
    CHECK(close(std::stod(mx), hi));
  }
  CHECK(data_rows == 2 * 2);  // two families at two grid points

  std::ostringstream out5;
  emit_figure_csv(rows, 5, out5);
  std::istringstream in5(out5.str());
  std::getline(in5, header);
  CHECK(header == "schema,model,num_markets,mean_kld,mean_design_error,mean_profit_recovery");
  CHECK_THROWS(emit_figure_csv(rows, 6, out5));
}

TEST_CASE("failed cells are reported but stay out of the figures") {
  MetricsRow ok;
  ok.model = "mnl";
  ok.num_markets = 10;
  ok.replicate = 0;
  ok.mean_kld = 0.5;
  MetricsRow bad = ok;
  bad.replicate = 1;
  bad.mean_kld = 99.0;
  bad.failed = 1;
  bad.error = "estimation exploded";
  std::ostringstream out;
  emit_figure_csv({ok, bad}, 1, out);
  std::string text = out.str();
  CHECK(text.find("99") == std::string::npos);
  CHECK(text.find("0.5") != std::string::npos);
}

TEST_CASE("experiment config JSON round trip") {
  ExperimentConfig cfg = tiny_config();
  cfg.output_dir = "somewhere";
  const char* path = "exp_roundtrip.json";
  save_experiment_config(cfg, path);
  ExperimentConfig back = load_experiment_config(path);
  CHECK(back.market_grid == cfg.market_grid);
  CHECK(back.replicates == cfg.replicates);
  CHECK(back.vehicles_per_market == cfg.vehicles_per_market);
  CHECK(back.individuals_per_market == cfg.individuals_per_market);
  CHECK(back.validation_markets == cfg.validation_markets);
  CHECK(back.rcl_draws == cfg.rcl_draws);
  CHECK(back.truth_draws == cfg.truth_draws);
  CHECK(back.seed == cfg.seed);
  REQUIRE(back.families.size() == 2);
  CHECK(back.families[0] == Family::mnl);
  CHECK(back.families[1] == Family::ctc);
  CHECK(back.outer.population == cfg.outer.population);
  CHECK(back.outer.generations == cfg.outer.generations);
  std::remove(path);
}

TEST_CASE("bad grids are refused") {
  ExperimentConfig cfg = tiny_config();
  cfg.market_grid = {8, 4};  // not ascending
  CHECK_THROWS(run_experiment(cfg));
  cfg = tiny_config();
  cfg.market_grid.clear();
  CHECK_THROWS(run_experiment(cfg));
  cfg = tiny_config();
  cfg.replicates = 0;
  CHECK_THROWS(run_experiment(cfg));
}