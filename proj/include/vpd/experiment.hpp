#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vpd/design.hpp"
#include "vpd/estimation.hpp"
#include "vpd/metrics.hpp"

namespace vpd {

struct ExperimentConfig {
  std::vector<int> market_grid = {10, 50, 200};
  int replicates = 5;
  int vehicles_per_market = 5;
  int individuals_per_market = 100;
  int validation_markets = 1000;
  int rcl_draws = 1000;     // estimation + prediction draws for the mixture model
  int truth_draws = 10000;  // Monte Carlo size for true choice behavior
  int multistart = 5;
  int max_products = 5;
  std::vector<Family> families = {Family::mnl, Family::rcl, Family::nml, Family::ctc};
  std::uint64_t seed = 7;
  std::string output_dir;  // empty: keep everything in memory
  AttributeRanges ranges;
  PopulationSpec population;
  EngineeringConfig engineering;
  OuterOptions outer;

  ExperimentConfig();
};

// The full-size protocol: the whole market grid with 20 replicates and the
// larger Monte Carlo budget.
ExperimentConfig paper_scale_config();

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& config, const std::string& path);

struct CellRecord {
  Family family = Family::mnl;
  int num_markets = 0;
  int replicate = 0;
  bool failed = false;
  std::string error;
  FitResult fit;
  PortfolioDesign design;
  PortfolioDesign repriced_design;
  double mean_kld = 0.0;
  DesignError derr;
  ProfitEstimate profit;
  double recovery = 0.0;
  ProfitEstimate repriced;
  double repriced_recovery = 0.0;
  bool price_cap_active = false;
  double estimate_seconds = 0.0;
  double design_seconds = 0.0;
};

struct RunRecord {
  ExperimentConfig config;
  PortfolioDesign ideal;
  ProfitEstimate ideal_profit;
  bool ideal_price_cap_active = false;
  std::vector<CellRecord> cells;
  double total_seconds = 0.0;

  bool all_succeeded() const;
};

using ProgressFn = std::function<void(const std::string&)>;

// The full study: per (grid point, replicate) generate data once, estimate
// each family, design under each fitted model, and score everything against
// the single ideal portfolio.  With an output directory set, metrics.csv and
// designs.csv grow one cell at a time and a manifest closes the run.
RunRecord run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

// Flat view of one metrics.csv row; column order is fixed by kMetricsHeader.
struct MetricsRow {
  int schema = 1;
  std::string model;
  int num_markets = 0;
  int replicate = 0;
  double mean_kld = 0.0;
  double design_error = 0.0;
  double design_count_term = 0.0;
  double design_attribute_term = 0.0;
  double true_profit = 0.0;
  double true_profit_se = 0.0;
  double ideal_profit = 0.0;
  double ideal_profit_se = 0.0;
  double profit_recovery = 0.0;
  double repriced_profit = 0.0;
  double repriced_profit_se = 0.0;
  double repriced_recovery = 0.0;
  int price_cap_active = 0;
  double fit_ll = 0.0;
  int fit_converged = 0;
  int fit_best_start = -1;
  int fit_iterations = 0;
  int failed = 0;
  std::string error;
};

extern const char* const kMetricsHeader;
extern const char* const kDesignsHeader;

std::vector<MetricsRow> metrics_rows(const RunRecord& record);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

// Figures 1-4: min/mean/max over replicates per (model, market count) of one
// metric (divergence, design error, profit recovery, re-priced recovery).
// Figure 5: mean divergence against mean design error and mean recovery.
void emit_figure_csv(const std::vector<MetricsRow>& rows, int figure, std::ostream& out);
void emit_figure_csv(const std::vector<MetricsRow>& rows, int figure,
                     const std::string& path);

}  // namespace vpd
