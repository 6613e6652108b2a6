#pragma once

#include <memory>
#include <vector>

#include "vpd/engineering.hpp"
#include "vpd/market.hpp"
#include "vpd/models.hpp"
#include "vpd/population.hpp"

namespace vpd {

// One product slot: body style plus the two free attributes; fuel economy
// rides along on the engineering curve.
struct ProductDesign {
  int b = 0;
  double a = 0.0;
  double e = 0.0;
  double p = 0.0;
};

struct PortfolioDesign {
  std::vector<ProductDesign> products;
};

Market to_market(const PortfolioDesign& design);
std::vector<int> portfolio_styles(const PortfolioDesign& design);

// Demand response of a buyer model (or of the true population) to an offered
// market, with the utility-channel derivatives the profit chain rule needs.
struct DemandEval {
  Eigen::VectorXd probs;    // J+1, outside good first
  double profit = 0.0;      // sum_j P_j * margin_j   (per capita)
  Eigen::VectorXd dpi_dp;   // J: d profit / d p_j through the utility channel only
  Eigen::VectorXd dpi_de;   // J: d profit / d e_j through the utility channel
  Eigen::VectorXd dpi_da;   // J: d profit / d a_j through the direct 1/a term
};

class DemandKernel {
 public:
  virtual ~DemandKernel() = default;
  virtual int num_styles() const = 0;
  virtual Eigen::VectorXd probabilities(const Market& market) const = 0;
  virtual DemandEval eval(const Market& market, const Eigen::VectorXd& margins) const = 0;
};

std::unique_ptr<DemandKernel> make_model_kernel(const ChoiceModel& model,
                                                int rcl_draws = 1000,
                                                std::uint64_t rcl_seed = kPredictionDrawSeed);
std::unique_ptr<DemandKernel> make_truth_kernel(const PopulationSpec& pop,
                                                const TasteDraws& draws);

struct InnerOptions {
  int multistart = 3;
  int max_iterations = 200;
  double gradient_tol = 1e-10;  // in the transformed (bounded) variables
  double price_floor = 1.0;
  double price_cap = 18.0;
  std::uint64_t seed = 0;
};

struct InnerResult {
  PortfolioDesign design;
  double profit = 0.0;
  bool price_cap_active = false;
  int evaluations = 0;
};

// Continuous attribute/price optimization for a fixed list of slot styles.
InnerResult optimize_attributes(const DemandKernel& kernel, const EngineeringConfig& eng,
                                const std::vector<int>& styles, const InnerOptions& opt);

// Price-only re-optimization of an existing portfolio (attributes frozen),
// started from the portfolio's current prices.
InnerResult optimize_prices(const DemandKernel& kernel, const EngineeringConfig& eng,
                            const PortfolioDesign& design, const InnerOptions& opt);

struct OuterOptions {
  int max_products = 5;
  int population = 60;
  int generations = 100;
  int tournament = 3;
  double crossover_rate = 0.9;
  int elitism = 2;
  int stall_generations = 15;
  std::uint64_t seed = 0;
  InnerOptions inner;          // used for fitness evaluations inside the GA
  int refine_multistart = 3;   // extra polish of the winner
};

struct DesignResult {
  PortfolioDesign design;
  double profit = 0.0;         // under the kernel that designed it
  int generations = 0;
  int inner_solves = 0;        // distinct style multisets evaluated
  bool price_cap_active = false;
};

// Bilevel search: genetic outer loop over style line-ups, smooth inner solve
// for attributes and prices.
DesignResult optimize_portfolio(const DemandKernel& kernel, const EngineeringConfig& eng,
                                const OuterOptions& opt);

struct ProfitEstimate {
  double value = 0.0;
  double se = 0.0;  // Monte Carlo standard error over taste draws
};

// Expected per-capita profit of a portfolio under the true population.
ProfitEstimate true_profit(const PortfolioDesign& design, const PopulationSpec& pop,
                           const EngineeringConfig& eng, const TasteDraws& draws);

void save_design(const PortfolioDesign& design, const std::string& path);
PortfolioDesign load_design(const std::string& path);

}  // namespace vpd
