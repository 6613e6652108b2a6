#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpd/population.hpp"
#include "vpd/rng.hpp"

namespace vpd {

// Attributes: e mpg, a seconds 0-60, p 10k$; b is a 0-based style index.
struct Vehicle {
  double e = 0.0;
  double a = 0.0;
  double p = 0.0;
  int b = 0;
};

struct Market {
  std::vector<Vehicle> vehicles;

  int size() const { return static_cast<int>(vehicles.size()); }
};

struct AttributeRanges {
  double e_lo = 5.0, e_hi = 50.0;
  double a_lo = 2.0, a_hi = 15.0;
  double p_lo = 1.0, p_hi = 6.0;
  int num_styles = kNumStyles;
};

// Aggregate choice shares; shares[m][0] is the outside good, shares[m][j]
// vehicle j (1-based) of markets[m].
struct ShareData {
  std::vector<Market> markets;
  std::vector<Eigen::VectorXd> shares;
  int individuals = 0;
};

Market generate_market(int num_vehicles, Rng& rng,
                       const AttributeRanges& ranges = AttributeRanges{});

std::vector<Market> generate_markets(int num_markets, int num_vehicles, Rng& rng,
                                     const AttributeRanges& ranges = AttributeRanges{});

// Simulate each individual's screen-then-choose decision with i.i.d. zero-mean
// Gumbel errors on every considered alternative and the outside good.
ShareData simulate_shares(const std::vector<Market>& markets,
                          const PopulationSpec& pop, int individuals, const Rng& rng);

// Common coefficient draws for Monte Carlo evaluation of the true kernel.
struct TasteDraws {
  Eigen::MatrixXd theta;      // 4 x I, rows (price, economy, accel, constant)
  Eigen::VectorXd exp_price;  // exp(theta(0, i))

  int count() const { return static_cast<int>(theta.cols()); }
};

// Draws are tied to a fixed stream by default so every consumer of the true
// kernel in one study sees the same integration error.
inline constexpr std::uint64_t kTruthDrawSeed = 0x74727574682d6d63ull;

TasteDraws make_taste_draws(const PopulationSpec& pop, int count,
                            std::uint64_t seed = kTruthDrawSeed);

// Exact-screen, Monte-Carlo-taste choice probability of every alternative
// (index 0 = outside good) under the heterogeneous population.
Eigen::VectorXd true_choice_probability(const Market& market, const PopulationSpec& pop,
                                        const TasteDraws& draws);
Eigen::VectorXd true_choice_probability(const Market& market, const PopulationSpec& pop,
                                        int mc_draws,
                                        std::uint64_t seed = kTruthDrawSeed);

// CSV with one row per alternative: market_id,j,e,a,p,b,share (j=0, b=0 for
// the outside good; b is 1-based in files).
void write_share_csv(const ShareData& data, const std::string& path);
ShareData read_share_csv(const std::string& path);

// JSON bundle used for round trips: markets, shares, and the generating seed.
void write_market_bundle(const ShareData& data, std::uint64_t seed,
                         const std::string& path);
ShareData read_market_bundle(const std::string& path, std::uint64_t* seed = nullptr);

}  // namespace vpd
