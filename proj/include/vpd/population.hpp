#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpd/rng.hpp"

namespace vpd {

// Body styles are indexed 0..B-1 internally; file formats use 1..B.
inline constexpr int kNumStyles = 9;

const std::vector<std::string>& style_names();

// Non-compensatory screen: bit b set means vehicles of body style b pass.
struct ScreeningRule {
  std::uint32_t mask = 0;

  bool accepts(int style) const { return (mask >> style) & 1u; }
};

inline int rule_count(int num_styles) { return (1 << num_styles) - 1; }

// Compensatory taste coefficients of one individual.  The price coefficient
// enters utility as -exp(price), so it is log-normal across the population.
struct Coefficients {
  double price = 0.0;
  double economy = 0.0;
  double accel = 0.0;
  double constant = 0.0;
};

struct Individual {
  ScreeningRule rule;
  Coefficients coeff;
};

// Heterogeneous population: a distribution over screening rules (alpha) and a
// normal distribution over the four taste coefficients.
struct PopulationSpec {
  int num_styles = kNumStyles;
  Eigen::Vector4d coeff_means;  // (price, economy, accel, constant)
  Eigen::Vector4d coeff_sds;
  // rule_probs[mask - 1] is the share of individuals screening with `mask`;
  // the all-reject rule is excluded and the entries sum to one.
  std::vector<double> rule_probs;

  double rule_prob(ScreeningRule r) const { return rule_probs[r.mask - 1]; }
};

// Deterministic utility of a vehicle (e in mpg, a in s, p in 10k$) for one
// individual; the outside good has utility zero.
double true_utility(const Coefficients& c, double e, double a, double p);

Individual sample_individual(const PopulationSpec& pop, Rng& rng);

// Marginal probability that a random individual accepts `style`.
double marginal_acceptance(const PopulationSpec& pop, int style);

// Population used throughout: independent per-style acceptance calibrated so
// that the conditioned marginals match the baseline rates exactly, plus the
// baseline taste coefficient moments.
PopulationSpec default_population();

// Same screens, but with the baseline constant flipped positive so that good
// offers actually sell; simulated markets are degenerate (nobody ever buys)
// under the raw baseline constant.
PopulationSpec default_market_population();

// Synthesize rule probabilities from independent per-style acceptance rates,
// conditioned on accepting at least one style and truncated at `min_mass`.
std::vector<double> bernoulli_rule_probs(const std::vector<double>& marginals,
                                         double min_mass = 1e-6);

// Calibrate raw Bernoulli rates so the conditioned marginals equal `target`.
std::vector<double> calibrate_bernoulli_marginals(const std::vector<double>& target);

enum class SdInterpretation { sd, variance };

PopulationSpec load_population(const std::string& path);
void save_population(const PopulationSpec& pop, const std::string& path);

}  // namespace vpd
