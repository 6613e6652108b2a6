#pragma once

#include <cstdint>
#include <string>

#include "vpd/models.hpp"

namespace vpd {

struct EstimationOptions {
  int multistart = 5;
  int max_iterations = 500;
  double gradient_tol = 1e-7;
  int rcl_draws = 1000;
  std::uint64_t rcl_draw_seed = 0;
  double lambda_max = 10.0;
  std::uint64_t seed = 0;       // perturbs the extra starting points
  std::string trace_path;      // optional per-iteration CSV trace
  int num_styles = kNumStyles;
};

struct FitResult {
  Family family = Family::mnl;
  ChoiceModel model;
  Eigen::VectorXd free_params;
  double final_ll = 0.0;
  bool converged = false;
  int best_start = -1;
  int iterations = 0;    // of the best start
  int evaluations = 0;   // across all starts
  double wall_seconds = 0.0;
  int num_markets = 0;
  int num_styles = kNumStyles;
  double lambda_max = 10.0;
  std::uint64_t seed = 0;
};

// Starting point for multistart index `start`; start 0 is the deterministic
// default (flat tastes, unit scales, uniform screens).
Eigen::VectorXd initial_free(Family family, int B, int start, double lambda_max,
                             Rng& rng);

FitResult estimate(Family family, const ShareData& data,
                   const EstimationOptions& opt = EstimationOptions());

void save_fit(const FitResult& fit, const std::string& path);
FitResult load_fit(const std::string& path);

}  // namespace vpd
