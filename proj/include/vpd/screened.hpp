#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "vpd/market.hpp"

namespace vpd {

// Consideration sets only depend on which of the distinct styles in a market
// a screen accepts, so the 2^B-1 rules collapse onto at most 2^D projected
// sets, D being the number of distinct styles present.  All screened-kernel
// evaluations run over that projection.
struct StyleProjection {
  int D = 0;
  std::vector<int> distinct;               // ascending style ids present
  std::vector<int> group;                  // per vehicle: index into `distinct`
  std::vector<std::uint16_t> rule_bucket;  // per rule mask-1: projected mask
};

StyleProjection project_styles(const std::vector<int>& vehicle_styles, int num_styles);
StyleProjection project_styles(const Market& market, int num_styles);

// Fold rule probabilities onto projected-set weights (size 2^D; index 0 holds
// the mass of screens that consider nothing in this market).
void bucket_weights(const StyleProjection& proj, const std::vector<double>& rule_probs,
                    std::vector<double>& weights);

// Scratch space reused across draws.
struct ScreenedWorkspace {
  std::vector<double> expu;       // per vehicle, shifted
  std::vector<double> group_sum;  // per distinct style
  std::vector<double> subset_sum; // per projected set
  std::vector<double> gain;       // per distinct style

  void resize(int vehicles, int D);
};

// Accumulate `weight` times the screened-logit choice probabilities at
// utilities `u` (outside good at zero) into probs[0..J].
void accumulate_screened_probs(const StyleProjection& proj,
                               const std::vector<double>& set_weights,
                               const Eigen::VectorXd& u, double weight,
                               ScreenedWorkspace& ws, Eigen::VectorXd& probs);

}  // namespace vpd
