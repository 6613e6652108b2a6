#pragma once

#include <Eigen/Dense>

#include "vpd/design.hpp"

namespace vpd {

// Kullback-Leibler divergence of the model's choice probabilities from the
// true ones, summed over the vehicle entries (the outside good joins in only
// on request).  Vectors are (J+1)-long with the outside good first.
double kld(const Eigen::VectorXd& truth, const Eigen::VectorXd& model,
           bool include_outside = false);

struct DesignError {
  double total = 0.0;
  double count_term = 0.0;      // style line-up mismatch
  double attribute_term = 0.0;  // worst attribute gap across shared styles
};

// Distance of a candidate portfolio from the ideal one: style counts off by
// N_b = |n_b - n*_b| / n*_b (plain n_b when the ideal skips the style), plus
// the larger directed Hausdorff distance between same-style products, where a
// product pair is ½(|e-e*|/e* + |a-a*|/a*) normalized by the ideal product.
DesignError design_error(const PortfolioDesign& candidate, const PortfolioDesign& ideal);

}  // namespace vpd
