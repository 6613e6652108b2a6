#include "vpd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

namespace vpd {

double kld(const Eigen::VectorXd& truth, const Eigen::VectorXd& model,
           bool include_outside) {
  if (truth.size() != model.size()) {
    throw std::invalid_argument("probability vectors differ in length");
  }
  double total = 0.0;
  for (Eigen::Index i = include_outside ? 0 : 1; i < truth.size(); ++i) {
    if (truth[i] <= 0.0) continue;
    if (model[i] <= 0.0) return std::numeric_limits<double>::infinity();
    total += truth[i] * std::log(truth[i] / model[i]);
  }
  return total;
}

namespace {

double pair_distance(const ProductDesign& x, const ProductDesign& ideal) {
  return 0.5 * (std::fabs(x.e - ideal.e) / ideal.e + std::fabs(x.a - ideal.a) / ideal.a);
}

// largest over `from` of the distance to its nearest same-style partner in `to`;
// the normalizing product of each pair is always the one from the ideal design
double directed_hausdorff(const std::vector<const ProductDesign*>& from,
                          const std::vector<const ProductDesign*>& to,
                          bool from_is_ideal) {
  double worst = 0.0;
  for (const ProductDesign* f : from) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const ProductDesign* t : to) {
      const double d = from_is_ideal ? pair_distance(*t, *f) : pair_distance(*f, *t);
      nearest = std::min(nearest, d);
    }
    worst = std::max(worst, nearest);
  }
  return worst;
}

}  // namespace

DesignError design_error(const PortfolioDesign& candidate, const PortfolioDesign& ideal) {
  std::map<int, std::vector<const ProductDesign*>> by_style, by_style_ideal;
  for (const ProductDesign& pr : candidate.products) by_style[pr.b].push_back(&pr);
  for (const ProductDesign& pr : ideal.products) by_style_ideal[pr.b].push_back(&pr);

  DesignError err;
  std::vector<int> styles;
  for (const auto& [b, _] : by_style) styles.push_back(b);
  for (const auto& [b, _] : by_style_ideal) styles.push_back(b);
  std::sort(styles.begin(), styles.end());
  styles.erase(std::unique(styles.begin(), styles.end()), styles.end());

  double h_fwd = 0.0, h_back = 0.0;
  for (int b : styles) {
    const auto ci = by_style.find(b);
    const auto ii = by_style_ideal.find(b);
    const double n = ci == by_style.end() ? 0.0 : ci->second.size();
    const double n_star = ii == by_style_ideal.end() ? 0.0 : ii->second.size();
    err.count_term += n_star > 0.0 ? std::fabs(n - n_star) / n_star : n;
    if (n > 0.0 && n_star > 0.0) {
      h_fwd = std::max(h_fwd, directed_hausdorff(ii->second, ci->second, true));
      h_back = std::max(h_back, directed_hausdorff(ci->second, ii->second, false));
    }
  }
  err.attribute_term = std::max(h_fwd, h_back);
  err.total = 0.5 * (err.count_term + err.attribute_term);
  return err;
}

}  // namespace vpd
