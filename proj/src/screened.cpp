#include "vpd/screened.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace vpd {

StyleProjection project_styles(const std::vector<int>& vehicle_styles, int num_styles) {
  StyleProjection proj;
  proj.distinct = vehicle_styles;
  std::sort(proj.distinct.begin(), proj.distinct.end());
  proj.distinct.erase(std::unique(proj.distinct.begin(), proj.distinct.end()),
                      proj.distinct.end());
  proj.D = static_cast<int>(proj.distinct.size());
  proj.group.reserve(vehicle_styles.size());
  for (int b : vehicle_styles) {
    if (b < 0 || b >= num_styles) throw std::invalid_argument("style index out of range");
    proj.group.push_back(static_cast<int>(
        std::lower_bound(proj.distinct.begin(), proj.distinct.end(), b) -
        proj.distinct.begin()));
  }
  const int R = rule_count(num_styles);
  proj.rule_bucket.resize(R);
  for (int mask = 1; mask <= R; ++mask) {
    std::uint16_t pm = 0;
    for (int d = 0; d < proj.D; ++d) {
      if ((mask >> proj.distinct[d]) & 1) pm |= static_cast<std::uint16_t>(1u << d);
    }
    proj.rule_bucket[mask - 1] = pm;
  }
  return proj;
}

StyleProjection project_styles(const Market& market, int num_styles) {
  std::vector<int> styles;
  styles.reserve(market.vehicles.size());
  for (const Vehicle& v : market.vehicles) styles.push_back(v.b);
  return project_styles(styles, num_styles);
}

void bucket_weights(const StyleProjection& proj, const std::vector<double>& rule_probs,
                    std::vector<double>& weights) {
  weights.assign(std::size_t{1} << proj.D, 0.0);
  for (std::size_t r = 0; r < rule_probs.size(); ++r) {
    weights[proj.rule_bucket[r]] += rule_probs[r];
  }
}

void ScreenedWorkspace::resize(int vehicles, int D) {
  expu.resize(vehicles);
  group_sum.resize(D);
  subset_sum.resize(std::size_t{1} << D);
  gain.resize(D);
}

void accumulate_screened_probs(const StyleProjection& proj,
                               const std::vector<double>& set_weights,
                               const Eigen::VectorXd& u, double weight,
                               ScreenedWorkspace& ws, Eigen::VectorXd& probs) {
  const int J = static_cast<int>(u.size());
  const int D = proj.D;
  ws.resize(J, D);

  double shift = 0.0;
  for (int j = 0; j < J; ++j) shift = std::max(shift, u[j]);
  const double e0 = std::exp(-shift);  // outside good, shifted

  std::fill(ws.group_sum.begin(), ws.group_sum.end(), 0.0);
  for (int j = 0; j < J; ++j) {
    ws.expu[j] = std::exp(u[j] - shift);
    ws.group_sum[proj.group[j]] += ws.expu[j];
  }

  const std::size_t sets = std::size_t{1} << D;
  ws.subset_sum[0] = 0.0;
  for (std::size_t m = 1; m < sets; ++m) {
    std::size_t lsb = m & (~m + 1);
    ws.subset_sum[m] = ws.subset_sum[m ^ lsb] + ws.group_sum[std::countr_zero(lsb)];
  }

  std::fill(ws.gain.begin(), ws.gain.end(), 0.0);
  double outside = 0.0;
  for (std::size_t m = 0; m < sets; ++m) {
    double w = set_weights[m];
    if (w == 0.0) continue;
    double r = w / (e0 + ws.subset_sum[m]);
    outside += r;
    std::size_t rem = m;
    while (rem) {
      std::size_t lsb = rem & (~rem + 1);
      ws.gain[std::countr_zero(lsb)] += r;
      rem ^= lsb;
    }
  }

  probs[0] += weight * e0 * outside;
  for (int j = 0; j < J; ++j) {
    probs[j + 1] += weight * ws.expu[j] * ws.gain[proj.group[j]];
  }
}

}  // namespace vpd
