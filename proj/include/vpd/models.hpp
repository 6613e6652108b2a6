#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "vpd/market.hpp"
#include "vpd/screened.hpp"

namespace vpd {

enum class Family { mnl, rcl, nml, ctc };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// All kernels place the outside good at utility zero inside a "1 +" softmax
// denominator; probability vectors are (J+1)-long with index 0 outside.

// Homogeneous logit with effects-coded style constants (style sums to zero).
struct MnlParams {
  int B = kNumStyles;
  Eigen::Vector4d theta = Eigen::Vector4d::Zero();  // (price, economy, accel, const)
  Eigen::VectorXd style;
};

// Random-coefficients logit: every coefficient normal across individuals, the
// price coefficient log-normal through -exp(.).  Order: price, economy,
// accel, constant, then B style effects.
struct RclParams {
  int B = kNumStyles;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

// Nested logit (nesting by body style) in the product form
// P_j = P(j|nest) * P(nest); the nest utility carries theta_0 + style_b +
// lambda_b * log-sum of the within-nest exp utilities.
struct NmlParams {
  int B = kNumStyles;
  Eigen::Vector4d theta = Eigen::Vector4d::Zero();
  Eigen::VectorXd style;
  Eigen::VectorXd lambda;
};

// Consider-then-choose: a distribution over all 2^B-1 screens, compensatory
// logit within each induced consideration set (no style constants).
struct CtcParams {
  int B = kNumStyles;
  Eigen::Vector4d theta = Eigen::Vector4d::Zero();
  Eigen::VectorXd alpha;  // size 2^B-1, indexed by screen mask - 1
};

using ChoiceModel = std::variant<MnlParams, RclParams, NmlParams, CtcParams>;

Family family_of(const ChoiceModel& model);

Eigen::VectorXd mnl_probabilities(const Market& market, const MnlParams& p);
Eigen::VectorXd rcl_probabilities(const Market& market, const RclParams& p,
                                  const Eigen::MatrixXd& draws);
Eigen::VectorXd nml_probabilities(const Market& market, const NmlParams& p);
Eigen::VectorXd ctc_probabilities(const Market& market, const CtcParams& p);

// (4+B) x I standard normal draws for simulated RCL probabilities.
Eigen::MatrixXd make_standard_normal_draws(int dim, int count, std::uint64_t seed);

inline constexpr std::uint64_t kPredictionDrawSeed = 0x70726564696374ull;

// Dispatch on the stored family; `rcl_draws` is only consulted for RCL.
Eigen::VectorXd model_probabilities(const Market& market, const ChoiceModel& model,
                                    const Eigen::MatrixXd* rcl_draws = nullptr);

// ---- unconstrained reparameterization (the estimation searches this space)
//
// mnl: [theta(4), style(B-1)]                       style_B = -sum(style)
// rcl: [mean(4+B-1), raw sd(4+B)]                   sd = softplus(raw)
// nml: [theta(4), style(B-1), raw lambda(B)]        lambda = lmax*logistic(raw)
// ctc: [theta(4), z(2^B-2)]                         alpha = softmax(0, z)

int free_dim(Family f, int B);
ChoiceModel unpack_model(Family f, const Eigen::VectorXd& free, int B,
                         double lambda_max);
Eigen::VectorXd pack_model(const ChoiceModel& model, double lambda_max);

struct LogLik {
  double value = 0.0;
  Eigen::VectorXd grad;
  bool finite = true;  // false: some observed alternative has zero probability
};

struct LikelihoodOptions {
  int num_styles = kNumStyles;
  double lambda_max = 10.0;
  int rcl_draws = 1000;
  std::uint64_t rcl_draw_seed = 0;
};

// Aggregate share-weighted log likelihood with its gradient in the free
// parameterization.  Bind once per estimation so per-market projections and
// the RCL draws stay fixed across evaluations.
class LikelihoodProblem {
 public:
  LikelihoodProblem(Family family, const ShareData& data, const LikelihoodOptions& opt);

  int dim() const { return free_dim(family_, B_); }
  Family family() const { return family_; }
  int num_styles() const { return B_; }
  const Eigen::MatrixXd& draws() const { return draws_; }

  LogLik operator()(const Eigen::VectorXd& free) const;

 private:
  LogLik eval_mnl(const Eigen::VectorXd& free) const;
  LogLik eval_rcl(const Eigen::VectorXd& free) const;
  LogLik eval_nml(const Eigen::VectorXd& free) const;
  LogLik eval_ctc(const Eigen::VectorXd& free) const;

  Family family_;
  const ShareData* data_;
  int B_;
  double lambda_max_;
  Eigen::MatrixXd draws_;                 // rcl only
  std::vector<StyleProjection> proj_;     // ctc only
};

LogLik log_likelihood(Family family, const Eigen::VectorXd& free,
                      const ShareData& data, const LikelihoodOptions& opt);

}  // namespace vpd
