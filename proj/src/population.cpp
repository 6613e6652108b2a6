#include "vpd/population.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace vpd {

using nlohmann::json;

const std::vector<std::string>& style_names() {
  static const std::vector<std::string> names = {
      "sports car",    "hatchback", "compact sedan", "standard sedan",
      "crossover",     "small suv", "full suv",      "pickup",
      "minivan"};
  return names;
}

namespace {

// Baseline marginal acceptance rates per body style, in style order.
const std::vector<double> kAcceptanceMarginals = {0.16, 0.19, 0.38, 0.42, 0.38,
                                                  0.39, 0.29, 0.18, 0.10};

Eigen::Vector4d baseline_means() { return {2.0, -36.8, 11.3, -23.2}; }
Eigen::Vector4d baseline_sds() { return {0.1, 2.2, 0.3, 0.5}; }

}  // namespace

double true_utility(const Coefficients& c, double e, double a, double p) {
  if (!(e > 0.0) || !(a > 0.0) || !(p >= 0.0)) {
    throw std::invalid_argument("true_utility: attributes must be positive");
  }
  return -std::exp(c.price) * p + c.economy / e + c.accel / a + c.constant;
}

Individual sample_individual(const PopulationSpec& pop, Rng& rng) {
  Individual ind;
  double u = rng.uniform();
  double acc = 0.0;
  const int R = static_cast<int>(pop.rule_probs.size());
  int pick = R - 1;
  for (int r = 0; r < R; ++r) {
    acc += pop.rule_probs[r];
    if (u < acc) {
      pick = r;
      break;
    }
  }
  ind.rule.mask = static_cast<std::uint32_t>(pick + 1);
  ind.coeff.price = pop.coeff_means[0] + pop.coeff_sds[0] * rng.normal();
  ind.coeff.economy = pop.coeff_means[1] + pop.coeff_sds[1] * rng.normal();
  ind.coeff.accel = pop.coeff_means[2] + pop.coeff_sds[2] * rng.normal();
  ind.coeff.constant = pop.coeff_means[3] + pop.coeff_sds[3] * rng.normal();
  return ind;
}

double marginal_acceptance(const PopulationSpec& pop, int style) {
  double m = 0.0;
  for (std::size_t r = 0; r < pop.rule_probs.size(); ++r) {
    if ((static_cast<std::uint32_t>(r + 1) >> style) & 1u) m += pop.rule_probs[r];
  }
  return m;
}

std::vector<double> calibrate_bernoulli_marginals(const std::vector<double>& target) {
  for (double p : target) {
    if (!(p > 0.0) || !(p < 1.0)) {
      throw std::invalid_argument("acceptance marginals must lie in (0,1)");
    }
  }
  // Conditioning on "accepts at least one style" inflates every marginal by
  // 1/(1 - prod(1-q)).  Solve q_b = p_b * (1 - prod(1-q)) by fixed point so
  // the conditioned marginals land on the baseline rates exactly.
  std::vector<double> q = target;
  for (int it = 0; it < 200; ++it) {
    double none = 1.0;
    for (double qb : q) none *= 1.0 - qb;
    double shift = 0.0;
    for (std::size_t b = 0; b < q.size(); ++b) {
      double next = target[b] * (1.0 - none);
      shift = std::max(shift, std::abs(next - q[b]));
      q[b] = next;
    }
    if (shift < 1e-15) break;
  }
  return q;
}

std::vector<double> bernoulli_rule_probs(const std::vector<double>& marginals,
                                         double min_mass) {
  const int B = static_cast<int>(marginals.size());
  const int R = rule_count(B);
  std::vector<double> probs(R, 0.0);
  double total = 0.0;
  for (int mask = 1; mask <= R; ++mask) {
    double m = 1.0;
    for (int b = 0; b < B; ++b) {
      m *= ((mask >> b) & 1) ? marginals[b] : 1.0 - marginals[b];
    }
    probs[mask - 1] = m;
    total += m;
  }
  for (double& m : probs) m /= total;
  // Drop negligible rules, then renormalize what is left.
  double kept = 0.0;
  for (double& m : probs) {
    if (m < min_mass) m = 0.0;
    kept += m;
  }
  if (kept <= 0.0) throw std::runtime_error("all screening rules truncated away");
  for (double& m : probs) m /= kept;
  return probs;
}

PopulationSpec default_population() {
  PopulationSpec pop;
  pop.num_styles = kNumStyles;
  pop.coeff_means = baseline_means();
  pop.coeff_sds = baseline_sds();
  pop.rule_probs = bernoulli_rule_probs(calibrate_bernoulli_marginals(kAcceptanceMarginals));
  return pop;
}

PopulationSpec default_market_population() {
  PopulationSpec pop = default_population();
  pop.coeff_means[3] = -pop.coeff_means[3];
  return pop;
}

PopulationSpec load_population(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open population config: " + path);
  json doc = json::parse(in);

  PopulationSpec pop;
  pop.num_styles = doc.value("num_styles", kNumStyles);
  const json& co = doc.at("coefficients");
  pop.coeff_means = {co.at("price_mean").get<double>(), co.at("economy_mean").get<double>(),
                     co.at("accel_mean").get<double>(), co.at("constant_mean").get<double>()};
  pop.coeff_sds = {co.at("price_sd").get<double>(), co.at("economy_sd").get<double>(),
                   co.at("accel_sd").get<double>(), co.at("constant_sd").get<double>()};
  std::string interp = doc.value("sd_interpretation", "sd");
  if (interp == "variance") {
    pop.coeff_sds = pop.coeff_sds.cwiseSqrt();
  } else if (interp != "sd") {
    throw std::runtime_error("sd_interpretation must be 'sd' or 'variance'");
  }

  const int R = rule_count(pop.num_styles);
  if (doc.contains("rules")) {
    pop.rule_probs.assign(R, 0.0);
    for (const auto& entry : doc.at("rules")) {
      std::string bits = entry.at(0).get<std::string>();
      double prob = entry.at(1).get<double>();
      if (static_cast<int>(bits.size()) != pop.num_styles) {
        throw std::runtime_error("rule bitstring length must equal num_styles");
      }
      std::uint32_t mask = 0;
      for (int b = 0; b < pop.num_styles; ++b) {
        if (bits[b] == '1') {
          mask |= 1u << b;
        } else if (bits[b] != '0') {
          throw std::runtime_error("rule bitstring must be 0/1: " + bits);
        }
      }
      if (mask == 0) throw std::runtime_error("the all-reject rule is not admissible");
      if (prob < 0.0) throw std::runtime_error("rule probability must be nonnegative");
      if (pop.rule_probs[mask - 1] != 0.0) {
        throw std::runtime_error("duplicate rule bitstring: " + bits);
      }
      pop.rule_probs[mask - 1] = prob;
    }
    double total = std::accumulate(pop.rule_probs.begin(), pop.rule_probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::runtime_error("rule probabilities must sum to one");
    }
    for (double& m : pop.rule_probs) m /= total;
  } else if (doc.contains("marginals")) {
    std::vector<double> marg = doc.at("marginals").get<std::vector<double>>();
    if (static_cast<int>(marg.size()) != pop.num_styles) {
      throw std::runtime_error("marginals length must equal num_styles");
    }
    bool calibrate = doc.value("calibrate_marginals", true);
    if (calibrate) marg = calibrate_bernoulli_marginals(marg);
    pop.rule_probs = bernoulli_rule_probs(marg, doc.value("min_rule_mass", 1e-6));
  } else {
    throw std::runtime_error("population config needs 'rules' or 'marginals'");
  }
  return pop;
}

void save_population(const PopulationSpec& pop, const std::string& path) {
  json doc;
  doc["num_styles"] = pop.num_styles;
  doc["coefficients"] = {
      {"price_mean", pop.coeff_means[0]},    {"price_sd", pop.coeff_sds[0]},
      {"economy_mean", pop.coeff_means[1]},  {"economy_sd", pop.coeff_sds[1]},
      {"accel_mean", pop.coeff_means[2]},    {"accel_sd", pop.coeff_sds[2]},
      {"constant_mean", pop.coeff_means[3]}, {"constant_sd", pop.coeff_sds[3]}};
  doc["sd_interpretation"] = "sd";
  json rules = json::array();
  for (std::size_t r = 0; r < pop.rule_probs.size(); ++r) {
    if (pop.rule_probs[r] == 0.0) continue;
    std::string bits(pop.num_styles, '0');
    for (int b = 0; b < pop.num_styles; ++b) {
      if ((static_cast<std::uint32_t>(r + 1) >> b) & 1u) bits[b] = '1';
    }
    rules.push_back(json::array({bits, pop.rule_probs[r]}));
  }
  doc["rules"] = std::move(rules);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write population config: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace vpd
