#include "vpd/design.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "vpd/lbfgs.hpp"
#include "vpd/rng.hpp"

namespace vpd {

namespace {

using nlohmann::json;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double y) { return std::log(y / (1.0 - y)); }

void logit_probs(const Eigen::VectorXd& u, Eigen::VectorXd& probs) {
  const int J = static_cast<int>(u.size());
  double shift = 0.0;
  for (int j = 0; j < J; ++j) shift = std::max(shift, u[j]);
  double denom = std::exp(-shift);
  probs[0] = denom;
  for (int j = 0; j < J; ++j) {
    probs[j + 1] = std::exp(u[j] - shift);
    denom += probs[j + 1];
  }
  probs /= denom;
}

struct SetWork {
  std::vector<double> E, Eg, Mg, den, Msum, gain, gainM;
};

void subset_sums(const std::vector<double>& g, std::vector<double>& s, std::size_t sets) {
  s.resize(sets);
  s[0] = 0.0;
  for (std::size_t mk = 1; mk < sets; ++mk) {
    const std::size_t lsb = mk & (~mk + 1);
    s[mk] = s[mk ^ lsb] + g[std::countr_zero(lsb)];
  }
}

// One taste draw against a screened mixture: profit is returned, probabilities
// are accumulated with weight `w` when requested, and g_j = d profit / d u_j.
double screened_profit_pass(const StyleProjection& proj, const std::vector<double>& W,
                            const Eigen::VectorXd& u, const Eigen::VectorXd& margins,
                            double w, Eigen::VectorXd* probs, Eigen::VectorXd* g,
                            SetWork& ws) {
  const int J = static_cast<int>(u.size());
  const int D = proj.D;
  const std::size_t sets = std::size_t{1} << D;

  double shift = 0.0;
  for (int j = 0; j < J; ++j) shift = std::max(shift, u[j]);
  const double e0 = std::exp(-shift);
  ws.E.resize(J);
  ws.Eg.assign(D, 0.0);
  ws.Mg.assign(D, 0.0);
  for (int j = 0; j < J; ++j) {
    ws.E[j] = std::exp(u[j] - shift);
    ws.Eg[proj.group[j]] += ws.E[j];
    ws.Mg[proj.group[j]] += ws.E[j] * margins[j];
  }
  subset_sums(ws.Eg, ws.den, sets);
  subset_sums(ws.Mg, ws.Msum, sets);

  ws.gain.assign(D, 0.0);
  ws.gainM.assign(D, 0.0);
  double out0 = 0.0, pi = 0.0;
  for (std::size_t c = 0; c < sets; ++c) {
    if (W[c] == 0.0) continue;
    const double inv = 1.0 / (e0 + ws.den[c]);
    const double r = W[c] * inv;
    out0 += r;
    pi += r * ws.Msum[c];
    std::size_t rem = c;
    while (rem) {
      const std::size_t lsb = rem & (~rem + 1);
      const int d = std::countr_zero(lsb);
      ws.gain[d] += r;
      ws.gainM[d] += r * ws.Msum[c] * inv;
      rem ^= lsb;
    }
  }
  if (probs) {
    (*probs)[0] += w * e0 * out0;
    for (int j = 0; j < J; ++j) (*probs)[j + 1] += w * ws.E[j] * ws.gain[proj.group[j]];
  }
  if (g) {
    for (int j = 0; j < J; ++j) {
      const int d = proj.group[j];
      (*g)[j] = ws.E[j] * (margins[j] * ws.gain[d] - ws.gainM[d]);
    }
  }
  return pi;
}

class MnlKernel : public DemandKernel {
 public:
  explicit MnlKernel(MnlParams p) : p_(std::move(p)) {}
  int num_styles() const override { return p_.B; }
  Eigen::VectorXd probabilities(const Market& market) const override {
    return mnl_probabilities(market, p_);
  }
  DemandEval eval(const Market& market, const Eigen::VectorXd& margins) const override {
    const int J = market.size();
    DemandEval ev;
    const double ep = std::exp(p_.theta[0]);
    Eigen::VectorXd u(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -ep * v.p + p_.theta[1] / v.e + p_.theta[2] / v.a + p_.theta[3] +
             p_.style[v.b];
    }
    ev.probs.resize(J + 1);
    logit_probs(u, ev.probs);
    ev.profit = ev.probs.tail(J).dot(margins);
    ev.dpi_dp.resize(J);
    ev.dpi_de.resize(J);
    ev.dpi_da.resize(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      const double g = ev.probs[j + 1] * (margins[j] - ev.profit);
      ev.dpi_dp[j] = g * (-ep);
      ev.dpi_de[j] = g * (-p_.theta[1] / (v.e * v.e));
      ev.dpi_da[j] = g * (-p_.theta[2] / (v.a * v.a));
    }
    return ev;
  }

 private:
  MnlParams p_;
};

class RclKernel : public DemandKernel {
 public:
  RclKernel(RclParams p, int draws, std::uint64_t seed) : p_(std::move(p)) {
    draws_ = make_standard_normal_draws(static_cast<int>(p_.mean.size()), draws, seed);
  }
  int num_styles() const override { return p_.B; }
  Eigen::VectorXd probabilities(const Market& market) const override {
    return rcl_probabilities(market, p_, draws_);
  }
  DemandEval eval(const Market& market, const Eigen::VectorXd& margins) const override {
    const int J = market.size();
    const int I = static_cast<int>(draws_.cols());
    DemandEval ev;
    ev.probs = Eigen::VectorXd::Zero(J + 1);
    ev.dpi_dp = Eigen::VectorXd::Zero(J);
    ev.dpi_de = Eigen::VectorXd::Zero(J);
    ev.dpi_da = Eigen::VectorXd::Zero(J);
    Eigen::VectorXd u(J), l(J + 1);
    for (int i = 0; i < I; ++i) {
      const double ep = std::exp(p_.mean[0] + p_.sd[0] * draws_(0, i));
      const double te = p_.mean[1] + p_.sd[1] * draws_(1, i);
      const double ta = p_.mean[2] + p_.sd[2] * draws_(2, i);
      const double t0 = p_.mean[3] + p_.sd[3] * draws_(3, i);
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        const int k = 4 + v.b;
        u[j] = -ep * v.p + te / v.e + ta / v.a + t0 + p_.mean[k] + p_.sd[k] * draws_(k, i);
      }
      logit_probs(u, l);
      ev.probs += l;
      double pi = 0.0;
      for (int j = 0; j < J; ++j) pi += l[j + 1] * margins[j];
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        const double g = l[j + 1] * (margins[j] - pi);
        ev.dpi_dp[j] += g * (-ep);
        ev.dpi_de[j] += g * (-te / (v.e * v.e));
        ev.dpi_da[j] += g * (-ta / (v.a * v.a));
      }
    }
    const double invI = 1.0 / static_cast<double>(I);
    ev.probs *= invI;
    ev.dpi_dp *= invI;
    ev.dpi_de *= invI;
    ev.dpi_da *= invI;
    ev.profit = ev.probs.tail(J).dot(margins);
    return ev;
  }

 private:
  RclParams p_;
  Eigen::MatrixXd draws_;
};

class NmlKernel : public DemandKernel {
 public:
  explicit NmlKernel(NmlParams p) : p_(std::move(p)) {}
  int num_styles() const override { return p_.B; }
  Eigen::VectorXd probabilities(const Market& market) const override {
    return nml_probabilities(market, p_);
  }
  DemandEval eval(const Market& market, const Eigen::VectorXd& margins) const override {
    const int J = market.size();
    const double ep = std::exp(p_.theta[0]);

    std::vector<int> nests;
    for (const Vehicle& v : market.vehicles) nests.push_back(v.b);
    std::sort(nests.begin(), nests.end());
    nests.erase(std::unique(nests.begin(), nests.end()), nests.end());
    const int NB = static_cast<int>(nests.size());

    Eigen::VectorXd u(J);
    std::vector<int> nest_of(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -ep * v.p + p_.theta[1] / v.e + p_.theta[2] / v.a;
      nest_of[j] = static_cast<int>(
          std::lower_bound(nests.begin(), nests.end(), v.b) - nests.begin());
    }
    Eigen::VectorXd V(NB), z(NB);
    for (int n = 0; n < NB; ++n) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < J; ++j)
        if (nest_of[j] == n) mx = std::max(mx, u[j]);
      double s = 0.0;
      for (int j = 0; j < J; ++j)
        if (nest_of[j] == n) s += std::exp(u[j] - mx);
      V[n] = mx + std::log(s);
      z[n] = p_.theta[3] + p_.style[nests[n]] + p_.lambda[nests[n]] * V[n];
    }
    const double zshift = std::max(0.0, z.maxCoeff());
    double zden = std::exp(-zshift);
    Eigen::VectorXd Q(NB);
    for (int n = 0; n < NB; ++n) {
      Q[n] = std::exp(z[n] - zshift);
      zden += Q[n];
    }
    Q /= zden;

    DemandEval ev;
    ev.probs.resize(J + 1);
    ev.probs[0] = std::exp(-zshift) / zden;
    Eigen::VectorXd nj(J);
    Eigen::VectorXd Wn = Eigen::VectorXd::Zero(NB);  // within-nest expected margin
    for (int j = 0; j < J; ++j) {
      nj[j] = std::exp(u[j] - V[nest_of[j]]);
      ev.probs[j + 1] = nj[j] * Q[nest_of[j]];
      Wn[nest_of[j]] += nj[j] * margins[j];
    }
    ev.profit = ev.probs.tail(J).dot(margins);
    ev.dpi_dp.resize(J);
    ev.dpi_de.resize(J);
    ev.dpi_da.resize(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      const int n = nest_of[j];
      const double lam = p_.lambda[nests[n]];
      const double g =
          nj[j] * Q[n] * ((margins[j] - Wn[n]) + lam * (Wn[n] - ev.profit));
      ev.dpi_dp[j] = g * (-ep);
      ev.dpi_de[j] = g * (-p_.theta[1] / (v.e * v.e));
      ev.dpi_da[j] = g * (-p_.theta[2] / (v.a * v.a));
    }
    return ev;
  }

 private:
  NmlParams p_;
};

class CtcKernel : public DemandKernel {
 public:
  explicit CtcKernel(CtcParams p) : p_(std::move(p)) {
    rule_probs_.assign(p_.alpha.data(), p_.alpha.data() + p_.alpha.size());
  }
  int num_styles() const override { return p_.B; }
  Eigen::VectorXd probabilities(const Market& market) const override {
    return ctc_probabilities(market, p_);
  }
  DemandEval eval(const Market& market, const Eigen::VectorXd& margins) const override {
    const int J = market.size();
    StyleProjection proj = project_styles(market, p_.B);
    std::vector<double> W;
    bucket_weights(proj, rule_probs_, W);

    const double ep = std::exp(p_.theta[0]);
    Eigen::VectorXd u(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -ep * v.p + p_.theta[1] / v.e + p_.theta[2] / v.a + p_.theta[3];
    }
    DemandEval ev;
    ev.probs = Eigen::VectorXd::Zero(J + 1);
    Eigen::VectorXd g(J);
    SetWork ws;
    ev.profit = screened_profit_pass(proj, W, u, margins, 1.0, &ev.probs, &g, ws);
    ev.dpi_dp.resize(J);
    ev.dpi_de.resize(J);
    ev.dpi_da.resize(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      ev.dpi_dp[j] = g[j] * (-ep);
      ev.dpi_de[j] = g[j] * (-p_.theta[1] / (v.e * v.e));
      ev.dpi_da[j] = g[j] * (-p_.theta[2] / (v.a * v.a));
    }
    return ev;
  }

 private:
  CtcParams p_;
  std::vector<double> rule_probs_;
};

class TruthKernel : public DemandKernel {
 public:
  TruthKernel(PopulationSpec pop, TasteDraws draws)
      : pop_(std::move(pop)), draws_(std::move(draws)) {}
  int num_styles() const override { return pop_.num_styles; }
  Eigen::VectorXd probabilities(const Market& market) const override {
    return true_choice_probability(market, pop_, draws_);
  }
  DemandEval eval(const Market& market, const Eigen::VectorXd& margins) const override {
    const int J = market.size();
    StyleProjection proj = project_styles(market, pop_.num_styles);
    std::vector<double> W;
    bucket_weights(proj, pop_.rule_probs, W);

    const int I = draws_.count();
    const double invI = 1.0 / static_cast<double>(I);
    DemandEval ev;
    ev.probs = Eigen::VectorXd::Zero(J + 1);
    ev.dpi_dp = Eigen::VectorXd::Zero(J);
    ev.dpi_de = Eigen::VectorXd::Zero(J);
    ev.dpi_da = Eigen::VectorXd::Zero(J);
    Eigen::VectorXd u(J), g(J);
    SetWork ws;
    for (int i = 0; i < I; ++i) {
      const double te = draws_.theta(1, i);
      const double ta = draws_.theta(2, i);
      const double t0 = draws_.theta(3, i);
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        u[j] = -draws_.exp_price[i] * v.p + te / v.e + ta / v.a + t0;
      }
      screened_profit_pass(proj, W, u, margins, invI, &ev.probs, &g, ws);
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        ev.dpi_dp[j] += invI * g[j] * (-draws_.exp_price[i]);
        ev.dpi_de[j] += invI * g[j] * (-te / (v.e * v.e));
        ev.dpi_da[j] += invI * g[j] * (-ta / (v.a * v.a));
      }
    }
    ev.profit = ev.probs.tail(J).dot(margins);
    return ev;
  }

 private:
  PopulationSpec pop_;
  TasteDraws draws_;
};

// ---- inner (continuous) problem

struct SlotBounds {
  double a_lo, a_hi;
};

struct InnerProblem {
  const DemandKernel* kernel;
  const EngineeringConfig* eng;
  std::vector<int> styles;
  std::vector<SlotBounds> bounds;
  double p_lo, p_hi;
  bool prices_only = false;
  std::vector<double> fixed_a;  // used when prices_only

  int dim() const {
    return prices_only ? static_cast<int>(styles.size())
                       : 2 * static_cast<int>(styles.size());
  }

  void decode(const Eigen::VectorXd& t, PortfolioDesign& d) const {
    const int K = static_cast<int>(styles.size());
    d.products.resize(K);
    for (int k = 0; k < K; ++k) {
      ProductDesign& pr = d.products[k];
      pr.b = styles[k];
      if (prices_only) {
        pr.a = fixed_a[k];
        pr.p = p_lo + (p_hi - p_lo) * logistic(t[k]);
      } else {
        pr.a = bounds[k].a_lo + (bounds[k].a_hi - bounds[k].a_lo) * logistic(t[k]);
        pr.p = p_lo + (p_hi - p_lo) * logistic(t[K + k]);
      }
      pr.e = feasible_fuel_economy(eng->style(pr.b), pr.a);
    }
  }

  double operator()(const Eigen::VectorXd& t, Eigen::VectorXd& grad) const {
    const int K = static_cast<int>(styles.size());
    PortfolioDesign d;
    decode(t, d);
    Market market = to_market(d);
    Eigen::VectorXd margins(K);
    for (int k = 0; k < K; ++k) {
      margins[k] = d.products[k].p - unit_cost(eng->style(d.products[k].b),
                                               d.products[k].a);
    }
    DemandEval ev = kernel->eval(market, margins);
    grad.resize(dim());
    for (int k = 0; k < K; ++k) {
      const ProductDesign& pr = d.products[k];
      const StyleEngineering& se = eng->style(pr.b);
      const double dpi_dprice = ev.dpi_dp[k] + ev.probs[k + 1];
      if (prices_only) {
        const double sp = logistic(t[k]);
        grad[k] = -dpi_dprice * (p_hi - p_lo) * sp * (1.0 - sp);
      } else {
        const double dpi_daccel = ev.dpi_de[k] * economy_slope(se, pr.a) +
                                  ev.dpi_da[k] - ev.probs[k + 1] * cost_slope(se, pr.a);
        const double sa = logistic(t[k]);
        const double sp = logistic(t[K + k]);
        grad[k] = -dpi_daccel * (bounds[k].a_hi - bounds[k].a_lo) * sa * (1.0 - sa);
        grad[K + k] = -dpi_dprice * (p_hi - p_lo) * sp * (1.0 - sp);
      }
    }
    return -ev.profit;
  }
};

InnerResult solve_inner(const InnerProblem& prob, const InnerOptions& opt,
                        const std::vector<Eigen::VectorXd>& starts) {
  optim::Options oopt;
  oopt.max_iterations = opt.max_iterations;
  oopt.gradient_tol = opt.gradient_tol;
  optim::Objective obj = [&prob](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
    return prob(t, g);
  };
  InnerResult best;
  best.profit = -std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& t0 : starts) {
    optim::Result r = optim::minimize(obj, t0, oopt);
    best.evaluations += r.evaluations;
    if (-r.f > best.profit) {
      best.profit = -r.f;
      prob.decode(r.x, best.design);
    }
  }
  for (const ProductDesign& pr : best.design.products) {
    if (pr.p > prob.p_hi - 1e-3) best.price_cap_active = true;
  }
  return best;
}

std::uint64_t styles_hash(const std::vector<int>& styles) {
  std::uint64_t h = 1469598103934665603ull;
  for (int s : styles) {
    h ^= static_cast<std::uint64_t>(s + 1);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Market to_market(const PortfolioDesign& design) {
  Market market;
  for (const ProductDesign& pr : design.products) {
    market.vehicles.push_back(Vehicle{pr.e, pr.a, pr.p, pr.b});
  }
  return market;
}

std::vector<int> portfolio_styles(const PortfolioDesign& design) {
  std::vector<int> styles;
  for (const ProductDesign& pr : design.products) styles.push_back(pr.b);
  return styles;
}

std::unique_ptr<DemandKernel> make_model_kernel(const ChoiceModel& model, int rcl_draws,
                                                std::uint64_t rcl_seed) {
  if (const auto* p = std::get_if<MnlParams>(&model)) {
    return std::make_unique<MnlKernel>(*p);
  }
  if (const auto* p = std::get_if<RclParams>(&model)) {
    return std::make_unique<RclKernel>(*p, rcl_draws, rcl_seed);
  }
  if (const auto* p = std::get_if<NmlParams>(&model)) {
    return std::make_unique<NmlKernel>(*p);
  }
  return std::make_unique<CtcKernel>(std::get<CtcParams>(model));
}

std::unique_ptr<DemandKernel> make_truth_kernel(const PopulationSpec& pop,
                                                const TasteDraws& draws) {
  return std::make_unique<TruthKernel>(pop, draws);
}

InnerResult optimize_attributes(const DemandKernel& kernel, const EngineeringConfig& eng,
                                const std::vector<int>& styles, const InnerOptions& opt) {
  if (styles.empty()) throw std::invalid_argument("no product slots to optimize");
  InnerProblem prob;
  prob.kernel = &kernel;
  prob.eng = &eng;
  prob.styles = styles;
  prob.p_lo = opt.price_floor;
  prob.p_hi = opt.price_cap;
  for (int b : styles) {
    auto [lo, hi] = feasible_accel_interval(eng.style(b));
    prob.bounds.push_back({lo, hi});
  }

  const int K = static_cast<int>(styles.size());
  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd t0 = Eigen::VectorXd::Zero(2 * K);
  const double tp_mid = logit((3.5 - opt.price_floor) / (opt.price_cap - opt.price_floor));
  for (int k = 0; k < K; ++k) t0[K + k] = tp_mid;
  starts.push_back(t0);
  Rng rng(seed_mix(opt.seed, "inner-starts"));
  for (int s = 1; s < std::max(1, opt.multistart); ++s) {
    Eigen::VectorXd t(2 * K);
    for (int k = 0; k < 2 * K; ++k) t[k] = rng.uniform(-2.0, 2.0);
    starts.push_back(t);
  }
  return solve_inner(prob, opt, starts);
}

InnerResult optimize_prices(const DemandKernel& kernel, const EngineeringConfig& eng,
                            const PortfolioDesign& design, const InnerOptions& opt) {
  if (design.products.empty()) throw std::invalid_argument("empty portfolio");
  InnerProblem prob;
  prob.kernel = &kernel;
  prob.eng = &eng;
  prob.prices_only = true;
  prob.p_lo = opt.price_floor;
  prob.p_hi = opt.price_cap;
  for (const ProductDesign& pr : design.products) {
    prob.styles.push_back(pr.b);
    prob.fixed_a.push_back(pr.a);
  }
  const int K = static_cast<int>(prob.styles.size());
  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd t0(K);
  for (int k = 0; k < K; ++k) {
    const double span = prob.p_hi - prob.p_lo;
    double frac = (design.products[k].p - prob.p_lo) / span;
    frac = std::clamp(frac, 1e-4, 1.0 - 1e-4);
    t0[k] = logit(frac);
  }
  starts.push_back(t0);
  Rng rng(seed_mix(opt.seed, "reprice-starts"));
  for (int s = 1; s < std::max(1, opt.multistart); ++s) {
    Eigen::VectorXd t = t0;
    for (int k = 0; k < K; ++k) t[k] += rng.uniform(-1.0, 1.0);
    starts.push_back(t);
  }
  return solve_inner(prob, opt, starts);
}

DesignResult optimize_portfolio(const DemandKernel& kernel, const EngineeringConfig& eng,
                                const OuterOptions& opt) {
  const int B = kernel.num_styles();
  const int slots = opt.max_products;
  if (slots < 1) throw std::invalid_argument("max_products must be at least 1");

  Rng rng(seed_mix(opt.seed, "ga"));
  auto repair = [&](std::vector<int>& genome) {
    if (std::all_of(genome.begin(), genome.end(), [](int g) { return g < 0; })) {
      genome[rng.uniform_int(0, slots - 1)] = rng.uniform_int(0, B - 1);
    }
  };

  std::vector<std::vector<int>> pop(opt.population);
  for (auto& genome : pop) {
    genome.resize(slots);
    for (int& g : genome) g = rng.uniform_int(-1, B - 1);
    repair(genome);
  }

  std::map<std::vector<int>, InnerResult> memo;
  auto fitness = [&](const std::vector<int>& genome) -> const InnerResult& {
    std::vector<int> key;
    for (int g : genome)
      if (g >= 0) key.push_back(g);
    std::sort(key.begin(), key.end());
    auto it = memo.find(key);
    if (it == memo.end()) {
      InnerOptions io = opt.inner;
      io.seed = seed_mix(opt.seed, "inner", styles_hash(key));
      it = memo.emplace(key, optimize_attributes(kernel, eng, key, io)).first;
    }
    return it->second;
  };

  double best_profit = -std::numeric_limits<double>::infinity();
  std::vector<int> best_genome;
  int stall = 0;
  int gen = 0;
  const int max_gen = std::max(1, opt.generations);
  std::vector<double> fit(opt.population);
  for (; gen < max_gen; ++gen) {
    for (int i = 0; i < opt.population; ++i) fit[i] = fitness(pop[i]).profit;
    std::vector<int> order(opt.population);
    for (int i = 0; i < opt.population; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fit[a] > fit[b]; });
    if (fit[order[0]] > best_profit + 1e-12) {
      best_profit = fit[order[0]];
      best_genome = pop[order[0]];
      stall = 0;
    } else {
      ++stall;
    }
    if (stall >= opt.stall_generations) break;

    std::vector<std::vector<int>> next;
    next.reserve(opt.population);
    for (int e = 0; e < opt.elitism && e < opt.population; ++e) next.push_back(pop[order[e]]);
    auto tournament = [&]() -> const std::vector<int>& {
      int winner = rng.uniform_int(0, opt.population - 1);
      for (int t = 1; t < opt.tournament; ++t) {
        const int challenger = rng.uniform_int(0, opt.population - 1);
        if (fit[challenger] > fit[winner]) winner = challenger;
      }
      return pop[winner];
    };
    while (static_cast<int>(next.size()) < opt.population) {
      std::vector<int> child = tournament();
      if (rng.uniform() < opt.crossover_rate) {
        const std::vector<int>& other = tournament();
        for (int k = 0; k < slots; ++k) {
          if (rng.uniform() < 0.5) child[k] = other[k];
        }
      }
      for (int k = 0; k < slots; ++k) {
        if (rng.uniform() < 1.0 / slots) child[k] = rng.uniform_int(-1, B - 1);
      }
      repair(child);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }

  // polish the winner with a proper multistart
  std::vector<int> key;
  for (int g : best_genome)
    if (g >= 0) key.push_back(g);
  std::sort(key.begin(), key.end());
  InnerOptions io = opt.inner;
  io.multistart = std::max(opt.refine_multistart, opt.inner.multistart);
  io.seed = seed_mix(opt.seed, "refine", styles_hash(key));
  InnerResult refined = optimize_attributes(kernel, eng, key, io);
  const InnerResult& base = fitness(best_genome);
  const InnerResult& winner = refined.profit >= base.profit ? refined : base;

  DesignResult out;
  out.design = winner.design;
  out.profit = winner.profit;
  out.generations = gen;
  out.inner_solves = static_cast<int>(memo.size());
  out.price_cap_active = winner.price_cap_active;
  return out;
}

ProfitEstimate true_profit(const PortfolioDesign& design, const PopulationSpec& pop,
                           const EngineeringConfig& eng, const TasteDraws& draws) {
  if (design.products.empty()) throw std::invalid_argument("empty portfolio");
  Market market = to_market(design);
  StyleProjection proj = project_styles(market, pop.num_styles);
  std::vector<double> W;
  bucket_weights(proj, pop.rule_probs, W);
  const int J = market.size();
  Eigen::VectorXd margins(J);
  for (int j = 0; j < J; ++j) {
    margins[j] = design.products[j].p -
                 unit_cost(eng.style(design.products[j].b), design.products[j].a);
  }
  const int I = draws.count();
  Eigen::VectorXd u(J);
  SetWork ws;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -draws.exp_price[i] * v.p + draws.theta(1, i) / v.e +
             draws.theta(2, i) / v.a + draws.theta(3, i);
    }
    const double pi = screened_profit_pass(proj, W, u, margins, 0.0, nullptr, nullptr, ws);
    const double delta = pi - mean;
    mean += delta / (i + 1);
    m2 += delta * (pi - mean);
  }
  ProfitEstimate est;
  est.value = mean;
  est.se = I > 1 ? std::sqrt(m2 / (static_cast<double>(I) * (I - 1))) : 0.0;
  return est;
}

void save_design(const PortfolioDesign& design, const std::string& path) {
  json j;
  j["schema"] = 1;
  json arr = json::array();
  for (const ProductDesign& pr : design.products) {
    arr.push_back({{"b", pr.b + 1}, {"a", pr.a}, {"e", pr.e}, {"p", pr.p}});
  }
  j["products"] = arr;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write design file: " + path);
  out << j.dump(2) << '\n';
}

PortfolioDesign load_design(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read design file: " + path);
  json j = json::parse(in);
  PortfolioDesign d;
  for (const json& pj : j.at("products")) {
    ProductDesign pr;
    pr.b = pj.at("b").get<int>() - 1;
    pr.a = pj.at("a").get<double>();
    pr.e = pj.at("e").get<double>();
    pr.p = pj.at("p").get<double>();
    d.products.push_back(pr);
  }
  return d;
}

}  // namespace vpd
