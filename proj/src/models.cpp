#include "vpd/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vpd/rng.hpp"

namespace vpd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Stable softmax over vehicle utilities with the outside good pinned at zero.
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

Eigen::VectorXd expand_style(const Eigen::VectorXd& free_style, int B) {
  Eigen::VectorXd style(B);
  style.head(B - 1) = free_style;
  style[B - 1] = -free_style.sum();
  return style;
}

void fold_style_grad(const Eigen::VectorXd& grad_style, Eigen::Ref<Eigen::VectorXd> out) {
  const int B = static_cast<int>(grad_style.size());
  for (int c = 0; c + 1 < B; ++c) out[c] += grad_style[c] - grad_style[B - 1];
}

void check_market_styles(const ShareData& data, int B) {
  for (std::size_t m = 0; m < data.markets.size(); ++m) {
    if (data.shares[m].size() != data.markets[m].size() + 1) {
      throw std::invalid_argument("share vector length mismatch");
    }
    for (const Vehicle& v : data.markets[m].vehicles) {
      if (v.b < 0 || v.b >= B) throw std::invalid_argument("style index out of range");
    }
  }
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::mnl: return "mnl";
    case Family::rcl: return "rcl";
    case Family::nml: return "nml";
    case Family::ctc: return "ctc";
  }
  throw std::logic_error("unknown family");
}

Family family_from_name(const std::string& name) {
  if (name == "mnl") return Family::mnl;
  if (name == "rcl") return Family::rcl;
  if (name == "nml") return Family::nml;
  if (name == "ctc") return Family::ctc;
  throw std::invalid_argument("unknown model family: " + name);
}

Family family_of(const ChoiceModel& model) {
  return static_cast<Family>(model.index());
}

Eigen::VectorXd mnl_probabilities(const Market& market, const MnlParams& p) {
  const int J = market.size();
  const double ep = std::exp(p.theta[0]);
  Eigen::VectorXd u(J);
  for (int j = 0; j < J; ++j) {
    const Vehicle& v = market.vehicles[j];
    u[j] = -ep * v.p + p.theta[1] / v.e + p.theta[2] / v.a + p.theta[3] + p.style[v.b];
  }
  Eigen::VectorXd probs(J + 1);
  logit_probs(u, probs);
  return probs;
}

Eigen::VectorXd rcl_probabilities(const Market& market, const RclParams& p,
                                  const Eigen::MatrixXd& draws) {
  const int J = market.size();
  const int I = static_cast<int>(draws.cols());
  if (draws.rows() != p.mean.size()) {
    throw std::invalid_argument("rcl draws dimension mismatch");
  }
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(J + 1);
  Eigen::VectorXd u(J), l(J + 1);
  for (int i = 0; i < I; ++i) {
    const double ep = std::exp(p.mean[0] + p.sd[0] * draws(0, i));
    const double te = p.mean[1] + p.sd[1] * draws(1, i);
    const double ta = p.mean[2] + p.sd[2] * draws(2, i);
    const double t0 = p.mean[3] + p.sd[3] * draws(3, i);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      const int k = 4 + v.b;
      u[j] = -ep * v.p + te / v.e + ta / v.a + t0 + p.mean[k] + p.sd[k] * draws(k, i);
    }
    logit_probs(u, l);
    probs += l;
  }
  return probs / static_cast<double>(I);
}

Eigen::VectorXd nml_probabilities(const Market& market, const NmlParams& p) {
  const int J = market.size();
  const double ep = std::exp(p.theta[0]);

  std::vector<int> nests;  // occupied styles, ascending
  for (const Vehicle& v : market.vehicles) nests.push_back(v.b);
  std::sort(nests.begin(), nests.end());
  nests.erase(std::unique(nests.begin(), nests.end()), nests.end());

  Eigen::VectorXd u(J);
  for (int j = 0; j < J; ++j) {
    const Vehicle& v = market.vehicles[j];
    u[j] = -ep * v.p + p.theta[1] / v.e + p.theta[2] / v.a;
  }

  const int NB = static_cast<int>(nests.size());
  Eigen::VectorXd V(NB), z(NB);
  for (int n = 0; n < NB; ++n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < J; ++j) {
      if (market.vehicles[j].b == nests[n]) mx = std::max(mx, u[j]);
    }
    double s = 0.0;
    for (int j = 0; j < J; ++j) {
      if (market.vehicles[j].b == nests[n]) s += std::exp(u[j] - mx);
    }
    V[n] = mx + std::log(s);
    z[n] = p.theta[3] + p.style[nests[n]] + p.lambda[nests[n]] * V[n];
  }

  double zshift = std::max(0.0, z.maxCoeff());
  double zden = std::exp(-zshift);
  Eigen::VectorXd Q(NB);
  for (int n = 0; n < NB; ++n) {
    Q[n] = std::exp(z[n] - zshift);
    zden += Q[n];
  }
  Q /= zden;

  Eigen::VectorXd probs(J + 1);
  probs[0] = std::exp(-zshift) / zden;
  for (int j = 0; j < J; ++j) {
    int n = static_cast<int>(std::lower_bound(nests.begin(), nests.end(),
                                              market.vehicles[j].b) -
                             nests.begin());
    probs[j + 1] = std::exp(u[j] - V[n]) * Q[n];
  }
  return probs;
}

Eigen::VectorXd ctc_probabilities(const Market& market, const CtcParams& p) {
  if (static_cast<int>(p.alpha.size()) != rule_count(p.B)) {
    throw std::invalid_argument("ctc alpha has wrong length");
  }
  StyleProjection proj = project_styles(market, p.B);
  std::vector<double> rule_probs(p.alpha.data(), p.alpha.data() + p.alpha.size());
  std::vector<double> weights;
  bucket_weights(proj, rule_probs, weights);

  const int J = market.size();
  const double ep = std::exp(p.theta[0]);
  Eigen::VectorXd u(J);
  for (int j = 0; j < J; ++j) {
    const Vehicle& v = market.vehicles[j];
    u[j] = -ep * v.p + p.theta[1] / v.e + p.theta[2] / v.a + p.theta[3];
  }
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(J + 1);
  ScreenedWorkspace ws;
  accumulate_screened_probs(proj, weights, u, 1.0, ws, probs);
  return probs;
}

Eigen::MatrixXd make_standard_normal_draws(int dim, int count, std::uint64_t seed) {
  Eigen::MatrixXd draws(dim, count);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k < dim; ++k) draws(k, i) = rng.normal();
  }
  return draws;
}

Eigen::VectorXd model_probabilities(const Market& market, const ChoiceModel& model,
                                    const Eigen::MatrixXd* rcl_draws) {
  if (const auto* p = std::get_if<MnlParams>(&model)) return mnl_probabilities(market, *p);
  if (const auto* p = std::get_if<RclParams>(&model)) {
    Eigen::MatrixXd local;
    if (!rcl_draws) {
      local = make_standard_normal_draws(static_cast<int>(p->mean.size()), 1000,
                                         kPredictionDrawSeed);
      rcl_draws = &local;
    }
    return rcl_probabilities(market, *p, *rcl_draws);
  }
  if (const auto* p = std::get_if<NmlParams>(&model)) return nml_probabilities(market, *p);
  return ctc_probabilities(market, std::get<CtcParams>(model));
}

int free_dim(Family f, int B) {
  switch (f) {
    case Family::mnl: return 3 + B;
    case Family::rcl: return 2 * B + 7;
    case Family::nml: return 2 * B + 3;
    case Family::ctc: return 3 + rule_count(B);
  }
  throw std::logic_error("unknown family");
}

ChoiceModel unpack_model(Family f, const Eigen::VectorXd& free, int B,
                         double lambda_max) {
  if (free.size() != free_dim(f, B)) {
    throw std::invalid_argument("free parameter vector has wrong length");
  }
  switch (f) {
    case Family::mnl: {
      MnlParams p;
      p.B = B;
      p.theta = free.head<4>();
      p.style = expand_style(free.segment(4, B - 1), B);
      return p;
    }
    case Family::rcl: {
      RclParams p;
      p.B = B;
      p.mean.resize(4 + B);
      p.mean.head(4) = free.head(4);
      p.mean.segment(4, B - 1) = free.segment(4, B - 1);
      p.mean[3 + B] = -free.segment(4, B - 1).sum();
      p.sd.resize(4 + B);
      for (int k = 0; k < 4 + B; ++k) p.sd[k] = softplus(free[3 + B + k]);
      return p;
    }
    case Family::nml: {
      NmlParams p;
      p.B = B;
      p.theta = free.head<4>();
      p.style = expand_style(free.segment(4, B - 1), B);
      p.lambda.resize(B);
      for (int b = 0; b < B; ++b) p.lambda[b] = lambda_max * logistic(free[3 + B + b]);
      return p;
    }
    case Family::ctc: {
      CtcParams p;
      p.B = B;
      p.theta = free.head<4>();
      const int R = rule_count(B);
      Eigen::VectorXd z(R);
      z[0] = 0.0;
      z.tail(R - 1) = free.tail(R - 1);
      double zmax = z.maxCoeff();
      p.alpha = (z.array() - zmax).exp();
      p.alpha /= p.alpha.sum();
      return p;
    }
  }
  throw std::logic_error("unknown family");
}

Eigen::VectorXd pack_model(const ChoiceModel& model, double lambda_max) {
  if (const auto* p = std::get_if<MnlParams>(&model)) {
    Eigen::VectorXd free(free_dim(Family::mnl, p->B));
    free.head<4>() = p->theta;
    free.segment(4, p->B - 1) = p->style.head(p->B - 1);
    return free;
  }
  if (const auto* p = std::get_if<RclParams>(&model)) {
    const int B = p->B;
    Eigen::VectorXd free(free_dim(Family::rcl, B));
    free.head(3 + B) = p->mean.head(3 + B);
    for (int k = 0; k < 4 + B; ++k) free[3 + B + k] = softplus_inv(p->sd[k]);
    return free;
  }
  if (const auto* p = std::get_if<NmlParams>(&model)) {
    const int B = p->B;
    Eigen::VectorXd free(free_dim(Family::nml, B));
    free.head<4>() = p->theta;
    free.segment(4, B - 1) = p->style.head(B - 1);
    for (int b = 0; b < B; ++b) {
      double s = p->lambda[b] / lambda_max;
      free[3 + B + b] = std::log(s / (1.0 - s));
    }
    return free;
  }
  const auto& p = std::get<CtcParams>(model);
  const int R = rule_count(p.B);
  Eigen::VectorXd free(free_dim(Family::ctc, p.B));
  free.head<4>() = p.theta;
  for (int r = 1; r < R; ++r) free[3 + r] = std::log(p.alpha[r] / p.alpha[0]);
  return free;
}

LikelihoodProblem::LikelihoodProblem(Family family, const ShareData& data,
                                     const LikelihoodOptions& opt)
    : family_(family), data_(&data), B_(opt.num_styles), lambda_max_(opt.lambda_max) {
  if (data.markets.empty()) throw std::invalid_argument("no markets in share data");
  check_market_styles(data, B_);
  if (family_ == Family::rcl) {
    draws_ = make_standard_normal_draws(4 + B_, opt.rcl_draws, opt.rcl_draw_seed);
  }
  if (family_ == Family::ctc) {
    proj_.reserve(data.markets.size());
    for (const Market& market : data.markets) proj_.push_back(project_styles(market, B_));
  }
}

LogLik LikelihoodProblem::operator()(const Eigen::VectorXd& free) const {
  if (free.size() != dim()) throw std::invalid_argument("free vector has wrong length");
  switch (family_) {
    case Family::mnl: return eval_mnl(free);
    case Family::rcl: return eval_rcl(free);
    case Family::nml: return eval_nml(free);
    case Family::ctc: return eval_ctc(free);
  }
  throw std::logic_error("unknown family");
}

LogLik LikelihoodProblem::eval_mnl(const Eigen::VectorXd& free) const {
  const int B = B_;
  LogLik out;
  out.grad = Eigen::VectorXd::Zero(dim());
  Eigen::VectorXd style = expand_style(free.segment(4, B - 1), B);
  Eigen::VectorXd grad_style = Eigen::VectorXd::Zero(B);
  const double ep = std::exp(free[0]);

  Eigen::VectorXd u, probs;
  for (std::size_t m = 0; m < data_->markets.size(); ++m) {
    const Market& market = data_->markets[m];
    const Eigen::VectorXd& S = data_->shares[m];
    const int J = market.size();
    u.resize(J);
    probs.resize(J + 1);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -ep * v.p + free[1] / v.e + free[2] / v.a + free[3] + style[v.b];
    }
    logit_probs(u, probs);
    for (int j = 0; j <= J; ++j) {
      if (S[j] <= 0.0) continue;
      if (probs[j] <= 0.0) {
        out.finite = false;
        out.value = kNegInf;
        return out;
      }
      out.value += S[j] * std::log(probs[j]);
    }
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      const double c = S[j + 1] - probs[j + 1];
      out.grad[0] += c * (-ep * v.p);
      out.grad[1] += c / v.e;
      out.grad[2] += c / v.a;
      out.grad[3] += c;
      grad_style[v.b] += c;
    }
  }
  fold_style_grad(grad_style, out.grad.segment(4, B - 1));
  return out;
}

LogLik LikelihoodProblem::eval_rcl(const Eigen::VectorXd& free) const {
  const int B = B_;
  const int K = 4 + B;
  const int I = static_cast<int>(draws_.cols());
  LogLik out;
  out.grad = Eigen::VectorXd::Zero(dim());

  Eigen::VectorXd mean(K);
  mean.head(3 + B) = free.head(3 + B);
  mean[3 + B] = -free.segment(4, B - 1).sum();
  Eigen::VectorXd sd(K), dsd(K);
  for (int k = 0; k < K; ++k) {
    sd[k] = softplus(free[3 + B + k]);
    dsd[k] = logistic(free[3 + B + k]);  // d softplus
  }

  // coefficient draws, shared across markets
  Eigen::MatrixXd theta = (sd.asDiagonal() * draws_).colwise() + mean;
  Eigen::VectorXd expp(I);
  for (int i = 0; i < I; ++i) expp[i] = std::exp(theta(0, i));

  Eigen::VectorXd grad_theta = Eigen::VectorXd::Zero(K);  // vs means
  Eigen::VectorXd grad_sd = Eigen::VectorXd::Zero(K);

  Eigen::MatrixXd L;       // (J+1) x I per-draw choice probabilities
  Eigen::VectorXd u, probs, sp;
  Eigen::VectorXd styleA(B), styleV(B);
  styleA.setZero();
  styleV.setZero();
  for (std::size_t m = 0; m < data_->markets.size(); ++m) {
    const Market& market = data_->markets[m];
    const Eigen::VectorXd& S = data_->shares[m];
    const int J = market.size();
    L.resize(J + 1, I);
    u.resize(J);
    probs.resize(J + 1);
    std::vector<int> occupied;
    for (const Vehicle& v : market.vehicles) occupied.push_back(v.b);
    std::sort(occupied.begin(), occupied.end());
    occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());

    for (int i = 0; i < I; ++i) {
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        u[j] = -expp[i] * v.p + theta(1, i) / v.e + theta(2, i) / v.a + theta(3, i) +
               theta(4 + v.b, i);
      }
      logit_probs(u, probs);
      L.col(i) = probs;
    }
    Eigen::VectorXd P = L.rowwise().mean();
    sp.resize(J + 1);
    for (int j = 0; j <= J; ++j) {
      if (S[j] > 0.0 && P[j] <= 0.0) {
        out.finite = false;
        out.value = kNegInf;
        return out;
      }
      if (S[j] > 0.0) out.value += S[j] * std::log(P[j]);
      sp[j] = S[j] > 0.0 ? S[j] / P[j] : 0.0;
    }

    const double invI = 1.0 / static_cast<double>(I);
    for (int i = 0; i < I; ++i) {
      // A_k = sum_j L_ji x_jik ; W = sum_alt sp_alt L_alt,i / I
      double Ap = 0.0, Ae = 0.0, Aa = 0.0, Ac = 0.0;
      double W = sp[0] * L(0, i);
      double Vp = 0.0, Ve = 0.0, Va = 0.0, Vc = 0.0;
      for (int j = 0; j < J; ++j) {
        const Vehicle& v = market.vehicles[j];
        const double l = L(j + 1, i);
        const double xp = -expp[i] * v.p;
        Ap += l * xp;
        Ae += l / v.e;
        Aa += l / v.a;
        Ac += l;
        const double w = sp[j + 1] * l;
        W += w;
        Vp += w * xp;
        Ve += w / v.e;
        Va += w / v.a;
        Vc += w;
        styleA[v.b] += l;
        styleV[v.b] += w;
      }
      W *= invI;
      // d LL / d theta_{i,k} = V_k/I - W * A_k
      const double gp = Vp * invI - W * Ap;
      const double ge = Ve * invI - W * Ae;
      const double ga = Va * invI - W * Aa;
      const double gc = Vc * invI - W * Ac;
      grad_theta[0] += gp;
      grad_theta[1] += ge;
      grad_theta[2] += ga;
      grad_theta[3] += gc;
      grad_sd[0] += gp * draws_(0, i);
      grad_sd[1] += ge * draws_(1, i);
      grad_sd[2] += ga * draws_(2, i);
      grad_sd[3] += gc * draws_(3, i);
      for (int b : occupied) {
        const double gs = styleV[b] * invI - W * styleA[b];
        grad_theta[4 + b] += gs;
        grad_sd[4 + b] += gs * draws_(4 + b, i);
        styleA[b] = 0.0;
        styleV[b] = 0.0;
      }
    }
  }

  out.grad.head(4) = grad_theta.head(4);
  fold_style_grad(grad_theta.tail(B), out.grad.segment(4, B - 1));
  for (int k = 0; k < K; ++k) out.grad[3 + B + k] = grad_sd[k] * dsd[k];
  return out;
}

LogLik LikelihoodProblem::eval_nml(const Eigen::VectorXd& free) const {
  const int B = B_;
  LogLik out;
  out.grad = Eigen::VectorXd::Zero(dim());
  Eigen::VectorXd style = expand_style(free.segment(4, B - 1), B);
  Eigen::VectorXd lambda(B), dlam(B);
  for (int b = 0; b < B; ++b) {
    const double s = logistic(free[3 + B + b]);
    lambda[b] = lambda_max_ * s;
    dlam[b] = lambda_max_ * s * (1.0 - s);
  }
  const double ep = std::exp(free[0]);
  Eigen::VectorXd grad_style = Eigen::VectorXd::Zero(B);
  Eigen::VectorXd grad_lam = Eigen::VectorXd::Zero(B);

  Eigen::VectorXd u;
  for (std::size_t m = 0; m < data_->markets.size(); ++m) {
    const Market& market = data_->markets[m];
    const Eigen::VectorXd& S = data_->shares[m];
    const int J = market.size();

    std::vector<int> nests;
    for (const Vehicle& v : market.vehicles) nests.push_back(v.b);
    std::sort(nests.begin(), nests.end());
    nests.erase(std::unique(nests.begin(), nests.end()), nests.end());
    const int NB = static_cast<int>(nests.size());

    u.resize(J);
    std::vector<int> nest_of(J);
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -ep * v.p + free[1] / v.e + free[2] / v.a;
      nest_of[j] = static_cast<int>(
          std::lower_bound(nests.begin(), nests.end(), v.b) - nests.begin());
    }

    Eigen::VectorXd V(NB), z(NB), T(NB);
    T.setZero();
    for (int n = 0; n < NB; ++n) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < J; ++j) {
        if (nest_of[j] == n) mx = std::max(mx, u[j]);
      }
      double s = 0.0;
      for (int j = 0; j < J; ++j) {
        if (nest_of[j] == n) s += std::exp(u[j] - mx);
      }
      V[n] = mx + std::log(s);
      z[n] = free[3] + style[nests[n]] + lambda[nests[n]] * V[n];
    }
    for (int j = 0; j < J; ++j) T[nest_of[j]] += S[j + 1];

    const double zshift = std::max(0.0, z.maxCoeff());
    double zden = std::exp(-zshift);
    Eigen::VectorXd Q(NB);
    for (int n = 0; n < NB; ++n) {
      Q[n] = std::exp(z[n] - zshift);
      zden += Q[n];
    }
    Q /= zden;
    const double Q0 = std::exp(-zshift) / zden;

    bool bad = false;
    for (int j = 0; j < J && !bad; ++j) {
      if (S[j + 1] <= 0.0) continue;
      const int n = nest_of[j];
      const double pj = std::exp(u[j] - V[n]) * Q[n];
      if (pj <= 0.0) bad = true;
      else out.value += S[j + 1] * std::log(pj);
    }
    if (S[0] > 0.0) {
      if (Q0 <= 0.0) bad = true;
      else out.value += S[0] * std::log(Q0);
    }
    if (bad) {
      out.finite = false;
      out.value = kNegInf;
      return out;
    }

    for (int j = 0; j < J; ++j) {
      const int n = nest_of[j];
      const int b = nests[n];
      const double nj = std::exp(u[j] - V[n]);
      const double du = S[j + 1] - nj * T[n] + lambda[b] * nj * (T[n] - Q[n]);
      const Vehicle& v = market.vehicles[j];
      out.grad[0] += du * (-ep * v.p);
      out.grad[1] += du / v.e;
      out.grad[2] += du / v.a;
    }
    out.grad[3] += Q0 - S[0];
    for (int n = 0; n < NB; ++n) {
      const int b = nests[n];
      grad_style[b] += T[n] - Q[n];
      grad_lam[b] += (T[n] - Q[n]) * V[n];
    }
  }

  fold_style_grad(grad_style, out.grad.segment(4, B - 1));
  for (int b = 0; b < B; ++b) out.grad[3 + B + b] = grad_lam[b] * dlam[b];
  return out;
}

LogLik LikelihoodProblem::eval_ctc(const Eigen::VectorXd& free) const {
  const int B = B_;
  const int R = rule_count(B);
  LogLik out;
  out.grad = Eigen::VectorXd::Zero(dim());

  // softmax over screen logits, first screen pinned at zero
  Eigen::VectorXd z(R);
  z[0] = 0.0;
  z.tail(R - 1) = free.tail(R - 1);
  const double zmax = z.maxCoeff();
  Eigen::VectorXd alpha = (z.array() - zmax).exp();
  alpha /= alpha.sum();

  const double ep = std::exp(free[0]);
  Eigen::VectorXd grad_alpha = Eigen::VectorXd::Zero(R);

  std::vector<double> rule_probs(alpha.data(), alpha.data() + R);
  std::vector<double> W, den, YS;
  std::vector<double> Eg, Y;
  std::vector<double> Zs[4], Ts[4];

  for (std::size_t m = 0; m < data_->markets.size(); ++m) {
    const Market& market = data_->markets[m];
    const Eigen::VectorXd& S = data_->shares[m];
    const StyleProjection& proj = proj_[m];
    const int J = market.size();
    const int D = proj.D;
    const std::size_t sets = std::size_t{1} << D;

    bucket_weights(proj, rule_probs, W);

    // utilities, shifted exps
    Eigen::VectorXd u(J), E(J), xp(J), xe(J), xa(J);
    double shift = 0.0;
    for (int j = 0; j < J; ++j) {
      const Vehicle& v = market.vehicles[j];
      u[j] = -ep * v.p + free[1] / v.e + free[2] / v.a + free[3];
      xp[j] = -ep * v.p;
      xe[j] = 1.0 / v.e;
      xa[j] = 1.0 / v.a;
      shift = std::max(shift, u[j]);
    }
    const double e0 = std::exp(-shift);
    Eg.assign(D, 0.0);
    for (int j = 0; j < J; ++j) {
      E[j] = std::exp(u[j] - shift);
      Eg[proj.group[j]] += E[j];
    }

    auto subset_sums = [&](const std::vector<double>& g, std::vector<double>& s) {
      s.resize(sets);
      s[0] = 0.0;
      for (std::size_t mk = 1; mk < sets; ++mk) {
        std::size_t lsb = mk & (~mk + 1);
        s[mk] = s[mk ^ lsb] + g[std::countr_zero(lsb)];
      }
    };

    subset_sums(Eg, den);
    // probabilities
    std::vector<double> gain(D, 0.0);
    double out0 = 0.0;
    for (std::size_t c = 0; c < sets; ++c) {
      if (W[c] == 0.0) continue;
      const double r = W[c] / (e0 + den[c]);
      out0 += r;
      std::size_t rem = c;
      while (rem) {
        std::size_t lsb = rem & (~rem + 1);
        gain[std::countr_zero(lsb)] += r;
        rem ^= lsb;
      }
    }
    Eigen::VectorXd P(J + 1);
    P[0] = e0 * out0;
    for (int j = 0; j < J; ++j) P[j + 1] = E[j] * gain[proj.group[j]];

    Eigen::VectorXd sp(J + 1);
    for (int j = 0; j <= J; ++j) {
      if (S[j] > 0.0 && P[j] <= 0.0) {
        out.finite = false;
        out.value = kNegInf;
        return out;
      }
      if (S[j] > 0.0) out.value += S[j] * std::log(P[j]);
      sp[j] = S[j] > 0.0 ? S[j] / P[j] : 0.0;
    }

    // per-style aggregates for the gradient
    Y.assign(D, 0.0);
    for (int l = 0; l < 4; ++l) {
      Zs[l].assign(D, 0.0);
      Ts[l].assign(D, 0.0);
    }
    for (int j = 0; j < J; ++j) {
      const int d = proj.group[j];
      const double se = sp[j + 1] * E[j];
      Y[d] += se;
      const double x[4] = {xp[j], xe[j], xa[j], 1.0};
      for (int l = 0; l < 4; ++l) {
        Zs[l][d] += E[j] * x[l];
        Ts[l][d] += se * x[l];
      }
    }
    subset_sums(Y, YS);
    std::vector<double> ZS[4], TS[4];
    for (int l = 0; l < 4; ++l) {
      subset_sums(Zs[l], ZS[l]);
      subset_sums(Ts[l], TS[l]);
    }

    const double sp0e0 = sp[0] * e0;
    for (std::size_t c = 0; c < sets; ++c) {
      const double invden = 1.0 / (e0 + den[c]);
      const double G = (YS[c] + sp0e0) * invden;  // d LL / d alpha for this set
      if (W[c] != 0.0) {
        for (int l = 0; l < 4; ++l) {
          out.grad[l] += W[c] * invden * (TS[l][c] - ZS[l][c] * invden * (YS[c] + sp0e0));
        }
      }
      // distribute to every screen projecting onto this set
      den[c] = G;  // reuse as per-set gradient
    }
    for (int r = 0; r < R; ++r) grad_alpha[r] += den[proj.rule_bucket[r]];
  }

  // softmax chain rule
  const double mean_g = alpha.dot(grad_alpha);
  for (int r = 1; r < R; ++r) {
    out.grad[3 + r] = alpha[r] * (grad_alpha[r] - mean_g);
  }
  return out;
}

LogLik log_likelihood(Family family, const Eigen::VectorXd& free,
                      const ShareData& data, const LikelihoodOptions& opt) {
  LikelihoodProblem problem(family, data, opt);
  return problem(free);
}

}  // namespace vpd
