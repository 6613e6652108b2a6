#include "vpd/estimation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "vpd/lbfgs.hpp"
#include "vpd/rng.hpp"

namespace vpd {

namespace {

using nlohmann::json;

double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json readable_params(const ChoiceModel& model) {
  json out;
  if (const auto* p = std::get_if<MnlParams>(&model)) {
    out["theta"] = vector_to_json(p->theta);
    out["style"] = vector_to_json(p->style);
  } else if (const auto* p = std::get_if<RclParams>(&model)) {
    out["mean"] = vector_to_json(p->mean);
    out["sd"] = vector_to_json(p->sd);
  } else if (const auto* p = std::get_if<NmlParams>(&model)) {
    out["theta"] = vector_to_json(p->theta);
    out["style"] = vector_to_json(p->style);
    out["lambda"] = vector_to_json(p->lambda);
  } else {
    const auto& c = std::get<CtcParams>(model);
    out["theta"] = vector_to_json(c.theta);
    out["alpha"] = vector_to_json(c.alpha);
  }
  return out;
}

}  // namespace

Eigen::VectorXd initial_free(Family family, int B, int start, double lambda_max,
                             Rng& rng) {
  const int n = free_dim(family, B);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  switch (family) {
    case Family::mnl:
      break;
    case Family::rcl:
      for (int k = 0; k < 4 + B; ++k) x[3 + B + k] = softplus_inv(0.1);
      break;
    case Family::nml:
      for (int b = 0; b < B; ++b) x[3 + B + b] = std::log(1.0 / (lambda_max - 1.0));
      break;
    case Family::ctc:
      break;
  }
  if (start == 0) return x;

  if (family == Family::ctc) {
    // jitter the screen distribution toward a random Dirichlet draw
    const int R = rule_count(B);
    Eigen::VectorXd alpha(R);
    double total = 0.0;
    for (int r = 0; r < R; ++r) {
      double e = -std::log(rng.uniform());
      alpha[r] = e;
      total += e;
    }
    for (int r = 0; r < R; ++r) alpha[r] = 0.9 / R + 0.1 * alpha[r] / total;
    for (int r = 1; r < R; ++r) x[3 + r] = std::log(alpha[r] / alpha[0]);
    for (int k = 0; k < 4; ++k) x[k] += 0.1 * rng.normal();
    return x;
  }
  for (int k = 0; k < n; ++k) x[k] += 0.1 * rng.normal();
  return x;
}

FitResult estimate(Family family, const ShareData& data, const EstimationOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (data.markets.empty()) throw std::invalid_argument("no markets to estimate on");
  double sold = 0.0;
  for (const Eigen::VectorXd& s : data.shares) sold += s.sum() - s[0];
  if (sold <= 0.0) {
    throw std::invalid_argument(
        "degenerate share data: the outside good takes every market");
  }

  LikelihoodOptions lopt;
  lopt.num_styles = opt.num_styles;
  lopt.lambda_max = opt.lambda_max;
  lopt.rcl_draws = opt.rcl_draws;
  lopt.rcl_draw_seed = opt.rcl_draw_seed;
  LikelihoodProblem problem(family, data, lopt);

  optim::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    LogLik ll = problem(x);
    if (!ll.finite) {
      grad = Eigen::VectorXd::Zero(x.size());
      return std::numeric_limits<double>::infinity();
    }
    grad = -ll.grad;
    return -ll.value;
  };

  optim::Options oopt;
  oopt.max_iterations = opt.max_iterations;
  oopt.gradient_tol = opt.gradient_tol;

  std::ofstream trace;
  if (!opt.trace_path.empty()) {
    trace.open(opt.trace_path);
    if (!trace) throw std::runtime_error("cannot open trace file: " + opt.trace_path);
    trace << "start,iteration,neg_ll,grad_norm\n";
  }

  FitResult fit;
  fit.family = family;
  fit.num_markets = static_cast<int>(data.markets.size());
  fit.num_styles = opt.num_styles;
  fit.lambda_max = opt.lambda_max;
  fit.seed = opt.seed;
  double best = -std::numeric_limits<double>::infinity();

  Rng rng(seed_mix(opt.seed, "estimate", family_name(family)));
  for (int start = 0; start < std::max(1, opt.multistart); ++start) {
    Eigen::VectorXd x0 = initial_free(family, opt.num_styles, start, opt.lambda_max, rng);
    optim::Callback cb;
    if (trace.is_open()) {
      cb = [&trace, start](int iter, double f, double gnorm, const Eigen::VectorXd&) {
        char line[128];
        std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g\n", start, iter, f, gnorm);
        trace << line;
      };
    }
    optim::Result r = optim::minimize(objective, x0, oopt, cb);
    fit.evaluations += r.evaluations;
    const double ll = -r.f;
    if (std::isfinite(ll) && ll > best) {
      best = ll;
      fit.final_ll = ll;
      fit.free_params = r.x;
      fit.converged = r.converged;
      fit.best_start = start;
      fit.iterations = r.iterations;
    }
  }
  if (fit.best_start < 0) {
    throw std::runtime_error("estimation failed: no start produced a finite likelihood");
  }
  fit.model = unpack_model(family, fit.free_params, opt.num_styles, opt.lambda_max);
  fit.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

void save_fit(const FitResult& fit, const std::string& path) {
  json j;
  j["schema"] = 1;
  j["family"] = family_name(fit.family);
  j["num_styles"] = fit.num_styles;
  j["lambda_max"] = fit.lambda_max;
  j["free_params"] = vector_to_json(fit.free_params);
  j["final_ll"] = fit.final_ll;
  j["converged"] = fit.converged;
  j["best_start"] = fit.best_start;
  j["iterations"] = fit.iterations;
  j["evaluations"] = fit.evaluations;
  j["wall_seconds"] = fit.wall_seconds;
  j["num_markets"] = fit.num_markets;
  j["seed"] = fit.seed;
  j["params"] = readable_params(fit.model);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fit file: " + path);
  out << j.dump(2) << '\n';
}

FitResult load_fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read fit file: " + path);
  json j = json::parse(in);
  FitResult fit;
  fit.family = family_from_name(j.at("family").get<std::string>());
  fit.num_styles = j.at("num_styles").get<int>();
  fit.lambda_max = j.at("lambda_max").get<double>();
  fit.free_params = vector_from_json(j.at("free_params"));
  fit.final_ll = j.at("final_ll").get<double>();
  fit.converged = j.at("converged").get<bool>();
  fit.best_start = j.at("best_start").get<int>();
  fit.iterations = j.at("iterations").get<int>();
  fit.evaluations = j.at("evaluations").get<int>();
  fit.wall_seconds = j.at("wall_seconds").get<double>();
  fit.num_markets = j.at("num_markets").get<int>();
  fit.seed = j.at("seed").get<std::uint64_t>();
  fit.model = unpack_model(fit.family, fit.free_params, fit.num_styles, fit.lambda_max);
  return fit;
}

}  // namespace vpd
