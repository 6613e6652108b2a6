#include "vpd/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace vpd::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Point {
  double t = 0.0;
  double f = kInf;
  double dphi = 0.0;  // directional derivative, valid only when f is finite
};

struct LineSearchState {
  const Objective& fn;
  const Eigen::VectorXd& x0;
  const Eigen::VectorXd& dir;
  int* evaluations;
  Eigen::VectorXd xt;     // scratch: x0 + t dir
  Eigen::VectorXd gt;     // gradient at xt
  Eigen::VectorXd gbest;  // gradient at the best finite point seen
  double tbest = 0.0;
  double fbest = kInf;

  Point eval(double t) {
    xt = x0 + t * dir;
    double f = fn(xt, gt);
    ++*evaluations;
    Point p;
    p.t = t;
    p.f = f;
    if (std::isfinite(f)) {
      p.dphi = gt.dot(dir);
      if (f < fbest) {
        fbest = f;
        tbest = t;
        gbest = gt;
      }
    }
    return p;
  }
};

// Strong Wolfe line search (bracket then bisection zoom).  Returns the accepted
// point; on failure falls back to the best finite point seen, t = 0 if none.
Point wolfe_search(LineSearchState& st, double f0, double dphi0, double t_first,
                   const Options& opt) {
  const double c1 = opt.c1, c2 = opt.c2;
  auto armijo_ok = [&](const Point& p) {
    return std::isfinite(p.f) && p.f <= f0 + c1 * p.t * dphi0;
  };

  Point lo{0.0, f0, dphi0};
  Point hi;
  Point prev = lo;
  double t = t_first;
  bool bracketed = false;
  int evals = 0;

  for (; evals < opt.max_line_search && !bracketed; ++evals) {
    Point p = st.eval(t);
    if (!armijo_ok(p) || (evals > 0 && p.f >= prev.f)) {
      lo = prev;
      hi = p;
      bracketed = true;
      break;
    }
    if (std::fabs(p.dphi) <= -c2 * dphi0) return p;  // strong Wolfe holds
    if (p.dphi >= 0.0) {
      lo = p;
      hi = prev;
      bracketed = true;
      break;
    }
    prev = p;
    t *= 2.0;
    if (t > 1e10) break;
  }
  if (!bracketed) {
    Point p;
    p.t = st.tbest;
    p.f = st.fbest;
    return p;
  }

  for (; evals < opt.max_line_search; ++evals) {
    const double tm = 0.5 * (lo.t + hi.t);
    if (std::fabs(hi.t - lo.t) < 1e-14 * (1.0 + std::fabs(lo.t))) break;
    Point p = st.eval(tm);
    if (!armijo_ok(p) || p.f >= lo.f) {
      hi = p;
    } else {
      if (std::fabs(p.dphi) <= -c2 * dphi0) return p;
      if (p.dphi * (hi.t - lo.t) >= 0.0) hi = lo;
      lo = p;
    }
  }
  Point p;
  p.t = st.tbest;
  p.f = st.fbest;
  return p;
}

}  // namespace

Result minimize(const Objective& fn, const Eigen::VectorXd& x0, const Options& opt,
                const Callback& cb) {
  const int n = static_cast<int>(x0.size());
  Result res;
  res.x = x0;
  res.grad.resize(n);

  res.f = fn(res.x, res.grad);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) {
    res.message = "objective not finite at the starting point";
    return res;
  }

  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;
  Eigen::VectorXd dir(n), q(n);
  Eigen::VectorXd alpha(opt.memory);
  int stall = 0;

  for (int k = 0;; ++k) {
    const double gnorm = res.grad.lpNorm<Eigen::Infinity>();
    if (cb) cb(k, res.f, gnorm, res.x);
    res.iterations = k;
    if (gnorm <= opt.gradient_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    if (k >= opt.max_iterations) {
      res.message = "iteration limit reached";
      return res;
    }

    // two-loop recursion
    q = res.grad;
    const int mem = static_cast<int>(S.size());
    for (int i = mem - 1; i >= 0; --i) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (mem > 0) {
      const double gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < mem; ++i) {
      const double beta = rho[i] * Y[i].dot(q);
      q += (alpha[i] - beta) * S[i];
    }
    dir = -q;

    double dphi0 = res.grad.dot(dir);
    if (!(dphi0 < 0.0)) {  // not a descent direction; restart from steepest descent
      dir = -res.grad;
      dphi0 = -res.grad.squaredNorm();
      S.clear();
      Y.clear();
      rho.clear();
    }

    LineSearchState st{fn, res.x, dir, &res.evaluations, {}, {}, {}, 0.0, kInf};
    const double t_first =
        S.empty() ? std::min(1.0, 1.0 / std::max(1.0, res.grad.norm())) : 1.0;
    Point p = wolfe_search(st, res.f, dphi0, t_first, opt);
    if (p.t <= 0.0 || !std::isfinite(p.f) || p.f >= res.f) {
      res.message = "line search could not make progress";
      return res;
    }

    Eigen::VectorXd x_new = res.x + p.t * dir;
    Eigen::VectorXd g_new = (p.t == st.tbest) ? st.gbest : st.gt;
    // gt holds the gradient of the last evaluation; the accepted point is
    // always either the last evaluation or the best-seen fallback.

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }

    const double drop = res.f - p.f;
    res.x = std::move(x_new);
    res.f = p.f;
    res.grad = std::move(g_new);
    if (drop <= 1e-14 * (std::fabs(res.f) + 1.0)) {
      if (++stall >= 2) {
        res.converged = true;  // ftol-style stop: no further progress possible
        res.message = "objective decrease below tolerance";
        return res;
      }
    } else {
      stall = 0;
    }
  }
}

}  // namespace vpd::optim
