#pragma once

// Bounded nonlinear least squares: minimise eps(x) = |r(x)|^2 subject to
// lo <= x <= hi with a scaled Levenberg-Marquardt trust-region iteration.
// Trial points that leave the box are reflected back into it; the Jacobian is
// built by forward differences, optionally evaluating columns concurrently.

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace otbot {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LsqOptions {
  int max_iter = 200;
  double ftol = 1e-10;
  double xtol = 1e-10;
  double fd_step = 1e-6;   // relative
  double fd_floor = 1e-8;  // absolute
  double initial_radius_factor = 100.0;
  unsigned jobs = 1;
};

struct LsqResult {
  Eigen::VectorXd x;
  double loss = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;
  /// Loss after every accepted step, starting with the initial loss.
  std::vector<double> loss_history;
};

struct Bounds {
  Eigen::VectorXd lo, hi;

  static Bounds unbounded(Eigen::Index n) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Eigen::VectorXd::Constant(n, -inf), Eigen::VectorXd::Constant(n, inf)};
  }
  bool contains(const Eigen::VectorXd& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

namespace detail {

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

// Reflect each coordinate that left [lo, hi] back inside, then clamp.
inline Eigen::VectorXd reflect_into(const Eigen::VectorXd& x, const Bounds& b) {
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] < b.lo[i]) y[i] = b.lo[i] + (b.lo[i] - y[i]);
    if (y[i] > b.hi[i]) y[i] = b.hi[i] - (y[i] - b.hi[i]);
    y[i] = std::clamp(y[i], b.lo[i], b.hi[i]);
  }
  return y;
}

// Step minimising |J s + r| subject to |D s| <= radius (Levenberg-Marquardt
// parameter found by bisection on log(mu)).
inline Eigen::VectorXd lm_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, const Eigen::VectorXd& D,
                               double radius) {
  const Eigen::VectorXd gn = J.colPivHouseholderQr().solve(-r);
  if (gn.allFinite() && (D.cwiseProduct(gn)).norm() <= radius) return gn;

  const Eigen::MatrixXd JtJ = J.transpose() * J;
  const Eigen::VectorXd g = J.transpose() * r;
  const Eigen::VectorXd D2 = D.cwiseProduct(D);
  auto solve = [&](double mu) -> Eigen::VectorXd {
    Eigen::MatrixXd A = JtJ;
    A.diagonal() += mu * D2;
    return A.ldlt().solve(-g);
  };
  double lo = 0.0, hi = std::max(g.cwiseQuotient(D).norm() / radius, 1e-300);
  while ((D.cwiseProduct(solve(hi))).norm() > radius) hi *= 10.0;
  Eigen::VectorXd s = solve(hi);
  for (int it = 0; it < 100; ++it) {
    const double mu = lo == 0.0 ? hi * 1e-3 : std::sqrt(lo * hi);
    const Eigen::VectorXd sm = solve(mu);
    const double len = (D.cwiseProduct(sm)).norm();
    if (!sm.allFinite() || len > radius) {
      lo = mu;
    } else {
      hi = mu;
      s = sm;
      if (len >= 0.9 * radius) break;
    }
    if (hi - lo <= 1e-12 * hi) break;
  }
  return s;
}

}  // namespace detail

/// Forward-difference Jacobian of fn at x (r0 = fn(x)). Steps are
/// max(rel |x_j|, floor); they flip sign when the forward point would leave
/// the box. Columns are evaluated on up to `jobs` threads.
inline Eigen::MatrixXd finite_difference_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                                  const Eigen::VectorXd& r0, const Bounds& b, double rel,
                                                  double floor, unsigned jobs = 1) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd J(r0.size(), n);
  auto column = [&](Eigen::Index j) {
    double h = std::max(rel * std::abs(x[j]), floor);
    if (x[j] + h > b.hi[j]) h = -h;
    Eigen::VectorXd xp = x;
    xp[j] += h;
    const Eigen::VectorXd rp = fn(xp);
    if (rp.size() != r0.size()) throw std::runtime_error("residual size changed between evaluations");
    J.col(j) = (rp - r0) / h;
  };
  if (jobs <= 1 || n == 1) {
    for (Eigen::Index j = 0; j < n; ++j) column(j);
  } else {
    const auto workers = static_cast<Eigen::Index>(std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    std::vector<std::future<void>> tasks;
    for (Eigen::Index w = 0; w < workers; ++w)
      tasks.push_back(std::async(std::launch::async, [&, w] {
        for (Eigen::Index j = w; j < n; j += workers) column(j);
      }));
    for (auto& t : tasks) t.get();
  }
  return J;
}

inline LsqResult fit_trust_region(const ResidualFn& fn, const Eigen::VectorXd& x0, const Bounds& bounds,
                                  const LsqOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  if (bounds.lo.size() != n || bounds.hi.size() != n) throw std::invalid_argument("fit: bounds size mismatch");
  if ((bounds.lo.array() > bounds.hi.array()).any()) throw std::invalid_argument("fit: lo > hi");
  if (!bounds.contains(x0)) throw std::invalid_argument("fit: initial guess outside bounds");

  LsqResult res;
  res.x = x0;
  Eigen::VectorXd r = fn(x0);
  ++res.evaluations;
  if (!detail::all_finite(r)) throw std::runtime_error("fit: residual is not finite at the initial guess");
  res.loss = r.squaredNorm();
  res.loss_history.push_back(res.loss);
  if (res.loss == 0.0) {
    res.converged = true;
    res.reason = "zero residual";
    return res;
  }

  Eigen::VectorXd D = Eigen::VectorXd::Zero(n);
  double radius = 0.0;
  bool need_jacobian = true;
  Eigen::MatrixXd J;

  while (res.iterations < opts.max_iter) {
    if (need_jacobian) {
      J = finite_difference_jacobian(fn, res.x, r, bounds, opts.fd_step, opts.fd_floor, opts.jobs);
      res.evaluations += static_cast<int>(n);
      for (Eigen::Index j = 0; j < n; ++j) D[j] = std::max(D[j], J.col(j).norm());
      for (Eigen::Index j = 0; j < n; ++j)
        if (D[j] == 0.0) D[j] = 1.0;
      if (radius == 0.0) {
        const double dx = D.cwiseProduct(res.x).norm();
        radius = opts.initial_radius_factor * (dx > 0.0 ? dx : 1.0);
      }
      need_jacobian = false;
    }
    ++res.iterations;

    // Coordinates pinned at a bound with the descent direction pointing out
    // of the box are held fixed for this step.
    const Eigen::VectorXd g = J.transpose() * r;
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double tol = 1e-12 * (1.0 + std::abs(res.x[j]));
      const bool at_lo = res.x[j] <= bounds.lo[j] + tol && g[j] > 0.0;
      const bool at_hi = res.x[j] >= bounds.hi[j] - tol && g[j] < 0.0;
      if (!at_lo && !at_hi) free.push_back(j);
    }
    if (free.empty()) {
      res.converged = true;
      res.reason = "all parameters at active bounds";
      return res;
    }
    Eigen::MatrixXd Jf(J.rows(), static_cast<Eigen::Index>(free.size()));
    Eigen::VectorXd Df(Jf.cols());
    for (Eigen::Index k = 0; k < Jf.cols(); ++k) {
      Jf.col(k) = J.col(free[static_cast<std::size_t>(k)]);
      Df[k] = D[free[static_cast<std::size_t>(k)]];
    }
    const Eigen::VectorXd s_free = detail::lm_step(Jf, r, Df, radius);
    Eigen::VectorXd s_raw = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < Jf.cols(); ++k) s_raw[free[static_cast<std::size_t>(k)]] = s_free[k];
    struct Trial {
      Eigen::VectorXd x, s, r;
      double loss, predicted;
    };
    auto evaluate = [&](const Eigen::VectorXd& xt) {
      Trial t{xt, xt - res.x, fn(xt), 0.0, 0.0};
      ++res.evaluations;
      t.loss = detail::all_finite(t.r) ? t.r.squaredNorm() : std::numeric_limits<double>::infinity();
      t.predicted = res.loss - (r + J * t.s).squaredNorm();
      return t;
    };
    auto good = [&](const Trial& t) { return t.predicted > 0.0 && t.loss < res.loss && (res.loss - t.loss) > 1e-4 * t.predicted; };

    const Eigen::VectorXd x_raw = res.x + s_raw;
    Trial trial = evaluate(detail::reflect_into(x_raw, bounds));
    if (!good(trial) && !bounds.contains(x_raw)) {
      // Reflection failed; try the projection onto the box.
      Trial projected = evaluate(x_raw.cwiseMax(bounds.lo).cwiseMin(bounds.hi));
      if (good(projected) || projected.loss < trial.loss) trial = std::move(projected);
    }
    const Eigen::VectorXd& xt = trial.x;
    const Eigen::VectorXd& s = trial.s;
    Eigen::VectorXd rt = std::move(trial.r);
    const double step_norm = D.cwiseProduct(s).norm();
    const double predicted = trial.predicted;
    const double loss_t = trial.loss;
    const double actual = res.loss - loss_t;
    const double rho = predicted > 0.0 ? actual / predicted : -1.0;

    if (rho < 0.25)
      radius = 0.25 * std::min(radius, step_norm > 0.0 ? step_norm : radius);
    else if (rho > 0.75)
      radius = std::max(radius, 2.0 * step_norm);

    if (rho > 1e-4 && loss_t < res.loss) {
      res.x = xt;
      r = std::move(rt);
      res.loss = loss_t;
      res.loss_history.push_back(loss_t);
      need_jacobian = true;
      if (loss_t == 0.0) {
        res.converged = true;
        res.reason = "zero residual";
        return res;
      }
      if (actual <= opts.ftol * (res.loss + actual)) {
        res.converged = true;
        res.reason = "ftol";
        return res;
      }
      if (s.norm() <= opts.xtol * (opts.xtol + res.x.norm())) {
        res.converged = true;
        res.reason = "xtol";
        return res;
      }
    } else if (radius <= opts.xtol * (opts.xtol + D.cwiseProduct(res.x).norm())) {
      // No acceptable step inside a vanishing region: the iterate is
      // stationary to the requested precision.
      res.converged = std::isfinite(loss_t);
      res.reason = res.converged ? "xtol" : "non-finite residual near solution";
      return res;
    }
  }
  res.reason = "max_iter";
  return res;
}

}  // namespace otbot
