#include "msissa/optimizer.hpp"

#include <cmath>
#include <limits>

#include "msissa/error.hpp"

namespace msissa {

double central_step(double x) {
  static const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  return h0 * std::max(1.0, std::abs(x));
}

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = central_step(x[j]);
    y[j] = x[j] + h;
    const double fp = f(y);
    y[j] = x[j] - h;
    const double fm = f(y);
    y[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd five_point_gradient(const Objective& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-3 * std::max(1.0, std::abs(x[j]));
    double v[4];
    const double off[4] = {2.0, 1.0, -1.0, -2.0};
    for (int k = 0; k < 4; ++k) {
      y[j] = x[j] + off[k] * h;
      v[k] = f(y);
    }
    y[j] = x[j];
    g[j] = (-v[0] + 8.0 * v[1] - 8.0 * v[2] + v[3]) / (12.0 * h);
  }
  return g;
}

BfgsResult bfgs_minimize(const ObjectiveWithGradient& f, Eigen::VectorXd x0,
                         const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult r;
  r.x = std::move(x0);
  r.gradient.resize(n);
  r.value = f(r.x, r.gradient);
  if (!std::isfinite(r.value)) throw NumericError("objective is not finite at the starting point");
  if (n == 0 || r.gradient.lpNorm<Eigen::Infinity>() < options.gtol) {
    r.converged = true;
    r.message = "gradient below tolerance";
    return r;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g_new(n), x_new(n), d(n);
  bool fresh = true;
  for (r.iterations = 0; r.iterations < options.max_iter;) {
    d = -H * r.gradient;
    double slope = r.gradient.dot(d);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -r.gradient;
      slope = -r.gradient.squaredNorm();
      fresh = true;
    }
    const double biggest = d.lpNorm<Eigen::Infinity>();
    if (biggest > options.max_step) {
      d *= options.max_step / biggest;
      slope *= options.max_step / biggest;
    }

    double step = 1.0, f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = r.x + step * d;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= r.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++r.iterations;
    if (!accepted) {
      if (!fresh) {
        // Restart once from steepest descent before giving up.
        H.setIdentity();
        fresh = true;
        continue;
      }
      r.message = "line search failed";
      return r;
    }

    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - r.gradient;
    const double rel_change = std::abs(r.value - f_new) / std::max(1.0, std::abs(f_new));
    r.x = x_new;
    r.value = f_new;
    r.gradient = g_new;

    if (r.gradient.lpNorm<Eigen::Infinity>() < options.gtol) {
      r.converged = true;
      r.message = "gradient below tolerance";
      return r;
    }
    if (rel_change < options.ftol) {
      r.converged = true;
      r.message = "relative change below tolerance";
      return r;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) H *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * s * s.transpose() - rho * (Hy * s.transpose() + s * Hy.transpose());
      fresh = false;
    }
  }
  r.message = "iteration limit reached";
  return r;
}

}  // namespace msissa
