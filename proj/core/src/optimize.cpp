#include "condex/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace condex::optim {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x, int& evaluations) {
  ++evaluations;
  const double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

}  // namespace

Result nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& options) {
  const Eigen::Index n = x0.size();
  Result result;
  std::vector<Eigen::VectorXd> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = x0[i] != 0.0 ? options.initial_step * std::max(1.0, std::abs(x0[i])) : options.initial_step;
    simplex[i + 1][i] += step;
  }
  for (Eigen::Index i = 0; i <= n; ++i) values[i] = safe_eval(f, simplex[i], result.evaluations);

  std::vector<Eigen::Index> order(n + 1);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second_worst = order[n - 1];
    result.iterations = iter + 1;
    result.trace.push_back(values[best]);

    const double spread = std::abs(values[worst] - values[best]);
    double size = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) size = std::max(size, (simplex[i] - simplex[best]).lpNorm<Eigen::Infinity>());
    if (std::isfinite(values[best]) && spread <= options.tolerance * (1.0 + std::abs(values[best])) &&
        size <= std::sqrt(options.tolerance)) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = safe_eval(f, reflected, result.evaluations);
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = safe_eval(f, expanded, result.evaluations);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = safe_eval(f, contracted, result.evaluations);
    if (fc < std::min(fr, values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = safe_eval(f, simplex[i], result.evaluations);
    }
  }

  const auto best = std::min_element(values.begin(), values.end()) - values.begin();
  result.x = simplex[best];
  result.value = values[best];
  result.status = result.converged ? "converged" : "maximum iterations reached";
  return result;
}

Eigen::VectorXd gradient(const Objective& f, const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

Eigen::MatrixXd hessian(const Objective& f, const Eigen::VectorXd& x, double step, double fx) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    h(i, i) = (fp - 2.0 * fx + fm) / (step * step);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          xp[i] = x[i] + si * step;
          xp[j] = x[j] + sj * step;
          acc += si * sj * f(xp);
        }
      }
      xp[i] = x[i];
      xp[j] = x[j];
      h(i, j) = h(j, i) = acc / (4.0 * step * step);
    }
  }
  return h;
}

Result bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  Result result;
  int evaluations = 0;
  const Objective counted = [&](const Eigen::VectorXd& x) { return safe_eval(f, x, evaluations); };

  Eigen::VectorXd x = x0;
  double fx = counted(x);
  if (!std::isfinite(fx)) {
    result.x = x;
    result.value = fx;
    result.status = "objective not finite at the starting point";
    result.evaluations = evaluations;
    return result;
  }
  Eigen::VectorXd g = gradient(counted, x, options.gradient_step);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  int stalls = 0;
  int small_steps = 0;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    Eigen::VectorXd direction = -h_inv * g;
    if (direction.dot(g) >= 0.0) {
      h_inv.setIdentity();
      direction = -g;
    }
    const double length = direction.norm();
    if (length > options.max_step) direction *= options.max_step / length;

    double alpha = 1.0;
    double f_new = kInf;
    Eigen::VectorXd x_new;
    const double slope = g.dot(direction);
    for (int k = 0; k < 40; ++k) {
      x_new = x + alpha * direction;
      f_new = counted(x_new);
      if (f_new <= fx + 1e-4 * alpha * slope) break;
      alpha *= 0.5;
    }
    if (!(f_new < fx)) {
      // No descent along the quasi-Newton direction: retry once from steepest descent.
      if (stalls++ > 0 || (h_inv - Eigen::MatrixXd::Identity(n, n)).norm() == 0.0) {
        result.converged = g.lpNorm<Eigen::Infinity>() < 1e-2 * (1.0 + std::abs(fx)) ||
                           std::abs(slope) < options.value_tolerance;
        result.status = result.converged ? "converged (no further descent)" : "line search failed";
        break;
      }
      h_inv.setIdentity();
      continue;
    }
    stalls = 0;

    const double change = fx - f_new;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd g_new = gradient(counted, x_new, options.gradient_step);
    const Eigen::VectorXd y = g_new - g;
    x = x_new;
    fx = f_new;
    g = g_new;
    result.trace.push_back(fx);

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
      h_inv = (id - rho * s * y.transpose()) * h_inv * (id - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    if (change < options.value_tolerance) {
      // Small progress alone is not enough after a heavily damped step; also
      // require the quadratic model to predict little remaining improvement.
      const double predicted = 0.5 * g.dot(h_inv * g);
      if (predicted < 1e-3 || ++small_steps >= 3) {
        result.converged = true;
        result.status = "converged";
        break;
      }
    } else {
      small_steps = 0;
    }
  }
  if (result.status.empty()) result.status = "maximum iterations reached";
  result.x = x;
  result.value = fx;
  result.evaluations = evaluations;
  return result;
}

}  // namespace condex::optim
