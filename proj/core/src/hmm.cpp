#include "msissa/hmm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "msissa/error.hpp"

namespace msissa {

BurstRanges single_burst(std::size_t n) { return {{0, n}}; }

double hmm_forward_loglik(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& gamma,
                          const Eigen::VectorXd& initial, const BurstRanges& bursts) {
  const Eigen::Index n = gamma.rows();
  if (log_emission.cols() != n || initial.size() != n)
    throw ValidationError("emission, transition and initial dimensions disagree");
  Eigen::RowVectorXd a(n), p(n);
  double ll = 0.0;
  for (const auto& [b, e] : bursts) {
    for (std::size_t t = b; t < e; ++t) {
      const auto row = log_emission.row(static_cast<Eigen::Index>(t));
      const double m = row.maxCoeff();
      if (!std::isfinite(m))
        throw NumericError("non-finite choice probability at step " + std::to_string(t));
      p = (row.array() - m).exp().matrix();
      if (t == b)
        a = initial.transpose().cwiseProduct(p);
      else
        a = (a * gamma).cwiseProduct(p);
      const double s = a.sum();
      if (!(s > 0.0) || !std::isfinite(s))
        throw NumericError("forward recursion underflow or overflow at step " + std::to_string(t));
      ll += std::log(s) + m;
      a /= s;
    }
  }
  return ll;
}

std::vector<int> hmm_viterbi(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& gamma,
                             const Eigen::VectorXd& initial, const BurstRanges& bursts) {
  const Eigen::Index n = gamma.rows();
  const Eigen::MatrixXd log_gamma = gamma.array().log().matrix();
  const Eigen::VectorXd log_init = initial.array().log().matrix();
  std::vector<int> path(static_cast<std::size_t>(log_emission.rows()), 0);
  std::vector<double> score(n), next(n);
  std::vector<int> back;
  for (const auto& [b, e] : bursts) {
    if (e <= b) continue;
    const std::size_t len = e - b;
    back.assign(len * static_cast<std::size_t>(n), 0);
    for (Eigen::Index j = 0; j < n; ++j)
      score[j] = log_init[j] + log_emission(static_cast<Eigen::Index>(b), j);
    for (std::size_t t = 1; t < len; ++t) {
      for (Eigen::Index j = 0; j < n; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double v = score[i] + log_gamma(i, j);
          if (v > best) {
            best = v;
            arg = static_cast<int>(i);
          }
        }
        next[j] = best + log_emission(static_cast<Eigen::Index>(b + t), j);
        back[t * n + j] = arg;
      }
      std::swap(score, next);
    }
    int s = 0;
    for (Eigen::Index j = 1; j < n; ++j)
      if (score[j] > score[s]) s = static_cast<int>(j);
    for (std::size_t t = len; t-- > 0;) {
      path[b + t] = s;
      if (t > 0) s = back[t * n + s];
    }
  }
  return path;
}

}  // namespace msissa
