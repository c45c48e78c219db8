#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace msissa {

using BurstRanges = std::vector<std::pair<std::size_t, std::size_t>>;

/// Scaled forward algorithm. `log_emission` holds one row per observation and
/// one column per state; every burst starts afresh from `initial`. Throws
/// NumericError naming the observation index when the scaled likelihood
/// stops being finite and positive.
double hmm_forward_loglik(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& gamma,
                          const Eigen::VectorXd& initial, const BurstRanges& bursts);

/// Most probable state path, computed in log space. Ties go to the lower
/// state index. One label per observation, 0-based.
std::vector<int> hmm_viterbi(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& gamma,
                             const Eigen::VectorXd& initial, const BurstRanges& bursts);

/// Single burst covering all rows.
BurstRanges single_burst(std::size_t n);

}  // namespace msissa
