#pragma once

// Reference implementations used only by the tests. They share no code with
// the library's likelihood, decoding or optimization paths.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "msissa/kernel.hpp"
#include "msissa/msclr.hpp"
#include "msissa/sampling.hpp"

namespace oracle {

/// Random case-control data with `n_sets` choice sets of M + 1 alternatives,
/// p movement and q habitat columns, split into `n_bursts` bursts.
msissa::CaseControlData random_data(std::size_t n_sets, std::size_t M, std::size_t q,
                                    std::size_t n_bursts, std::uint64_t seed);

/// Same layout, but the used alternative of each set is drawn from the
/// conditional logit with coefficients `coef` (theta then beta, q = size - 3)
/// among M + 1 uniform candidates, so the likelihood has an interior maximum.
msissa::CaseControlData clogit_data(std::size_t n_sets, std::size_t M, const std::vector<double>& coef,
                                    std::uint64_t seed);

/// Random parameters for `data` (N states) with Gamma rows from a Dirichlet(1).
msissa::MsParams random_params(const msissa::CaseControlData& data, int N, msissa::DeltaMode mode,
                               std::uint64_t seed);

/// p(case) of choice set s under coefficient vector (theta, beta), by direct
/// exponentiation in long double.
long double case_prob(const msissa::CaseControlData& data, std::size_t s,
                      const std::vector<double>& theta, const std::vector<double>& beta);

/// Initial distribution; the stationary one by power iteration.
std::vector<long double> initial_distribution(const msissa::MsParams& params);

/// Log-likelihood by summing over every state sequence of every burst.
double brute_force_loglik(const msissa::MsParams& params, const msissa::CaseControlData& data);

/// Most probable state sequence by enumeration; ties keep the
/// lexicographically smallest sequence.
std::vector<int> brute_force_viterbi(const msissa::MsParams& params, const msissa::CaseControlData& data);

/// Movement-HMM log-likelihood by enumeration, with densities written out here.
double brute_force_movement_loglik(const Eigen::MatrixXd& gamma, const std::vector<long double>& initial,
                                   const std::vector<msissa::NaturalKernel>& states,
                                   const std::vector<double>& l, const std::vector<double>& alpha);

/// Conditional logit fitted by Newton-Raphson with the analytic gradient and
/// Hessian. Returns the coefficient vector over all design columns.
Eigen::VectorXd clogit_newton(const msissa::CaseControlData& data, int max_iter = 100, double tol = 1e-12);

/// One-sample Kolmogorov-Smirnov p-value (asymptotic distribution with
/// Stephens' small-sample correction).
double ks_pvalue(std::vector<double> x, const std::function<double(double)>& cdf);
/// Two-sample Kolmogorov-Smirnov p-value, same approximation.
double ks_pvalue(std::vector<double> a, std::vector<double> b);

/// Closed-form densities for cross-checks.
double gamma_logpdf(double shape, double rate, double x);
double vonmises_logpdf(double kappa, double x);

}  // namespace oracle
