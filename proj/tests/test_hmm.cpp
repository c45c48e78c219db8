#include <cmath>

#include <gtest/gtest.h>

#include "msissa/error.hpp"
#include "msissa/hmm.hpp"

using namespace msissa;

TEST(Forward, SingleStateIsASum) {
  Eigen::MatrixXd le(5, 1);
  le << -1.0, -2.0, -0.5, -3.0, -0.1;
  const double ll = hmm_forward_loglik(le, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1), single_burst(5));
  EXPECT_NEAR(ll, le.sum(), 1e-12);
}

TEST(Forward, BurstsAreIndependentFactors) {
  Eigen::MatrixXd le(6, 2);
  le << -1, -2, -0.3, -1.7, -2.2, -0.4, -1.1, -0.9, -0.2, -3.0, -1.5, -1.4;
  Eigen::MatrixXd g(2, 2);
  g << 0.8, 0.2, 0.3, 0.7;
  const Eigen::Vector2d d(0.4, 0.6);
  const BurstRanges both{{0, 3}, {3, 6}};
  const double whole = hmm_forward_loglik(le, g, d, both);
  const double a = hmm_forward_loglik(le.topRows(3), g, d, single_burst(3));
  const double b = hmm_forward_loglik(le.bottomRows(3), g, d, single_burst(3));
  EXPECT_NEAR(whole, a + b, 1e-12);
}

TEST(Forward, VeryNegativeEmissionsStayFinite) {
  Eigen::MatrixXd le = Eigen::MatrixXd::Constant(2000, 2, -800.0);
  le(7, 1) = -790.0;
  const double ll = hmm_forward_loglik(le, Eigen::MatrixXd::Constant(2, 2, 0.5), Eigen::Vector2d(0.5, 0.5),
                                       single_burst(2000));
  EXPECT_TRUE(std::isfinite(ll));
}

TEST(Forward, ImpossibleObservationIsReported) {
  Eigen::MatrixXd le = Eigen::MatrixXd::Zero(4, 2);
  le.row(2).setConstant(-std::numeric_limits<double>::infinity());
  try {
    hmm_forward_loglik(le, Eigen::MatrixXd::Constant(2, 2, 0.5), Eigen::Vector2d(0.5, 0.5), single_burst(4));
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos) << e.what();
  }
}

TEST(Viterbi, TiesGoToTheLowerState) {
  const Eigen::MatrixXd le = Eigen::MatrixXd::Zero(5, 3);
  const auto path = hmm_viterbi(le, Eigen::MatrixXd::Constant(3, 3, 1.0 / 3), Eigen::VectorXd::Constant(3, 1.0 / 3),
                                single_burst(5));
  for (int s : path) EXPECT_EQ(s, 0);
}

TEST(Viterbi, AbsorbingChainFollowsTheInitialState) {
  Eigen::MatrixXd le(4, 2);
  le << 0, -5, 0, -5, 0, -5, 0, -5;
  const auto path = hmm_viterbi(le, Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(0.0, 1.0), single_burst(4));
  for (int s : path) EXPECT_EQ(s, 1);
}
