#include <cmath>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "msissa/error.hpp"
#include "msissa/kernel.hpp"
#include "support/oracles.hpp"

using namespace msissa;

namespace {

const StepFamily kSteps[] = {StepFamily::Exponential, StepFamily::Gamma, StepFamily::LogNormal};
const TurnFamily kTurns[] = {TurnFamily::Uniform, TurnFamily::VonMises};

NaturalKernel sample_kernel(StepFamily s, TurnFamily t) {
  NaturalKernel k;
  switch (s) {
    case StepFamily::Exponential: k.step = ExponentialStep{0.4}; break;
    case StepFamily::Gamma: k.step = GammaStep{2.5, 0.29}; break;
    case StepFamily::LogNormal: k.step = LogNormalStep{1.3, 0.6}; break;
  }
  if (t == TurnFamily::VonMises)
    k.turn = VonMisesTurn{0.8};
  else
    k.turn = UniformTurn{};
  return k;
}

std::vector<SamplingScheme> schemes_for(StepFamily s, TurnFamily t) {
  NaturalKernel proposal = sample_kernel(s, TurnFamily::VonMises);
  std::get_if<VonMisesTurn>(&proposal.turn)->kappa = 0.4;
  std::vector<SamplingScheme> out{SamplingScheme::uniform_steps(40.0), SamplingScheme::grid(1.0, 20.0),
                                  SamplingScheme::importance(proposal.step)};
  if (t == TurnFamily::VonMises) out.push_back(SamplingScheme::importance(proposal.step, VonMisesTurn{0.4}));
  // A proposal whose parameters differ from the kernel's.
  if (s == StepFamily::Gamma) out.push_back(SamplingScheme::importance(GammaStep{1.1, 0.9}));
  if (s == StepFamily::LogNormal) out.push_back(SamplingScheme::importance(LogNormalStep{0.2, 1.7}));
  if (s == StepFamily::Exponential) out.push_back(SamplingScheme::importance(ExponentialStep{1.9}));
  return out;
}

}  // namespace

TEST(MovementCovariates, GammaVonMisesAtUnitStep) {
  const auto c = movement_covariates({StepFamily::Gamma, TurnFamily::VonMises}, 1.0, 0.0);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c[0], 0.0);
  EXPECT_DOUBLE_EQ(c[1], -1.0);
  EXPECT_DOUBLE_EQ(c[2], 1.0);
}

TEST(MovementCovariates, GammaVonMisesAtEAndPi) {
  const auto c = movement_covariates({StepFamily::Gamma, TurnFamily::VonMises}, std::exp(1.0), kPi);
  EXPECT_NEAR(c[0], 1.0, 1e-15);
  EXPECT_NEAR(c[1], -std::exp(1.0), 1e-15);
  EXPECT_NEAR(c[2], -1.0, 1e-15);
}

TEST(MovementCovariates, LogNormalUniform) {
  const auto c = movement_covariates({StepFamily::LogNormal, TurnFamily::Uniform}, std::exp(2.0), 0.3);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_NEAR(c[0], 2.0, 1e-14);
  EXPECT_NEAR(c[1], -4.0, 1e-13);
}

TEST(MovementCovariates, DimensionMatchesCoefficientCount) {
  for (auto s : kSteps)
    for (auto t : kTurns) {
      const MovementKernelSpec spec{s, t};
      EXPECT_EQ(movement_covariates(spec, 2.0, 0.1).size(), spec.n_coef());
      EXPECT_EQ(spec.covariate_names().size(), spec.n_coef());
    }
}

TEST(MovementCovariates, RejectsBadInput) {
  const MovementKernelSpec spec;
  EXPECT_THROW(movement_covariates(spec, 0.0, 0.0), ValidationError);
  EXPECT_THROW(movement_covariates(spec, -1.0, 0.0), ValidationError);
  EXPECT_THROW(movement_covariates(spec, 1.0, 4.0), ValidationError);
  EXPECT_THROW(movement_covariates(spec, 1.0, -kPi), ValidationError);
}

TEST(CoefToNatural, GammaUniformSteps) {
  const std::vector<double> theta{1.5, 0.29};
  const auto k = coef_to_natural({StepFamily::Gamma, TurnFamily::Uniform}, SamplingScheme::uniform_steps(50), theta);
  const auto& g = std::get<GammaStep>(k.step);
  EXPECT_NEAR(g.shape, 2.5, 1e-15);
  EXPECT_NEAR(g.rate, 0.29, 1e-15);
}

TEST(CoefToNatural, ZeroCorrectionRecoversProposal) {
  const std::vector<double> theta{0.0, 0.0};
  const auto k = coef_to_natural({StepFamily::Gamma, TurnFamily::Uniform},
                                 SamplingScheme::importance(GammaStep{2.5, 0.29}), theta);
  const auto& g = std::get<GammaStep>(k.step);
  EXPECT_DOUBLE_EQ(g.shape, 2.5);
  EXPECT_DOUBLE_EQ(g.rate, 0.29);
}

TEST(CoefToNatural, VonMisesGrid) {
  const std::vector<double> theta{0.0, 0.5, 1.0};
  const auto k = coef_to_natural({StepFamily::Gamma, TurnFamily::VonMises}, SamplingScheme::grid(1, 5), theta);
  EXPECT_DOUBLE_EQ(std::get<VonMisesTurn>(k.turn).kappa, 1.0);
  EXPECT_DOUBLE_EQ(std::get<GammaStep>(k.step).shape, 2.0);
}

TEST(CoefToNatural, NamesOffendingParameter) {
  const std::vector<double> theta{-1.5, 0.29};
  try {
    coef_to_natural({StepFamily::Gamma, TurnFamily::Uniform}, SamplingScheme::uniform_steps(50), theta);
    FAIL() << "expected an invalid-parameter error";
  } catch (const InvalidParameterError& e) {
    EXPECT_EQ(e.parameter(), "shape");
  }
  const std::vector<double> neg_kappa{0.5, 0.29, -0.1};
  EXPECT_THROW(coef_to_natural({StepFamily::Gamma, TurnFamily::VonMises}, SamplingScheme::uniform_steps(50), neg_kappa),
               InvalidParameterError);
}

TEST(NaturalToCoef, TableExamples) {
  const auto a = natural_to_coef({StepFamily::Gamma, TurnFamily::Uniform}, SamplingScheme::uniform_steps(50),
                                 {GammaStep{1.2, 1.25}, UniformTurn{}});
  EXPECT_NEAR(a[0], 0.2, 1e-15);
  EXPECT_NEAR(a[1], 1.25, 1e-15);
  const auto b = natural_to_coef({StepFamily::Gamma, TurnFamily::Uniform}, SamplingScheme::grid(1, 5),
                                 {GammaStep{2.0, 1.0}, UniformTurn{}});
  EXPECT_DOUBLE_EQ(b[0], 0.0);
  const auto c = natural_to_coef({StepFamily::LogNormal, TurnFamily::Uniform}, SamplingScheme::uniform_steps(50),
                                 {LogNormalStep{1.0, 0.5}, UniformTurn{}});
  EXPECT_NEAR(c[0], 1.0, 1e-15);
  EXPECT_NEAR(c[1], 1.0, 1e-15);
}

TEST(NaturalToCoef, RoundTripEveryFamilyAndScheme) {
  for (auto s : kSteps)
    for (auto t : kTurns)
      for (const auto& scheme : schemes_for(s, t)) {
        const MovementKernelSpec spec{s, t};
        const auto k = sample_kernel(s, t);
        const auto theta = natural_to_coef(spec, scheme, k);
        const auto back = natural_values(coef_to_natural(spec, scheme, theta));
        const auto orig = natural_values(k);
        ASSERT_EQ(back.size(), orig.size());
        for (std::size_t i = 0; i < orig.size(); ++i)
          EXPECT_NEAR(back[i], orig[i], 1e-12) << to_string(s) << '/' << to_string(t) << '/'
                                               << to_string(scheme.kind) << " parameter " << i;
      }
}

TEST(StepDensity, ClosedFormValues) {
  EXPECT_NEAR(step_logpdf(ExponentialStep{1.0}, 0.5), -0.5, 1e-15);
  EXPECT_NEAR(turn_logpdf(UniformTurn{}, 1.234), -std::log(2 * kPi), 1e-15);
  EXPECT_NEAR(step_logpdf(GammaStep{2.5, 0.29}, 8.62), oracle::gamma_logpdf(2.5, 0.29, 8.62), 1e-12);
  EXPECT_NEAR(turn_logpdf(VonMisesTurn{1.3}, 0.7), oracle::vonmises_logpdf(1.3, 0.7), 1e-12);
}

TEST(StepDensity, GammaValueAgreesWithQuadratureNormalisation) {
  // The unnormalised kernel l^(k-1) exp(-r l), divided by its integral.
  const double k = 2.5, r = 0.29;
  boost::math::quadrature::tanh_sinh<double> q;
  const double Z = q.integrate([&](double l) { return std::pow(l, k - 1) * std::exp(-r * l); }, 0.0,
                               std::numeric_limits<double>::infinity());
  const double expected = (k - 1) * std::log(8.62) - r * 8.62 - std::log(Z);
  EXPECT_NEAR(step_logpdf(GammaStep{k, r}, 8.62), expected, 1e-9);
}

TEST(StepDensity, IntegratesToOne) {
  for (auto s : kSteps) {
    const auto d = sample_kernel(s, TurnFamily::Uniform).step;
    const double upper = step_quantile(d, 0.99999);
    // Split at the mode region to help the quadrature near zero.
    double total = 0.0;
    const double cuts[] = {0.0, 1e-6, 0.01 * upper, 0.1 * upper, upper};
    for (int i = 0; i + 1 < 5; ++i)
      total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          [&](double l) { return l > 0 ? std::exp(step_logpdf(d, l)) : 0.0; }, cuts[i], cuts[i + 1], 15, 1e-13);
    EXPECT_NEAR(total, 0.99999, 1e-6) << to_string(s);
  }
}

TEST(TurnDensity, VonMisesWithZeroConcentrationIsUniform) {
  for (double a = -3.1; a <= kPi; a += 0.37)
    EXPECT_NEAR(turn_logpdf(VonMisesTurn{0.0}, a), turn_logpdf(UniformTurn{}, a), 1e-12);
}

TEST(TurnDensity, VonMisesIntegratesToOne) {
  for (double kappa : {0.0, 0.3, 1.0, 8.0, 40.0}) {
    const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double a) { return std::exp(turn_logpdf(VonMisesTurn{kappa}, a)); }, -kPi, kPi, 15, 1e-14);
    EXPECT_NEAR(total, 1.0, 1e-10) << kappa;
  }
}

TEST(Sampling, GammaMean) {
  Rng rng(11);
  const GammaStep g{2.5, 0.29};
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += step_sample(g, rng);
  const double se = std::sqrt(g.shape) / g.rate / std::sqrt(n);
  EXPECT_NEAR(s / n, g.shape / g.rate, 3 * se);
}

TEST(Sampling, SmallShapeGammaMatchesCdf) {
  Rng rng(12);
  const GammaStep g{0.6, 1.5};
  std::vector<double> x(20000);
  for (auto& v : x) v = step_sample(g, rng);
  auto cdf = [&](double t) { return boost::math::gamma_p(g.shape, g.rate * t); };
  EXPECT_GT(oracle::ks_pvalue(x, cdf), 0.01);
}

TEST(Sampling, ExponentialMean) {
  Rng rng(13);
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += step_sample(ExponentialStep{2.0}, rng);
  EXPECT_NEAR(s / n, 0.5, 3 * 0.5 / std::sqrt(n));
}

TEST(Sampling, VonMisesZeroConcentrationIsUniform) {
  Rng rng(14);
  std::vector<double> a(20000);
  for (auto& v : a) v = turn_sample(VonMisesTurn{0.0}, rng);
  EXPECT_GT(oracle::ks_pvalue(a, [](double x) { return (x + kPi) / (2 * kPi); }), 0.01);
}

TEST(Sampling, VonMisesMatchesCdf) {
  Rng rng(15);
  const double kappa = 2.0;
  std::vector<double> a(5000);
  for (auto& v : a) {
    v = turn_sample(VonMisesTurn{kappa}, rng);
    ASSERT_TRUE(is_valid_angle(v));
  }
  auto cdf = [&](double x) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double t) { return std::exp(oracle::vonmises_logpdf(kappa, t)); }, -kPi, x, 10, 1e-12);
  };
  EXPECT_GT(oracle::ks_pvalue(a, cdf), 0.01);
}

TEST(Fitting, GammaMleRecoversTruth) {
  Rng rng(21);
  std::vector<double> x(10000);
  for (auto& v : x) v = step_sample(GammaStep{2.5, 0.29}, rng);
  const auto g = std::get<GammaStep>(fit_step_mle(StepFamily::Gamma, x));
  EXPECT_NEAR(g.shape, 2.5, 0.05 * 2.5);
  EXPECT_NEAR(g.rate, 0.29, 0.05 * 0.29);
  // The MLE is at least as good as the moment fit.
  EXPECT_GE(step_loglik(g, x), step_loglik(fit_step_moments(StepFamily::Gamma, x), x) - 1e-9);
}

TEST(Fitting, OtherFamiliesBeatMoments) {
  Rng rng(22);
  std::vector<double> x(3000);
  for (auto& v : x) v = step_sample(GammaStep{1.7, 0.5}, rng);
  for (auto f : kSteps)
    EXPECT_GE(step_loglik(fit_step_mle(f, x), x), step_loglik(fit_step_moments(f, x), x) - 1e-9) << to_string(f);
}

TEST(Fitting, VonMisesMleRecoversTruth) {
  Rng rng(23);
  std::vector<double> a(10000);
  for (auto& v : a) v = turn_sample(VonMisesTurn{1.0}, rng);
  const auto vm = std::get<VonMisesTurn>(fit_turn_mle(TurnFamily::VonMises, a));
  EXPECT_NEAR(vm.kappa, 1.0, 0.05);
}

TEST(Fitting, RejectsDegenerateInput) {
  std::vector<double> constant(20, 3.0);
  EXPECT_THROW(fit_step_mle(StepFamily::Gamma, constant), ValidationError);
  std::vector<double> few{1, 2, 3};
  EXPECT_THROW(fit_step_mle(StepFamily::Gamma, few), ValidationError);
}

TEST(Bessel, RatioAndLogI0) {
  for (double x : {0.0, 0.01, 0.5, 2.0, 20.0, 700.0, 5000.0}) {
    // Direct quadrature of I0 and I1 from their integral representation, scaled by exp(-x).
    auto I = [&](int n) {
      return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                 [&](double t) { return std::exp(x * (std::cos(t) - 1.0)) * std::cos(n * t); }, 0.0, kPi, 15,
                 1e-14) /
             kPi;
    };
    const double i0 = I(0), i1 = I(1);
    EXPECT_NEAR(log_bessel_i0(x), x + std::log(i0), 1e-10 * std::max(1.0, x)) << x;
    EXPECT_NEAR(bessel_ratio(x), i1 / i0, 1e-9) << x;
  }
}

TEST(Angles, Wrap) {
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(0.5), 0.5, 0);
  EXPECT_TRUE(is_valid_angle(kPi));
  EXPECT_FALSE(is_valid_angle(-kPi));
}
