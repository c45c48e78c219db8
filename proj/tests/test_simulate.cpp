#include <cmath>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "msissa/error.hpp"
#include "msissa/simulate.hpp"
#include "support/oracles.hpp"

using namespace msissa;

namespace {

Habitat flat(int size) {
  Raster r(size, size, 1.0);
  std::fill(r.values.begin(), r.values.end(), 0.0);
  return Habitat("Z", r);
}

double angle_of(Point from, Point to) { return std::atan2(to.y - from.y, to.x - from.x); }

}  // namespace

TEST(States, AbsorbingChain) {
  MarkovChainSpec c;
  c.gamma = Eigen::MatrixXd::Identity(2, 2);
  c.delta = Eigen::Vector2d(1.0, 0.0);
  Rng rng(1);
  for (int s : simulate_states(c, 500, rng)) ASSERT_EQ(s, 0);
}

TEST(States, PersistenceAndOccupancy) {
  const auto c = MarkovChainSpec::persistent(2, 0.9);
  Rng rng(2);
  const auto s = simulate_states(c, 100000, rng);
  std::size_t stay = 0, ones = 0;
  for (std::size_t t = 1; t < s.size(); ++t) stay += s[t] == s[t - 1];
  for (int v : s) ones += v == 1;
  EXPECT_NEAR(static_cast<double>(stay) / (s.size() - 1), 0.9, 0.01);
  EXPECT_NEAR(static_cast<double>(ones) / s.size(), 0.5, 0.02);
}

TEST(States, ValidatesChain) {
  MarkovChainSpec c;
  c.gamma = Eigen::MatrixXd::Constant(2, 2, 0.6);
  c.delta = Eigen::Vector2d(0.5, 0.5);
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Sampler, NoSelectionReproducesTheKernel) {
  const Habitat h = flat(4000);
  const StateModel m{{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {0.0}};
  Rng rng(3);
  SamplerStats stats;
  const Point prev{1999.0, 2000.0}, cur{2000.0, 2000.0};
  std::vector<double> l, a;
  for (int i = 0; i < 20000; ++i) {
    const Point p = sample_step_endpoint(prev, cur, m, h, 0.0, rng, &stats);
    l.push_back(std::hypot(p.x - cur.x, p.y - cur.y));
    a.push_back(wrap_angle(angle_of(cur, p)));
  }
  EXPECT_EQ(stats.proposals, stats.accepted);
  EXPECT_GT(oracle::ks_pvalue(l, [](double x) { return boost::math::gamma_p(2.5, 0.29 * x); }), 0.01);
  auto vm_cdf = [](double x) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [](double t) { return std::exp(oracle::vonmises_logpdf(1.0, t)); }, -kPi, x, 10, 1e-12);
  };
  std::vector<double> thin(a.begin(), a.begin() + 5000);
  EXPECT_GT(oracle::ks_pvalue(thin, vm_cdf), 0.01);
}

TEST(Sampler, SelectionShiftsEndpointsTowardsHighValues) {
  Rng land(4);
  const Habitat h("Z", simulate_grf({1.0, 10.0, 200, 200, 1.0}, land));
  const StateModel sel{{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {2.0}};
  const StateModel none{{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {0.0}};
  Rng a(5), b(6);
  double zs = 0.0, zn = 0.0;
  const Point prev{99.0, 100.0}, cur{100.0, 100.0};
  for (int i = 0; i < 10000; ++i) {
    zs += covariate_at(h.geometry(), sample_step_endpoint(prev, cur, sel, h, a));
    zn += covariate_at(h.geometry(), sample_step_endpoint(prev, cur, none, h, b));
  }
  EXPECT_GT(zs, zn);
}

TEST(Sampler, MatchesDiscretisedDensity) {
  // Endpoint frequencies over a coarse partition are compared with the
  // normalised density kernel(l, alpha) * exp(beta Z(x')) integrated over a
  // fine polar grid, restricted to the habitat.
  Rng land(7);
  const Habitat h("Z", simulate_grf({1.0, 3.0, 30, 30, 1.0}, land));
  const StateModel m{{GammaStep{2.0, 0.5}, VonMisesTurn{0.5}}, {1.5}};
  const Point prev{14.0, 15.0}, cur{15.0, 15.0};
  auto bin = [&](Point p) {
    const double r = std::hypot(p.x - cur.x, p.y - cur.y);
    const int ring = r < 2.5 ? 0 : (r < 5.0 ? 1 : 2);
    const int quad = (p.x >= cur.x ? 0 : 1) + (p.y >= cur.y ? 0 : 2);
    return ring * 4 + quad;
  };
  std::vector<double> exact(12, 0.0);
  const int nl = 3000, na = 720;
  const double lmax = 40.0, dl = lmax / nl, da = 2 * kPi / na;
  for (int i = 0; i < nl; ++i) {
    const double l = (i + 0.5) * dl;
    const double ls = oracle::gamma_logpdf(2.0, 0.5, l);
    for (int j = 0; j < na; ++j) {
      const double alpha = -kPi + (j + 0.5) * da;
      const Point p{cur.x + l * std::cos(alpha), cur.y + l * std::sin(alpha)};
      if (!h.contains(p)) continue;
      const double w = std::exp(ls + oracle::vonmises_logpdf(0.5, alpha) + 1.5 * interpolate(h.geometry(), p));
      exact[bin(p)] += w;
    }
  }
  const double total = std::accumulate(exact.begin(), exact.end(), 0.0);
  Rng rng(8);
  std::vector<double> freq(12, 0.0);
  const int n = 100000;
  for (int k = 0; k < n; ++k) freq[bin(sample_step_endpoint(prev, cur, m, h, rng))] += 1.0 / n;
  double tv = 0.0;
  for (int k = 0; k < 12; ++k) tv += 0.5 * std::abs(freq[k] - exact[k] / total);
  EXPECT_LT(tv, 0.02);
}

TEST(Sampler, RejectsCoincidentLocations) {
  const Habitat h = flat(50);
  Rng rng(9);
  const StateModel m{{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {0.0}};
  EXPECT_THROW(sample_step_endpoint({10, 10}, {10, 10}, m, h, rng), ValidationError);
}

TEST(Track, SingleStateKernelRecovered) {
  const Habitat h = flat(3000);
  const auto chain = MarkovChainSpec::persistent(1, 1.0);
  const std::vector<StateModel> states{{{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {0.0}}};
  Rng rng(10);
  const auto sim = simulate_track(chain, states, h, 10000, {1500.0, 1500.0}, rng);
  std::vector<double> l;
  for (std::size_t j = 1; j < sim.track.size(); ++j)
    l.push_back(std::hypot(sim.track.xy[j].x - sim.track.xy[j - 1].x, sim.track.xy[j].y - sim.track.xy[j - 1].y));
  const auto g = std::get<GammaStep>(fit_step_mle(StepFamily::Gamma, l));
  EXPECT_NEAR(g.shape, 2.5, 0.05 * 2.5);
  EXPECT_NEAR(g.rate, 0.29, 0.05 * 0.29);
}

TEST(Track, AbsorbingSecondState) {
  const Habitat h = flat(400);
  MarkovChainSpec c;
  c.gamma = Eigen::MatrixXd::Identity(2, 2);
  c.delta = Eigen::Vector2d(0.0, 1.0);
  const std::vector<StateModel> states{{{GammaStep{1.2, 1.25}, VonMisesTurn{0.3}}, {0.0}},
                                       {{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {0.0}}};
  Rng rng(11);
  const auto sim = simulate_track(c, states, h, 200, {200.0, 200.0}, rng);
  EXPECT_EQ(sim.track.size(), 200u);
  EXPECT_EQ(sim.states.size(), 199u);
  for (int s : sim.states) ASSERT_EQ(s, 1);
}

TEST(Track, ReproducibleAndValidated) {
  Rng land(12);
  const Habitat h("Z", simulate_grf({1.0, 10.0, 200, 200, 1.0}, land));
  const auto chain = MarkovChainSpec::persistent(2, 0.9);
  const std::vector<StateModel> states{{{GammaStep{1.2, 1.25}, VonMisesTurn{0.3}}, {0.0}},
                                       {{GammaStep{2.5, 0.29}, VonMisesTurn{1.0}}, {2.0}}};
  Rng a(13), b(13);
  const auto s1 = simulate_track(chain, states, h, 1000, {100, 100}, a);
  const auto s2 = simulate_track(chain, states, h, 1000, {100, 100}, b);
  EXPECT_EQ(s1.states, s2.states);
  for (std::size_t j = 0; j < s1.track.size(); ++j) {
    ASSERT_EQ(s1.track.xy[j].x, s2.track.xy[j].x);
    ASSERT_EQ(s1.track.xy[j].y, s2.track.xy[j].y);
    ASSERT_TRUE(h.contains(s1.track.xy[j]));
  }
  EXPECT_THROW(simulate_track(chain, states, h, 2, {100, 100}, a), ValidationError);
  EXPECT_THROW(simulate_track(chain, states, h, 100, {500, 100}, a), ValidationError);
}
