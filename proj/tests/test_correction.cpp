#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ru/correction.hpp"
#include "ru/market.hpp"

namespace {

using ru::Matrix;
using ru::Vector;

ru::PathBatch scalar_batch(std::size_t steps, std::size_t paths, std::uint64_t seed, double alpha = 0.04,
                           double sigma = 0.2) {
  const auto m = ru::MarketModel::constant(Vector::Constant(1, alpha), Matrix::Constant(1, 1, sigma), Vector::Ones(1));
  return ru::simulate(m, {1.0, steps}, paths, seed);
}

ru::PathBatch square_batch(std::size_t steps, std::size_t paths, std::uint64_t seed) {
  Matrix s(2, 2);
  s << 0.25, 0.05, -0.1, 0.3;
  Vector a(2);
  a << 0.05, 0.02;
  return ru::simulate(ru::MarketModel::constant(a, s, Vector::Ones(2)), {1.0, steps}, paths, seed);
}

TEST(CorrectionPath, LogIsIdenticallyZero) {
  const auto b = scalar_batch(32, 200, 1);
  const auto r = ru::correction_path(b, ru::log_utility(), 1.0);
  for (double v : r.v.raw()) ASSERT_EQ(v, 0.0);
  for (double v : r.v_pos.raw()) ASSERT_EQ(v, 0.0);
  for (double v : r.v_neg.raw()) ASSERT_EQ(v, 0.0);
}

TEST(CorrectionPath, CrraMatchesPowerOfZ) {
  const auto b = square_batch(24, 300, 2);
  for (double p : {0.5, -1.0, 0.9}) {
    for (double x0 : {0.5, 2.0}) {
      const auto r = ru::correction_path(b, ru::crra(p), x0);
      const double q = 1.0 / (p - 1.0);
      const double th2 = b.coeff(0).theta_sq;
      for (std::size_t path = 0; path < b.n_paths(); ++path) {
        double acc = 0.0;
        for (std::size_t k = 0; k < b.steps(); ++k) {
          acc += x0 * p / (2.0 * (p - 1.0) * (p - 1.0)) * std::pow(b.z(path, k), q) * th2 * b.dt();
          ASSERT_NEAR(r.v(path, k + 1), acc, 1e-12 * std::max(1.0, std::abs(acc))) << "p=" << p;
        }
      }
    }
  }
}

TEST(CorrectionPath, ExponentialIsDeterministic) {
  const auto b = scalar_batch(16, 50, 3);
  for (double a : {0.5, 2.0}) {
    const auto r = ru::correction_path(b, ru::exponential(a, true), 1.0);
    for (std::size_t p = 0; p < b.n_paths(); ++p)
      for (std::size_t k = 0; k <= 16; ++k)
        ASSERT_NEAR(r.v(p, k), -0.04 * b.time(k) / (2.0 * a), 1e-14) << "a=" << a;
  }
}

TEST(CorrectionPath, SignSplit) {
  const auto b = scalar_batch(16, 100, 4);
  const auto pos = ru::correction_path(b, ru::crra(0.5), 1.0);
  const auto neg = ru::correction_path(b, ru::crra(-1.0), 1.0);
  for (std::size_t p = 0; p < b.n_paths(); ++p)
    for (std::size_t k = 0; k < 16; ++k) {
      ASSERT_EQ(pos.v_neg(p, k + 1), 0.0);
      ASSERT_GE(pos.v_pos(p, k + 1), pos.v_pos(p, k));
      ASSERT_EQ(neg.v_pos(p, k + 1), 0.0);
      ASSERT_EQ(neg.v(p, k + 1), neg.v_pos(p, k + 1) - neg.v_neg(p, k + 1));
    }
}

TEST(TargetWealth, ClosedForms) {
  const auto b = scalar_batch(8, 100, 5);
  const auto lg = ru::target_wealth(b, ru::log_utility(), 2.0);
  const auto cr = ru::target_wealth(b, ru::crra(0.5), 2.0);
  for (std::size_t p = 0; p < b.n_paths(); ++p) {
    EXPECT_NEAR(lg(p, 0), 2.0, 1e-15);
    EXPECT_NEAR(cr(p, 0), 2.0, 1e-15);
    for (std::size_t k = 0; k <= 8; ++k) {
      EXPECT_NEAR(lg(p, k), 2.0 / b.z(p, k), 1e-12 * lg(p, k));
      EXPECT_NEAR(cr(p, k), 2.0 * std::pow(b.z(p, k), -2.0), 1e-12 * cr(p, k));
    }
  }
}

TEST(OptimalPortfolio, MertonFractionAtStart) {
  const auto b = scalar_batch(8, 10, 6);
  // Dollar fraction theta / (sigma (1 - p)); log is p = 0.
  for (auto [fam, frac] : {std::pair{ru::log_utility(), 1.0}, std::pair{ru::crra(0.5), 2.0},
                           std::pair{ru::crra(-1.0), 0.5}}) {
    const auto pi = ru::optimal_portfolio(b, fam, 1.5);
    for (std::size_t p = 0; p < b.n_paths(); ++p) EXPECT_NEAR(pi(p, 0) * b.s(p, 0, 0) / 1.5, frac, 1e-12) << fam.label;
  }
}

TEST(OptimalPortfolio, ZeroDriftHoldsNothing) {
  const auto b = scalar_batch(8, 20, 7, 0.0, 0.3);
  const auto pi = ru::optimal_portfolio(b, ru::crra(0.5), 1.0);
  for (double v : pi.raw()) EXPECT_EQ(v, 0.0);
  const auto r = ru::correction_path(b, ru::crra(0.5), 1.0);
  for (double v : r.v.raw()) EXPECT_EQ(v, 0.0);
}

TEST(OptimalPortfolio, CompleteMarketRoutesAgree) {
  const auto b = square_batch(8, 50, 8);
  const auto a = ru::optimal_portfolio(b, ru::crra(-2.0), 1.0);
  const auto c = ru::optimal_portfolio_complete(b, ru::crra(-2.0), 1.0);
  for (std::size_t i = 0; i < a.raw().size(); ++i)
    EXPECT_NEAR(a.raw()[i], c.raw()[i], 1e-12 * std::max(1.0, std::abs(a.raw()[i])));

  Matrix s(1, 2);
  s << 0.2, 0.1;
  const auto inc = ru::simulate(ru::MarketModel::constant(Vector::Constant(1, 0.03), s, Vector::Ones(1)),
                                {1.0, 4}, 5, 1);
  EXPECT_THROW(ru::optimal_portfolio_complete(inc, ru::log_utility(), 1.0), ru::ModelError);
}

TEST(Wealth, ZeroStrategyAndBuyAndHold) {
  const auto b = square_batch(12, 30, 9);
  const ru::Strategy zero(b.n_paths(), b.points(), 2);
  const auto w0 = ru::wealth_path(b, zero, 1.7);
  for (double v : w0.x.raw()) EXPECT_EQ(v, 1.7);

  ru::Strategy hold(b.n_paths(), b.points(), 2);
  for (std::size_t p = 0; p < b.n_paths(); ++p)
    for (std::size_t k = 0; k < b.points(); ++k) {
      hold(p, k, 0) = 2.0;
      hold(p, k, 1) = -1.0;
    }
  const auto w = ru::wealth_path(b, hold, 1.0);
  for (std::size_t p = 0; p < b.n_paths(); ++p) {
    const double expect = 1.0 + 2.0 * (b.s(p, 12, 0) - 1.0) - (b.s(p, 12, 1) - 1.0);
    EXPECT_NEAR(w.x(p, 12), expect, 1e-12);
  }
  EXPECT_THROW(ru::wealth_path(b, ru::Strategy(b.n_paths(), b.points(), 1), 1.0), std::invalid_argument);
}

TEST(Wealth, FractionsReproduceSharesWealth) {
  const auto b = scalar_batch(16, 40, 10);
  const auto f = ru::wealth_from_fractions(b, [](std::size_t) { return Vector::Constant(1, 0.6); }, 1.0);
  const auto w = ru::wealth_path(b, f.pi, 1.0);
  for (std::size_t i = 0; i < w.x.raw().size(); ++i) EXPECT_NEAR(w.x.raw()[i], f.x.raw()[i], 1e-13);
}

// Euler wealth of the myopic portfolio tracks target - V; the pathwise gap
// shrinks as the grid is refined.
TEST(Wealth, MyopicWealthConvergesToTargetMinusCorrection) {
  auto gap = [](std::size_t steps) {
    const auto b = scalar_batch(steps, 4000, 11);
    const auto r = ru::correct(b, ru::crra(0.5), 1.0);
    const auto w = ru::wealth_path(b, r.pi_hat, 1.0);
    std::vector<double> e(b.n_paths());
    for (std::size_t p = 0; p < b.n_paths(); ++p) {
      const double d = w.x(p, steps) - (r.target(p, steps) - r.v(p, steps));
      e[p] = d * d;
    }
    return std::sqrt(ru::estimate(e).mean);
  };
  const double g16 = gap(16), g64 = gap(64);
  EXPECT_LT(g64, g16 / 1.5) << g16 << " " << g64;
}

// Per-step residual d(target - V) - pi dS has no systematic drift.
TEST(Wealth, ItoResidualHasNoDrift) {
  const auto b = scalar_batch(64, 20000, 12);
  const auto r = ru::correct(b, ru::crra(0.5), 1.0);
  std::vector<double> res(b.n_paths());
  for (std::size_t p = 0; p < b.n_paths(); ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < b.steps(); ++k) {
      const double dx = (r.target(p, k + 1) - r.v(p, k + 1)) - (r.target(p, k) - r.v(p, k));
      acc += dx - r.pi_hat(p, k) * (b.s(p, k + 1, 0) - b.s(p, k, 0));
    }
    res[p] = b.z(p, b.steps()) * acc;
  }
  const auto e = ru::estimate(res);
  EXPECT_LT(std::abs(ru::z_score(e, 0.0)), 4.0) << e.mean << " +- " << e.std_error;
}

TEST(Domain, ExponentialTargetLeavesHalfLine) {
  const auto b = scalar_batch(16, 2000, 13);
  try {
    ru::correction_path(b, ru::exponential(1.0), 0.05);
    FAIL() << "expected DomainError";
  } catch (const ru::DomainError& e) {
    EXPECT_FALSE(e.paths().empty());
    EXPECT_NE(std::string(e.what()).find(std::to_string(e.paths().front())), std::string::npos);
  }
  EXPECT_NO_THROW(ru::correction_path(b, ru::exponential(1.0, true), 0.05));
  EXPECT_THROW(ru::correction_path(b, ru::log_utility(), 0.0), ru::DomainError);
}

}  // namespace
