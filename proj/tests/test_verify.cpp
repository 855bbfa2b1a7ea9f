#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "ptr/verify.hpp"

using namespace ptr;

namespace {

const SuiteResult& only(const std::vector<SuiteResult>& r) {
  EXPECT_EQ(r.size(), 1u);
  return r.front();
}

}  // namespace

TEST(Verify, QuadraticRadiusMatchesCompanionOracle) {
  for (double a1 : {-1.5, -0.4, 0.0, 0.9, 1.7}) {
    for (double a2 : {-0.8, 0.0, 0.3, 0.95}) {
      const std::vector<double> a{1.0, a1, a2};
      EXPECT_NEAR(quadratic_pole_radius(a1, a2), test::companion_pole_radius(a), 1e-9)
          << a1 << " " << a2;
    }
  }
}

TEST(Verify, EveryFastSuitePasses) {
  VerifyOptions opts;
  for (const char* name : {"equivalence", "stability", "gates"}) {
    const auto& r = only(run_verify(name, opts));
    EXPECT_TRUE(r.passed) << name << ": " << r.detail;
  }
}

TEST(Verify, GradientSuitePasses) {
  VerifyOptions opts;
  opts.gradient_trials = 1;
  for (const auto& r : run_verify("gradients", opts)) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Verify, InjectedInstabilityIsCaught) {
  VerifyOptions opts;
  opts.stability_trials = 100;
  opts.inject_unstable = true;
  EXPECT_FALSE(only(run_verify("stability", opts)).passed);
}

TEST(Verify, TightToleranceFailsEquivalence) {
  VerifyOptions opts;
  opts.equivalence_trials = 20;
  opts.tolerance = 1e-14;
  EXPECT_FALSE(only(run_verify("equivalence", opts)).passed);
}

TEST(Verify, UnknownSuiteIsRejected) {
  EXPECT_THROW(run_verify("nonsense", VerifyOptions{}), std::exception);
  const auto names = verify_suite_names();
  EXPECT_EQ(names.size(), 4u);
}
