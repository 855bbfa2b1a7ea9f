#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ptr/diff/fit.hpp"
#include "ptr/error.hpp"
#include "ptr/params.hpp"

using namespace ptr;
using namespace ptr::diff;

namespace {

control::AudioControls short_controls(double seconds, const SynthConfig& synth) {
  const auto n = static_cast<std::size_t>(seconds * 1000.0) + 1;
  std::vector<double> rpm(n), torque(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / (n - 1);
    rpm[i] = 1500.0 + 900.0 * u * u;
    torque[i] = 0.6 - 0.4 * u;
  }
  return control::to_audio_rate(control::make_trajectory(rpm, torque, 1000.0), synth.sample_rate);
}

}  // namespace

TEST(OneCycle, WarmsUpThenAnneals) {
  const double peak = 0.01;
  EXPECT_NEAR(one_cycle_lr(0, 100, peak, 0.3), peak / 25.0, 1e-15);
  EXPECT_NEAR(one_cycle_lr(29, 100, peak, 0.3), peak, 1e-15);
  EXPECT_NEAR(one_cycle_lr(99, 100, peak, 0.3), peak / 25.0 / 1e4, 1e-15);
  for (int s = 1; s <= 29; ++s) EXPECT_GT(one_cycle_lr(s, 100, peak, 0.3), one_cycle_lr(s - 1, 100, peak, 0.3));
  for (int s = 30; s < 100; ++s) EXPECT_LT(one_cycle_lr(s, 100, peak, 0.3), one_cycle_lr(s - 1, 100, peak, 0.3));
  // Warm-up ends at step 0.5 * 22 - 1 = 10; halfway the cosine sits at the midpoint.
  EXPECT_NEAR(one_cycle_lr(5, 22, 1.0, 0.5), 0.5 * (1.0 + 1.0 / 25.0), 1e-12);
}

TEST(AdamW, ConstantGradientTakesUnitSteps) {
  // With a constant gradient the bias-corrected moments equal g and g^2, so
  // each step moves by lr * g / (|g| + eps) after the decoupled decay.
  const double lr = 0.1, wd = 0.01, eps = 1e-8;
  AdamW opt(0.9, 0.999, eps, wd);
  RawParams p{{"a", {1.0, -2.0}}, {"frozen", {3.0}}};
  const GradientMap g{{"a", {0.5, -4.0}}};
  std::vector<double> expect{1.0, -2.0};
  for (int k = 0; k < 5; ++k) {
    opt.step(p, g, lr);
    for (std::size_t i = 0; i < 2; ++i) {
      const double gi = g.at("a")[i];
      expect[i] = expect[i] * (1.0 - lr * wd) - lr * gi / (std::abs(gi) + eps);
      EXPECT_NEAR(p["a"][i], expect[i], 1e-12);
    }
  }
  EXPECT_EQ(p["frozen"][0], 3.0);
  EXPECT_EQ(opt.steps(), 5);
}

TEST(Fit, ZeroIterationsReturnsTheInitialParameters) {
  SynthConfig synth;
  const auto controls = short_controls(0.3, synth);
  const auto init = default_params(synth);
  const auto target = render_differentiable(init, controls, synth);
  FitConfig cfg;
  cfg.iterations = 0;
  const auto r = fit(target, controls, init, cfg, synth);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.best_iter, 0);
  EXPECT_EQ(params_to_json(r.params), params_to_json(init));
  EXPECT_EQ(r.trace[0].lr, 0.0);
}

TEST(Fit, TargetRenderedFromInitIsAFixedPoint) {
  SynthConfig synth;
  const auto controls = short_controls(0.5, synth);
  const auto init = default_params(synth);
  const auto target = render_differentiable(init, controls, synth);
  FitConfig cfg;
  cfg.iterations = 50;
  cfg.gumbel = false;
  cfg.weight_decay = 0.0;
  const auto r = fit(target, controls, init, cfg, synth);
  ASSERT_EQ(r.trace.size(), 51u);
  EXPECT_LT(r.initial_total, 1e-6);
  EXPECT_LE(r.best_total, r.initial_total);
  for (const auto& row : r.trace) EXPECT_LT(row.total, 0.05) << "iteration " << row.iter;
  const auto again = evaluate_loss(target, controls, r.params, synth);
  EXPECT_LT(again.total, 1e-6);
}

TEST(Fit, FittingImprovesAPerturbedStart) {
  SynthConfig synth;
  const auto controls = short_controls(0.5, synth);
  const auto truth = default_params(synth);
  const auto target = render_differentiable(truth, controls, synth);
  auto init = truth;
  init.noise.turb_depth *= 0.5;
  for (auto& c : init.cylinders) c.gain[0] *= 1.4;
  FitConfig cfg;
  cfg.iterations = 40;
  cfg.lr = 0.02;
  const auto r = fit(target, controls, init, cfg, synth);
  EXPECT_LT(r.best_total, 0.9 * r.initial_total);
  std::ostringstream csv;
  write_trace_csv(csv, r.trace);
  EXPECT_EQ(csv.str().substr(0, 26), "iter,total,stft,harmonic,l");
}

TEST(Fit, DivergenceIsReported) {
  SynthConfig synth;
  const auto controls = short_controls(0.3, synth);
  const auto init = default_params(synth);
  const auto target = render_differentiable(init, controls, synth);
  auto start = init;
  for (auto& c : start.cylinders) c.gain[0] *= 1.1;
  FitConfig cfg;
  cfg.iterations = 5;
  cfg.gumbel = false;
  cfg.one_cycle = false;
  cfg.lr = 1.0;
  cfg.weight_decay = 0.5;  // drags every raw value toward 0 regardless of the loss
  cfg.divergence_factor = 1.0001;
  try {
    fit(target, controls, start, cfg, synth);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
  }
}

TEST(Fit, MismatchedLengthsAndBadConfigAreRejected) {
  SynthConfig synth;
  const auto controls = short_controls(0.3, synth);
  const auto init = default_params(synth);
  std::vector<double> target(controls.size() - 1, 0.0);
  EXPECT_THROW(fit(target, controls, init, FitConfig{}, synth), Error);
  FitConfig bad;
  bad.lr = -1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = FitConfig{};
  bad.pct_start = 1.0;
  EXPECT_THROW(bad.validate(), Error);
}
