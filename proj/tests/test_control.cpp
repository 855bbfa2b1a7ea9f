#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "ptr/control.hpp"
#include "ptr/error.hpp"

using namespace ptr;
using namespace ptr::control;

namespace {

constexpr double kPi = std::numbers::pi;

ControlTrajectory frames_to_traj(const std::vector<double>& rpm_frames, double per_frame = 8.0) {
  // Repeat each model-frame value over its control samples (1000 Hz / 125 Hz).
  std::vector<double> rpm, torque;
  for (double v : rpm_frames) {
    for (int i = 0; i < static_cast<int>(per_frame); ++i) {
      rpm.push_back(v);
      torque.push_back(0.5);
    }
  }
  return make_trajectory(rpm, torque, 1000.0);
}

}  // namespace

TEST(Deltas, ConstantRpmHasZeroDeltas) {
  const auto f = derive_deltas(frames_to_traj(std::vector<double>(50, 3000.0)), 125.0);
  ASSERT_EQ(f.frames(), 50u);
  for (std::size_t t = 0; t < f.frames(); ++t) {
    EXPECT_EQ(f.series[2][t], 0.0);
    EXPECT_EQ(f.series[4][t], 0.0);
  }
}

TEST(Deltas, LinearRampHasConstantFirstDifference) {
  std::vector<double> frames(40);
  for (std::size_t t = 0; t < frames.size(); ++t) frames[t] = 1000.0 + 125.0 * t;
  auto f = derive_deltas(frames_to_traj(frames), 125.0);
  for (std::size_t t = 1; t < f.frames(); ++t) EXPECT_NEAR(f.d_rpm()[t], 125.0, 1e-9) << t;
  for (std::size_t t = 2; t < f.frames(); ++t) EXPECT_NEAR(f.dd_rpm()[t], 0.0, 1e-9) << t;
}

TEST(Deltas, StepGivesIsolatedSecondDifferencePair) {
  std::vector<double> frames(30, 1000.0);
  const std::size_t k = 12;
  for (std::size_t t = k; t < frames.size(); ++t) frames[t] = 2000.0;
  auto f = derive_deltas(frames_to_traj(frames), 125.0);
  // Oracle: second difference of the frame series taken directly.
  for (std::size_t t = 2; t < f.frames(); ++t) {
    const double expect = frames[t] - 2.0 * frames[t - 1] + frames[t - 2];
    EXPECT_NEAR(f.dd_rpm()[t], expect, 1e-9) << t;
  }
  EXPECT_NEAR(f.dd_rpm()[k], 1000.0, 1e-9);
  EXPECT_NEAR(f.dd_rpm()[k + 1], -1000.0, 1e-9);
}

TEST(Standardize, MapsMeanAndStd) {
  std::vector<double> rpm(8000), tq(8000);
  for (std::size_t i = 0; i < rpm.size(); ++i) {
    const double x = static_cast<double>(i) / rpm.size();
    rpm[i] = 800.0 + 4000.0 * x * x;
    tq[i] = std::sin(9.0 * x);
  }
  const auto f = derive_deltas(make_trajectory(rpm, tq, 1000.0), 125.0);
  ASSERT_EQ(f.frames(), 1000u);
  const auto stats = compute_stats(f);
  const auto z = standardize(f, stats);
  const auto after = compute_stats(z);
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    EXPECT_NEAR(after.mean[k], 0.0, 1e-10) << kFeatureNames[k];
    EXPECT_NEAR(after.std[k], 1.0, 1e-10) << kFeatureNames[k];
  }
  ControlFeatures one = f;
  for (auto& s : one.series) s = {0.0, 0.0};
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    one.series[k][0] = stats.mean[k];
    one.series[k][1] = stats.mean[k] + stats.std[k];
  }
  const auto zo = standardize(one, stats);
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    EXPECT_NEAR(zo.series[k][0], 0.0, 1e-12);
    EXPECT_NEAR(zo.series[k][1], 1.0, 1e-12);
  }
  const auto back = destandardize(z);
  for (std::size_t t = 0; t < f.frames(); ++t) EXPECT_NEAR(back.series[0][t], f.series[0][t], 1e-9);
}

TEST(Standardize, DegenerateFeatureIsRejected) {
  const auto f = derive_deltas(frames_to_traj(std::vector<double>(20, 3000.0)), 125.0);
  EXPECT_THROW(standardize(f, compute_stats(f)), Error);
}

TEST(Gates, ScalarExamples) {
  EXPECT_DOUBLE_EQ(throttle_gate(1.0, 0.02), 1.0);
  EXPECT_NEAR(throttle_gate(-0.5, 0.02), 0.06467, 5e-6);
  EXPECT_NEAR(throttle_gate(0.5, 0.02), 0.6156, 5e-5);
  EXPECT_DOUBLE_EQ(dfco_gate(-0.8, 0.02), 0.8);
  EXPECT_DOUBLE_EQ(dfco_gate(0.8, 0.02), 0.02);
}

TEST(Gates, DriveCycleMatchesElementwiseLoop) {
  std::vector<double> tq(5000);
  for (std::size_t i = 0; i < tq.size(); ++i) tq[i] = std::sin(0.003 * i) * 1.2 + 0.1 * std::cos(0.05 * i);
  const auto thr = throttle_gate(tq, 0.02);
  const auto dfco = dfco_gate(tq, 0.02);
  for (std::size_t i = 0; i < tq.size(); ++i) {
    const double t = tq[i];
    const double ref_thr = std::exp(0.7 * std::log(t > 0.02 ? t : 0.02));
    const double ref_dfco = -t > 0.02 ? -t : 0.02;
    EXPECT_NEAR(thr[i], ref_thr, 1e-14);
    EXPECT_EQ(dfco[i], ref_dfco);
  }
}

TEST(Phase, ConstantRpmAdvancesTwoPiEvery320Samples) {
  std::vector<double> rpm(16000, 6000.0);
  const auto p = accumulate_phase(rpm, 16000.0);
  EXPECT_DOUBLE_EQ(p.f0[0], 50.0);
  EXPECT_EQ(p.unwrapped[0], 0.0);
  for (std::size_t n = 320; n < rpm.size(); n += 320) {
    EXPECT_NEAR(p.unwrapped[n] - p.unwrapped[n - 320], 2.0 * kPi, 1e-9);
    const double w = p.wrapped[n];
    EXPECT_LT(std::min(w, 2.0 * kPi - w), 1e-9) << n;
  }
}

TEST(Phase, ZeroRpmHoldsPhase) {
  std::vector<double> rpm(1000, 0.0);
  const auto p = accumulate_phase(rpm, 16000.0);
  for (double v : p.unwrapped) EXPECT_EQ(v, 0.0);
}

TEST(Phase, RampMatchesHighPrecisionIntegral) {
  const std::size_t n = 64000;
  std::vector<double> rpm(n);
  for (std::size_t i = 0; i < n; ++i) rpm[i] = 600.0 + 5400.0 * i / (n - 1);
  const auto p = accumulate_phase(rpm, 16000.0);
  // phi[n] = 2*pi/fs * sum_{m=1..n} f0[m]; the sum of a linear ramp in closed form.
  const long double f_first = 600.0L / 120.0L, df = 5400.0L / 120.0L / (n - 1);
  const long double sum = (n - 1) * f_first + df * (static_cast<long double>(n - 1) * n / 2.0L);
  const long double expect = 2.0L * std::numbers::pi_v<long double> * sum / 16000.0L;
  EXPECT_NEAR(p.unwrapped.back(), static_cast<double>(expect), 1e-3);
  // Continuous-time trapezoid of f0 over the ramp agrees to the same accuracy.
  const double trap = 2.0 * kPi * (5.0 + 50.0) / 2.0 * (n - 1) / 16000.0;
  EXPECT_NEAR(p.unwrapped.back(), trap, 2.0 * kPi * 50.0 / 16000.0);
}

TEST(CylinderPhases, OffsetsWrap) {
  std::vector<double> rpm(3000, 2500.0);
  const auto p = accumulate_phase(rpm, 16000.0);
  const std::vector<double> zero{0.0}, full{2.0 * kPi};
  const auto a = cylinder_phases(p.wrapped, zero);
  const auto b = cylinder_phases(p.wrapped, full);
  for (std::size_t i = 0; i < rpm.size(); ++i) {
    EXPECT_NEAR(a[0][i], p.wrapped[i], 1e-12);
    EXPECT_NEAR(std::remainder(b[0][i] - a[0][i], 2.0 * kPi), 0.0, 1e-9);
  }
}

TEST(CylinderPhases, EvenOffsetsFormArithmeticSequence) {
  std::vector<double> rpm(2000, 3700.0);
  const auto p = accumulate_phase(rpm, 16000.0);
  std::vector<double> offsets(8);
  for (int k = 0; k < 8; ++k) offsets[k] = k * 2.0 * kPi / 8.0;
  const auto cyl = cylinder_phases(p.wrapped, offsets);
  for (std::size_t i = 0; i < rpm.size(); i += 97) {
    std::vector<double> v;
    for (const auto& c : cyl) v.push_back(c[i]);
    std::sort(v.begin(), v.end());
    for (int k = 1; k < 8; ++k) EXPECT_NEAR(v[k] - v[k - 1], 2.0 * kPi / 8.0, 1e-9);
    EXPECT_LT(v[0], 2.0 * kPi / 8.0 + 1e-12);
  }
}

TEST(ControlCsv, ParsesAndResamples) {
  std::istringstream in("time,rpm,torque\n0,1000,0.5\n0.5,2000,0\n1.0,1000,-0.5\n");
  const auto traj = parse_control_csv(in, 1000.0);
  EXPECT_DOUBLE_EQ(traj.duration, 1.0);
  ASSERT_EQ(traj.rpm.size(), 1001u);
  EXPECT_NEAR(traj.rpm[250], 1500.0, 1e-9);
  EXPECT_NEAR(traj.torque[750], -0.25, 1e-12);
  const auto audio = to_audio_rate(traj, 16000.0);
  EXPECT_EQ(audio.size(), 16000u);
  EXPECT_NEAR(audio.rpm[8000], 2000.0, 1e-9);
}

TEST(ControlCsv, IrregularSamplingInterpolatesLinearly) {
  std::istringstream in("time,rpm,torque\n0,1000,0\n0.013,1013,0.013\n0.2,1200,0.2\n");
  const auto traj = parse_control_csv(in, 1000.0);
  for (std::size_t i = 0; i < traj.rpm.size(); ++i) {
    EXPECT_NEAR(traj.rpm[i], 1000.0 + i, 1e-9);
    EXPECT_NEAR(traj.torque[i], 0.001 * i, 1e-12);
  }
}

TEST(ControlCsv, ErrorsCarryLineNumbers) {
  const char* bad[] = {"time,rpm,torque\n0,1000,0\n0.1,abc,0\n",
                       "time,rpm,torque\n0,1000,0\n0,1000,0\n",
                       "time,rpm,torque\n0,1000,0\n0.1,-5,0\n",
                       "time,rpm,torque\n0,1000,0\n0.1,1000\n"};
  for (const char* text : bad) {
    std::istringstream in(text);
    try {
      parse_control_csv(in, 1000.0);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
      EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
  }
}

TEST(ControlResampler, IncrementalMatchesOffline) {
  std::ostringstream csv;
  csv << std::setprecision(17) << "time,rpm,torque\n";
  ControlResampler r(1000.0, 16000.0);
  std::vector<double> rpm, tq, chunk_r, chunk_t;
  for (int i = 0; i <= 137; ++i) {
    const double t = i * 0.0073;
    const double v = 900.0 + 20.0 * i + 50.0 * std::sin(i * 0.3);
    const double q = std::cos(i * 0.2);
    csv << t << "," << v << "," << q << "\n";
    ASSERT_TRUE(r.push(t, v, q));
    r.pull(chunk_r, chunk_t);
  }
  r.finish();
  r.pull(chunk_r, chunk_t);
  std::istringstream in(csv.str());
  const auto audio = to_audio_rate(parse_control_csv(in, 1000.0), 16000.0);
  ASSERT_EQ(chunk_r.size(), audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) {
    ASSERT_EQ(chunk_r[i], audio.rpm[i]) << i;
    ASSERT_EQ(chunk_t[i], audio.torque[i]) << i;
  }
}

TEST(Upsample, AdjointIdentity) {
  // <U x, g> == <x, U^T g> for the frame-to-audio interpolation.
  std::vector<double> track(13), g(1500);
  for (std::size_t i = 0; i < track.size(); ++i) track[i] = std::sin(1.7 * i);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::cos(0.37 * i);
  const auto up = upsample_frames(track, 128.0, g.size());
  std::vector<double> adj(track.size(), 0.0);
  upsample_frames_adjoint(g, 128.0, adj);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += up[i] * g[i];
  for (std::size_t i = 0; i < track.size(); ++i) rhs += track[i] * adj[i];
  EXPECT_NEAR(lhs, rhs, 1e-9);
}
