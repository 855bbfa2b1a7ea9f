#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "ptr/engine.hpp"
#include "ptr/error.hpp"

using namespace ptr;
using namespace ptr::engine;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(FiringOffsets, FollowFiringOrder) {
  EngineConfig cfg;
  const auto off = firing_offsets(cfg);
  EXPECT_EQ(off[0], 0.0);                       // cylinder 1 fires first
  EXPECT_NEAR(off[4], -2.0 * kPi / 8.0, 1e-15);  // cylinder 5 fires second
  // j-th cylinder in the firing order sits j eighths of a cycle later.
  for (int j = 0; j < kCylinders; ++j) {
    EXPECT_NEAR(off[static_cast<std::size_t>(cfg.firing_order[j] - 1)], -j * 2.0 * kPi / 8.0, 1e-12);
  }
  std::vector<double> sorted(off.begin(), off.end());
  std::sort(sorted.begin(), sorted.end());
  for (int k = 1; k < kCylinders; ++k) EXPECT_NEAR(sorted[k] - sorted[k - 1], 2.0 * kPi / 8.0, 1e-12);
}

TEST(EngineConfig, RejectsBadFiringOrder) {
  EngineConfig cfg;
  cfg.firing_order = {1, 5, 4, 8, 6, 3, 7, 7};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.firing_order = {1, 5, 4, 8, 6, 3, 7, 9};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(EngineConfig, CrankDegreesToCyclePhase) {
  EngineConfig cfg;
  EXPECT_NEAR(crank_to_phase(720.0, cfg), 2.0 * kPi, 1e-15);
  EXPECT_NEAR(crank_to_phase(-40.0, cfg), -40.0 / 720.0 * 2.0 * kPi, 1e-15);
}

TEST(ErbLayout, WeightsSumToOne) {
  ErbLayout layout(16, 60.0, 16000.0);
  for (double hz = 0.0; hz <= 8000.0; hz += 3.7) {
    double s = 0.0;
    for (int b = 0; b < 16; ++b) s += layout.weight(b, hz);
    EXPECT_NEAR(s, 1.0, 1e-12) << hz;
  }
  for (double hz : {100.0, 1000.0, 7000.0}) EXPECT_NEAR(erb_number_to_hz(hz_to_erb_number(hz)), hz, 1e-9);
  for (int b = 1; b < 16; ++b) EXPECT_GT(layout.center_hz(b), layout.center_hz(b - 1));
}

TEST(CounterRng, MomentsAndIndependenceOfChannels) {
  const int n = 200000;
  double m = 0.0, v = 0.0, cross = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = counter_gaussian(5, 0, i);
    m += g;
    v += g * g;
    cross += g * counter_gaussian(5, 1, i);
  }
  m /= n;
  v = v / n - m * m;
  EXPECT_NEAR(m, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(v, 1.0, 0.02);
  EXPECT_NEAR(cross / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_EQ(counter_gaussian(5, 0, 123), counter_gaussian(5, 0, 123));
  EXPECT_NE(counter_gaussian(5, 0, 123), counter_gaussian(6, 0, 123));
  for (int i = 0; i < 1000; ++i) {
    const double u = counter_uniform(9, 2, i);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(BandNoise, BandsSumBackToWhiteNoise) {
  BandNoiseSource src(16, 60.0, 16000.0, 2048, 42, 0);
  const std::size_t n = 10000;
  const auto bands = src.render(0, n);
  double worst = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t b = 0; b < 16; ++b) s += bands[b * n + t];
    worst = std::max(worst, std::abs(s - counter_gaussian(42, 0, static_cast<std::int64_t>(t))));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(BandNoise, ChunkedRenderingIsIdentical) {
  BandNoiseSource whole(16, 60.0, 16000.0, 2048, 7, 1);
  BandNoiseSource parts(16, 60.0, 16000.0, 2048, 7, 1);
  const std::size_t n = 9000;
  const auto ref = whole.render(0, n);
  std::mt19937 rng(1);
  std::size_t pos = 0;
  while (pos < n) {
    const std::size_t len = std::min<std::size_t>(n - pos, 1 + rng() % 1500);
    const auto chunk = parts.render(static_cast<std::int64_t>(pos), len);
    for (std::size_t b = 0; b < 16; ++b) {
      for (std::size_t i = 0; i < len; ++i) ASSERT_EQ(chunk[b * len + i], ref[b * n + pos + i]);
    }
    pos += len;
  }
}

TEST(NoiseBank, ZeroGainsAreSilentAndSeedsAreDeterministic) {
  std::vector<std::vector<double>> zero(16, std::vector<double>{0.0});
  for (double v : erb_noise_bank(zero, 3, 0, 4000, 16000.0, 128.0)) EXPECT_EQ(v, 0.0);
  std::vector<std::vector<double>> g(16, std::vector<double>{0.1});
  EXPECT_EQ(erb_noise_bank(g, 3, 0, 4000, 16000.0, 128.0), erb_noise_bank(g, 3, 0, 4000, 16000.0, 128.0));
  EXPECT_NE(erb_noise_bank(g, 3, 0, 4000, 16000.0, 128.0), erb_noise_bank(g, 4, 0, 4000, 16000.0, 128.0));
}

TEST(NoiseBank, SingleBandIsBandLimited) {
  ErbLayout layout(16, 60.0, 16000.0);
  const std::size_t n = 8192;
  for (int band : {3, 8, 13}) {
    std::vector<std::vector<double>> g(16, std::vector<double>{0.0});
    g[static_cast<std::size_t>(band)] = {1.0};
    const auto eta = erb_noise_bank(g, 11, 0, n, 16000.0, 128.0);
    // -20 dB support: magnitude weight >= 0.1.
    double lo = 8000.0, hi = 0.0;
    for (double hz = 0.0; hz <= 8000.0; hz += 1.0) {
      if (layout.weight(band, hz) >= 0.1) {
        lo = std::min(lo, hz);
        hi = std::max(hi, hz);
      }
    }
    const double inside = test::band_energy(eta, 16000.0, lo, hi);
    const double total = test::band_energy(eta, 16000.0, 0.0, 8000.0);
    EXPECT_GE(inside / total, 0.9) << "band " << band << " [" << lo << ", " << hi << "]";
  }
}

TEST(Augment, DisabledIsIdentity) {
  const std::size_t n = 500;
  std::vector<double> p(n), eta(n, 0.0), thr(n, 1.0), dfco(n, 0.02), ph(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::sin(0.1 * i);
    ph[i] = std::fmod(0.05 * i, 2.0 * kPi);
  }
  const auto out = augment_pulse({p, eta, thr, dfco, ph}, 0.0, 4.0, 1.5);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(out[i], p[i]);
}

TEST(Augment, MatchesElementwiseReference) {
  const std::size_t n = 3000;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> p(n), eta(n), thr(n), dfco(n), ph(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tq = std::sin(0.004 * i);
    p[i] = std::sin(0.2 * i);
    eta[i] = 0.1 * g(rng);
    thr[i] = std::pow(std::max(tq, 0.02), 0.7);
    dfco[i] = std::max(-tq, 0.02);
    ph[i] = std::fmod(0.011 * i, 2.0 * kPi);
  }
  const double turb = 0.4, a = 3.0, b = 1.2;
  const auto out = augment_pulse({p, eta, thr, dfco, ph}, turb, a, b);
  double drive = 0.0, overrun = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double env = (1.0 - std::exp(-a * ph[i])) * std::exp(-b * ph[i]);
    const double ref = p[i] * (1.0 + turb * thr[i] * eta[i]) + eta[i] * (env * thr[i] + dfco[i]);
    EXPECT_NEAR(out[i], ref, 1e-14);
    (dfco[i] > 0.5 ? overrun : drive) += 1.0;
  }
  EXPECT_GT(drive, 0.0);
  EXPECT_GT(overrun, 0.0);
}

TEST(Augment, OverrunIsNoiseDominated) {
  // torque = -1: throttle gate at its floor, additive DFCO noise dominates.
  const std::size_t n = 4000;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> p(n), eta(n), thr(n, std::pow(0.02, 0.7)), dfco(n, 1.0), ph(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = 0.02 * std::sin(0.2 * i);
    eta[i] = 0.2 * g(rng);
    ph[i] = std::fmod(0.011 * i, 2.0 * kPi);
  }
  const auto out = augment_pulse({p, eta, thr, dfco, ph}, 0.3, 4.0, 1.5);
  double e_pulse = 0.0, e_noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e_pulse += p[i] * p[i];
    const double noise = out[i] - p[i];
    e_noise += noise * noise;
  }
  EXPECT_GT(e_noise, 10.0 * e_pulse);
}

TEST(MixBanks, Examples) {
  const std::size_t n = 100;
  std::vector<std::vector<double>> cyl(8, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) cyl[0][i] = std::sin(0.3 * i);
  auto banks = mix_banks(cyl);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(banks.left[i], cyl[0][i]);
    EXPECT_EQ(banks.right[i], 0.0);
  }
  for (auto& c : cyl) c = cyl[0];
  banks = mix_banks(cyl);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(banks.left[i], 4.0 * cyl[0][i], 1e-15);
    EXPECT_NEAR(banks.right[i], 4.0 * cyl[0][i], 1e-15);
  }
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (auto& c : cyl) {
    for (double& v : c) v = g(rng);
  }
  EngineConfig cfg;
  banks = mix_banks(cyl, cfg);
  for (std::size_t i = 0; i < n; ++i) {
    double l = 0.0, r = 0.0;
    for (int c = 0; c < 8; ++c) (cfg.bank_map[c] == Bank::kLeft ? l : r) += cyl[c][i];
    EXPECT_EQ(banks.left[i], l);
    EXPECT_EQ(banks.right[i], r);
  }
}
