#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ptr/fft.hpp"

namespace ptr::engine {

inline constexpr int kCylinders = 8;

enum class Bank { kLeft, kRight };

struct EngineConfig {
  std::array<int, kCylinders> firing_order{1, 5, 4, 8, 6, 3, 7, 2};
  std::array<Bank, kCylinders> bank_map{Bank::kLeft,  Bank::kLeft,  Bank::kLeft,  Bank::kLeft,
                                        Bank::kRight, Bank::kRight, Bank::kRight, Bank::kRight};
  double cycle_degrees = 720.0;
  double timing_limit_deg = 40.0;

  void validate() const;
};

/// Engine-cycle phase offset (radians) for each cylinder, indexed by
/// cylinder number - 1.
std::array<double, kCylinders> firing_offsets(const EngineConfig& config);

/// Crank-angle degrees to engine-cycle radians.
double crank_to_phase(double degrees, const EngineConfig& config);

struct NoiseParams {
  std::vector<std::vector<double>> band_gains;  // [band][frame], >= 0
  double turb_depth = 0.3;
  double intake_alpha = 4.0;
  double intake_beta = 1.5;
  std::uint64_t seed = 1;

  void validate() const;
};

// ---------------------------------------------------------------------------
// ERB noise bank

double hz_to_erb_number(double hz);
double erb_number_to_hz(double erb);

/// Amplitude-complementary raised-cosine windows on the ERB-number axis.
class ErbLayout {
 public:
  ErbLayout(int bands, double low_hz, double sample_rate);

  int bands() const { return static_cast<int>(centers_.size()); }
  double center_hz(int b) const { return erb_number_to_hz(centers_[b]); }
  /// Magnitude weight of band b at frequency hz; sums to 1 over bands.
  double weight(int b, double hz) const;

 private:
  std::vector<double> centers_;  // ERB numbers
  double spacing_;
};

/// Deterministic Gaussian noise addressed by (seed, channel, absolute index).
double counter_gaussian(std::uint64_t seed, std::uint64_t channel, std::int64_t index);
double counter_uniform(std::uint64_t seed, std::uint64_t channel, std::int64_t index);

/// Per-band filtered noise eta_b(n) for one channel. White noise is shaped
/// in the FFT domain per 2048-sample block and overlap-added with a periodic
/// Hann window at 50% hop, on a block grid fixed to absolute sample 0, so
/// any sample range renders identically however it is requested.
class BandNoiseSource {
 public:
  BandNoiseSource(int bands, double low_hz, double sample_rate, int block, std::uint64_t seed,
                  std::uint64_t channel);

  int bands() const { return layout_.bands(); }
  const ErbLayout& layout() const { return layout_; }

  /// out[b * count + i] = eta_b(start + i).
  void render(std::int64_t start, std::size_t count, std::span<double> out);
  std::vector<double> render(std::int64_t start, std::size_t count);

 private:
  const std::vector<double>& block(std::int64_t j);

  ErbLayout layout_;
  int block_;
  int hop_;
  std::uint64_t seed_;
  std::uint64_t channel_;
  RealFft fft_;
  std::vector<double> window_;
  std::vector<std::vector<double>> masks_;  // [band][bin]
  std::map<std::int64_t, std::vector<double>> cache_;
  std::vector<double> scratch_;
  std::vector<Complex> spectrum_;
  std::vector<Complex> shaped_;
};

/// eta(t) = sum_b alpha_b(t) eta_b(t), band gains given at frame rate.
std::vector<double> erb_noise_bank(const std::vector<std::vector<double>>& band_gains,
                                   std::uint64_t seed, std::uint64_t channel, std::size_t length,
                                   double sample_rate, double frame_hop, double low_hz = 60.0,
                                   int block = 2048);

/// Sums band signals (layout of BandNoiseSource::render) with audio-rate
/// gains taken from frame tracks.
void mix_noise_bands(std::span<const double> band_signals, std::size_t count,
                     const std::vector<std::vector<double>>& band_gains, double frame_hop,
                     std::int64_t start, std::span<double> out);

// ---------------------------------------------------------------------------
// Augmentation and bank mixing

struct AugmentInputs {
  std::span<const double> pulse;
  std::span<const double> eta;
  std::span<const double> g_thr;
  std::span<const double> g_dfco;
  std::span<const double> engine_phase;  // wrapped
};

/// P^ = P*(1 + turb*g_thr*eta) + eta*(E(phi)*g_thr + g_dfco).
std::vector<double> augment_pulse(const AugmentInputs& in, double turb_depth, double intake_alpha,
                                  double intake_beta);

inline double augment_sample(double p, double eta, double g_thr, double g_dfco, double envelope,
                             double turb) {
  return p * (1.0 + turb * g_thr * eta) + eta * (envelope * g_thr + g_dfco);
}

struct BankPair {
  std::vector<double> left;
  std::vector<double> right;
};

BankPair mix_banks(std::span<const std::vector<double>> cylinders, const EngineConfig& config = {});

}  // namespace ptr::engine
