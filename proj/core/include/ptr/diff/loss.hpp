#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ptr/diff/tape.hpp"

namespace ptr::diff {

inline constexpr double kLogFloor = 1e-5;

struct ResolutionTerms {
  std::size_t fft_size = 0;
  double spectral_convergence = 0.0;
  double linear_mag = 0.0;
  double log_mag = 0.0;
  double energy = 0.0;

  double sum() const { return spectral_convergence + linear_mag + log_mag + energy; }
};

struct LossBreakdown {
  double total = 0.0;
  double stft = 0.0;
  double harmonic = 0.0;
  std::vector<ResolutionTerms> stft_per_resolution;
  std::vector<std::size_t> dropped_resolutions;  // FFT sizes longer than the signal
  std::vector<double> harmonic_per_order;         // mean |log-energy diff| per order
};

std::vector<std::size_t> default_stft_sizes();

/// Multi-resolution STFT loss against a fixed target (Hann window, 75%
/// overlap). Per resolution: spectral convergence + normalized linear
/// magnitude + log magnitude + relative total energy, equally weighted; the
/// loss is the mean over resolutions.
class MrStftLoss {
 public:
  explicit MrStftLoss(std::span<const double> target,
                      std::vector<std::size_t> fft_sizes = default_stft_sizes(),
                      double log_floor = kLogFloor);

  /// Fills `breakdown` terms; accumulates dL/dy into grad when non-null.
  double evaluate(std::span<const double> y_hat, std::vector<double>* grad,
                  LossBreakdown* breakdown = nullptr) const;

  const std::vector<std::size_t>& dropped() const { return dropped_; }

 private:
  struct Resolution {
    std::size_t size;
    std::size_t hop;
    std::size_t frames;
    std::vector<double> window;
    std::vector<double> target_mag;  // frames * bins
    double target_norm2 = 0.0;
    double target_sum = 0.0;
  };

  std::size_t length_;
  double log_floor_;
  std::vector<Resolution> res_;
  std::vector<std::size_t> dropped_;
};

struct HarmonicLossConfig {
  std::size_t fft_size = 65536;
  std::size_t window = 16384;
  std::size_t hop = 256;
  int orders = 48;
  int half_width = 3;  // bins either side of each engine order
  double log_floor = kLogFloor;
};

/// Engine-order energy loss: mean over frames and orders of
/// |log(E_k + d) - log(E^_k + d)| where E_k sums magnitudes within
/// +-half_width bins of k * f0, f0 = mean frame RPM / 120.
class HarmonicLoss {
 public:
  HarmonicLoss(std::span<const double> target, std::span<const double> rpm, double sample_rate,
               HarmonicLossConfig cfg = {});

  double evaluate(std::span<const double> y_hat, std::vector<double>* grad,
                  std::vector<double>* per_order = nullptr) const;

  std::size_t frames() const { return frames_.size(); }
  std::size_t terms() const { return terms_; }

  /// Per-frame per-order energies of an arbitrary signal (squared=false sums
  /// magnitudes, squared=true sums power).
  std::vector<std::vector<double>> order_energies(std::span<const double> y, bool squared) const;

 private:
  struct Frame {
    std::size_t start;
    std::vector<long> centers;     // bin centre per valid order
    std::vector<int> orders;       // engine order of each centre
    std::vector<double> target;    // target energy per valid order
  };

  HarmonicLossConfig cfg_;
  double sample_rate_;
  std::size_t length_;
  std::vector<double> window_;
  std::vector<Frame> frames_;
  std::size_t terms_ = 0;
};

/// Convenience one-shot evaluation (no caching).
LossBreakdown mrstft_loss(std::span<const double> y, std::span<const double> y_hat);
double harmonic_loss(std::span<const double> y, std::span<const double> y_hat,
                     std::span<const double> rpm, double sample_rate,
                     std::vector<double>* per_order = nullptr);

/// Tape nodes wrapping the cached losses (the loss objects must outlive the tape).
NodeId mrstft_node(Tape& t, NodeId y_hat, const MrStftLoss& loss, LossBreakdown* breakdown);
NodeId harmonic_node(Tape& t, NodeId y_hat, const HarmonicLoss& loss,
                     std::vector<double>* per_order);

}  // namespace ptr::diff
