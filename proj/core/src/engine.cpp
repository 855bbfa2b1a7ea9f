#include "ptr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ptr/control.hpp"
#include "ptr/error.hpp"
#include "ptr/pulse.hpp"

namespace ptr::engine {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_open(std::uint64_t h) {
  // (0, 1), never exactly 0 so log() is safe.
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t channel, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ channel) ^ index);
}
}  // namespace

void EngineConfig::validate() const {
  std::array<bool, kCylinders> seen{};
  for (int c : firing_order) {
    require(c >= 1 && c <= kCylinders && !seen[c - 1], ErrorKind::kConfig,
            "firing order must be a permutation of cylinders 1..8");
    seen[c - 1] = true;
  }
  require(cycle_degrees > 0.0, ErrorKind::kConfig, "cycle_degrees must be positive");
  require(timing_limit_deg > 0.0, ErrorKind::kConfig, "timing_limit_deg must be positive");
}

std::array<double, kCylinders> firing_offsets(const EngineConfig& config) {
  config.validate();
  std::array<double, kCylinders> out{};
  for (int j = 0; j < kCylinders; ++j) {
    out[config.firing_order[j] - 1] = -j * kTwoPi / kCylinders;
  }
  return out;
}

double crank_to_phase(double degrees, const EngineConfig& config) {
  return degrees / config.cycle_degrees * kTwoPi;
}

void NoiseParams::validate() const {
  require(!band_gains.empty(), ErrorKind::kInvalidInput, "noise band_gains must not be empty");
  std::size_t frames = 1;
  for (const auto& g : band_gains) frames = std::max(frames, g.size());
  for (const auto& g : band_gains) {
    require(g.size() == 1 || g.size() == frames, ErrorKind::kInvalidInput,
            "band gain tracks must have length 1 or a common frame count");
    for (double v : g) {
      require(std::isfinite(v) && v >= 0.0, ErrorKind::kParameterRange,
              "band gains must be finite and >= 0");
    }
  }
  require(std::isfinite(turb_depth) && turb_depth >= 0.0, ErrorKind::kParameterRange,
          "turb_depth must be >= 0");
  require(std::isfinite(intake_alpha) && intake_alpha > 0.0, ErrorKind::kParameterRange,
          "intake_alpha must be > 0");
  require(std::isfinite(intake_beta) && intake_beta >= 0.0, ErrorKind::kParameterRange,
          "intake_beta must be >= 0");
}

double hz_to_erb_number(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }

double erb_number_to_hz(double erb) { return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437; }

ErbLayout::ErbLayout(int bands, double low_hz, double sample_rate) {
  require(bands >= 1, ErrorKind::kConfig, "noise bank needs at least one band");
  require(low_hz > 0.0 && low_hz < sample_rate / 2.0, ErrorKind::kConfig,
          "noise bank low edge must lie in (0, Nyquist)");
  const double lo = hz_to_erb_number(low_hz);
  const double hi = hz_to_erb_number(sample_rate / 2.0);
  spacing_ = bands > 1 ? (hi - lo) / (bands - 1) : 1.0;
  for (int b = 0; b < bands; ++b) centers_.push_back(lo + b * spacing_);
}

double ErbLayout::weight(int b, double hz) const {
  const int nb = bands();
  if (nb == 1) return 1.0;
  const double e = hz_to_erb_number(std::max(hz, 0.0));
  const double c = centers_[static_cast<std::size_t>(b)];
  // Outermost bands extend flat past their centres so the bank sums to one.
  if ((b == 0 && e <= c) || (b == nb - 1 && e >= c)) return 1.0;
  const double d = std::abs(e - c) / spacing_;
  if (d >= 1.0) return 0.0;
  const double w = std::cos(0.5 * std::numbers::pi * d);
  return w * w;
}

double counter_uniform(std::uint64_t seed, std::uint64_t channel, std::int64_t index) {
  return unit_open(counter_hash(seed, channel, static_cast<std::uint64_t>(index)));
}

double counter_gaussian(std::uint64_t seed, std::uint64_t channel, std::int64_t index) {
  const auto i = static_cast<std::uint64_t>(index) * 2;
  const double u1 = unit_open(counter_hash(seed, channel, i));
  const double u2 = unit_open(counter_hash(seed, channel, i + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

BandNoiseSource::BandNoiseSource(int bands, double low_hz, double sample_rate, int block,
                                 std::uint64_t seed, std::uint64_t channel)
    : layout_(bands, low_hz, sample_rate),
      block_(block),
      hop_(block / 2),
      seed_(seed),
      channel_(channel),
      fft_(static_cast<std::size_t>(block)) {
  require(block >= 4 && block % 2 == 0, ErrorKind::kConfig, "noise block must be even and >= 4");
  window_ = hann_window(static_cast<std::size_t>(block));
  const std::size_t bins = fft_.bins();
  masks_.assign(static_cast<std::size_t>(bands), std::vector<double>(bins));
  for (int b = 0; b < bands; ++b) {
    for (std::size_t k = 0; k < bins; ++k) {
      masks_[b][k] = layout_.weight(b, static_cast<double>(k) * sample_rate / block);
    }
  }
  scratch_.resize(static_cast<std::size_t>(block));
  spectrum_.resize(bins);
  shaped_.resize(bins);
}

const std::vector<double>& BandNoiseSource::block(std::int64_t j) {
  auto it = cache_.find(j);
  if (it != cache_.end()) return it->second;
  const std::size_t n = static_cast<std::size_t>(block_);
  const std::int64_t origin = j * hop_;
  for (std::size_t m = 0; m < n; ++m) {
    scratch_[m] = counter_gaussian(seed_, channel_, origin + static_cast<std::int64_t>(m));
  }
  fft_.forward(scratch_, spectrum_);
  std::vector<double> out(static_cast<std::size_t>(bands()) * n);
  const double scale = 1.0 / static_cast<double>(n);
  for (int b = 0; b < bands(); ++b) {
    const auto& mask = masks_[static_cast<std::size_t>(b)];
    for (std::size_t k = 0; k < spectrum_.size(); ++k) shaped_[k] = spectrum_[k] * mask[k];
    fft_.inverse(shaped_, scratch_);
    double* dst = out.data() + static_cast<std::size_t>(b) * n;
    for (std::size_t m = 0; m < n; ++m) dst[m] = scratch_[m] * scale * window_[m];
  }
  return cache_.emplace(j, std::move(out)).first->second;
}

void BandNoiseSource::render(std::int64_t start, std::size_t count, std::span<double> out) {
  const std::size_t nb = static_cast<std::size_t>(bands());
  require(out.size() >= nb * count, ErrorKind::kInvalidInput, "noise output buffer too small");
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(nb * count), 0.0);
  if (count == 0) return;
  const std::int64_t end = start + static_cast<std::int64_t>(count);
  auto floor_div = [](std::int64_t a, std::int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
  };
  const std::int64_t first = floor_div(start, hop_) - 1;
  const std::int64_t last = floor_div(end - 1, hop_);
  const std::size_t n = static_cast<std::size_t>(block_);
  for (std::int64_t j = first; j <= last; ++j) {
    const auto& blk = block(j);
    const std::int64_t origin = j * hop_;
    const std::int64_t lo = std::max(start, origin);
    const std::int64_t hi = std::min(end, origin + block_);
    for (std::size_t b = 0; b < nb; ++b) {
      const double* src = blk.data() + b * n;
      double* dst = out.data() + b * count;
      for (std::int64_t t = lo; t < hi; ++t) dst[t - start] += src[t - origin];
    }
  }
  // Blocks before `first` cannot be needed by a later, non-overlapping request.
  cache_.erase(cache_.begin(), cache_.lower_bound(last - 1));
}

std::vector<double> BandNoiseSource::render(std::int64_t start, std::size_t count) {
  std::vector<double> out(static_cast<std::size_t>(bands()) * count);
  render(start, count, out);
  return out;
}

void mix_noise_bands(std::span<const double> band_signals, std::size_t count,
                     const std::vector<std::vector<double>>& band_gains, double frame_hop,
                     std::int64_t start, std::span<double> out) {
  require(band_signals.size() >= band_gains.size() * count, ErrorKind::kInvalidInput,
          "band signal buffer too small");
  require(out.size() >= count, ErrorKind::kInvalidInput, "noise mix output too small");
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
  for (std::size_t b = 0; b < band_gains.size(); ++b) {
    const auto& g = band_gains[b];
    const double* src = band_signals.data() + b * count;
    for (std::size_t i = 0; i < count; ++i) {
      out[i] += control::frame_value_at(g, frame_hop, start + static_cast<std::int64_t>(i)) * src[i];
    }
  }
}

std::vector<double> erb_noise_bank(const std::vector<std::vector<double>>& band_gains,
                                   std::uint64_t seed, std::uint64_t channel, std::size_t length,
                                   double sample_rate, double frame_hop, double low_hz, int block) {
  require(!band_gains.empty(), ErrorKind::kInvalidInput, "band_gains must not be empty");
  BandNoiseSource src(static_cast<int>(band_gains.size()), low_hz, sample_rate, block, seed, channel);
  const auto bands = src.render(0, length);
  std::vector<double> out(length);
  mix_noise_bands(bands, length, band_gains, frame_hop, 0, out);
  return out;
}

std::vector<double> augment_pulse(const AugmentInputs& in, double turb_depth, double intake_alpha,
                                  double intake_beta) {
  const std::size_t n = in.pulse.size();
  for (auto s : {in.eta, in.g_thr, in.g_dfco, in.engine_phase}) {
    require(s.size() == n, ErrorKind::kInvalidInput, "augment_pulse: series length mismatch");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double env = pulse::pressure_envelope(in.engine_phase[i], intake_alpha, intake_beta);
    out[i] = augment_sample(in.pulse[i], in.eta[i], in.g_thr[i], in.g_dfco[i], env, turb_depth);
  }
  return out;
}

BankPair mix_banks(std::span<const std::vector<double>> cylinders, const EngineConfig& config) {
  require(cylinders.size() == kCylinders, ErrorKind::kInvalidInput,
          "mix_banks expects " + std::to_string(kCylinders) + " cylinder signals");
  const std::size_t n = cylinders[0].size();
  BankPair out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (int c = 0; c < kCylinders; ++c) {
    require(cylinders[c].size() == n, ErrorKind::kInvalidInput, "cylinder lengths differ");
    auto& dst = config.bank_map[c] == Bank::kLeft ? out.left : out.right;
    for (std::size_t i = 0; i < n; ++i) dst[i] += cylinders[c][i];
  }
  return out;
}

}  // namespace ptr::engine
