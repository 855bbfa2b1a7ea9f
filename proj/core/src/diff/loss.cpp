#include "ptr/diff/loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ptr/error.hpp"
#include "ptr/fft.hpp"

namespace ptr::diff {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double safe_den(double x) { return x > 0.0 ? x : 1e-300; }

// Gradient of a loss w.r.t. the magnitudes of a real FFT, pulled back to the
// (windowed, zero-padded) time frame: dL/dx_t = sum_k Re(G_k S_k/|S_k| e^{i w k t}).
void magnitude_backward(const RealFft& fft, std::vector<Complex>& z, std::span<const Complex> spec,
                        std::span<const double> mag_grad, std::vector<double>& frame_grad) {
  const std::size_t bins = spec.size();
  for (std::size_t k = 0; k < bins; ++k) {
    const double mag = std::abs(spec[k]);
    z[k] = (mag > 0.0 && mag_grad[k] != 0.0) ? spec[k] * (mag_grad[k] / mag) : Complex{};
    // c2r doubles the interior bins of a Hermitian spectrum.
    if (k != 0 && 2 * k != fft.size()) z[k] *= 0.5;
  }
  fft.inverse(z, frame_grad);
}

}  // namespace

std::vector<std::size_t> default_stft_sizes() {
  return {32768, 16384, 8192, 4096, 2048, 1024, 512, 256, 128, 64, 32};
}

MrStftLoss::MrStftLoss(std::span<const double> target, std::vector<std::size_t> fft_sizes,
                       double log_floor)
    : length_(target.size()), log_floor_(log_floor) {
  for (std::size_t n : fft_sizes) {
    require(n >= 4 && n % 4 == 0, ErrorKind::kConfig, "STFT sizes must be multiples of 4");
    if (n > length_) {
      dropped_.push_back(n);
      continue;
    }
    Resolution r;
    r.size = n;
    r.hop = n / 4;
    r.frames = (length_ - n) / r.hop + 1;
    r.window = hann_window(n);
    RealFft fft(n);
    const std::size_t bins = fft.bins();
    r.target_mag.resize(r.frames * bins);
    std::vector<double> frame(n);
    std::vector<Complex> spec(bins);
    for (std::size_t f = 0; f < r.frames; ++f) {
      for (std::size_t i = 0; i < n; ++i) frame[i] = target[f * r.hop + i] * r.window[i];
      fft.forward(frame, spec);
      for (std::size_t k = 0; k < bins; ++k) {
        const double m = std::abs(spec[k]);
        r.target_mag[f * bins + k] = m;
        r.target_norm2 += m * m;
        r.target_sum += m;
      }
    }
    res_.push_back(std::move(r));
  }
}

double MrStftLoss::evaluate(std::span<const double> y_hat, std::vector<double>* grad,
                            LossBreakdown* breakdown) const {
  require(y_hat.size() == length_, ErrorKind::kInvalidInput,
          "STFT loss: signal length differs from the target");
  if (grad) grad->assign(length_, 0.0);
  if (breakdown) {
    breakdown->stft_per_resolution.clear();
    breakdown->dropped_resolutions = dropped_;
  }
  if (res_.empty()) return 0.0;
  const double weight = 1.0 / static_cast<double>(res_.size());
  double total = 0.0;
  for (const auto& r : res_) {
    RealFft fft(r.size);
    const std::size_t bins = fft.bins();
    const std::size_t count = r.frames * bins;
    std::vector<Complex> spec(count);
    std::vector<double> frame(r.size);
    double diff2 = 0.0, l1 = 0.0, logsum = 0.0, energy = 0.0;
    for (std::size_t f = 0; f < r.frames; ++f) {
      for (std::size_t i = 0; i < r.size; ++i) frame[i] = y_hat[f * r.hop + i] * r.window[i];
      std::span<Complex> s(spec.data() + f * bins, bins);
      fft.forward(frame, s);
      for (std::size_t k = 0; k < bins; ++k) {
        const double m = r.target_mag[f * bins + k];
        const double mh = std::abs(s[k]);
        const double d = m - mh;
        diff2 += d * d;
        l1 += std::abs(d);
        logsum += std::abs(std::log(m + log_floor_) - std::log(mh + log_floor_));
        energy += mh * mh;
      }
    }
    const double tnorm = std::sqrt(r.target_norm2);
    const double dnorm = std::sqrt(diff2);
    ResolutionTerms terms;
    terms.fft_size = r.size;
    terms.spectral_convergence = dnorm / safe_den(tnorm);
    terms.linear_mag = l1 / safe_den(r.target_sum);
    terms.log_mag = logsum / static_cast<double>(count);
    terms.energy = std::abs(r.target_norm2 - energy) / safe_den(r.target_norm2);
    total += weight * terms.sum();
    if (breakdown) breakdown->stft_per_resolution.push_back(terms);

    if (!grad) continue;
    const double sc_scale = dnorm > 0.0 ? 1.0 / (dnorm * safe_den(tnorm)) : 0.0;
    const double lin_scale = 1.0 / safe_den(r.target_sum);
    const double log_scale = 1.0 / static_cast<double>(count);
    const double en_scale = 2.0 * sign(energy - r.target_norm2) / safe_den(r.target_norm2);
    std::vector<double> mag_grad(bins), frame_grad(r.size);
    std::vector<Complex> z(bins);
    for (std::size_t f = 0; f < r.frames; ++f) {
      std::span<const Complex> s(spec.data() + f * bins, bins);
      for (std::size_t k = 0; k < bins; ++k) {
        const double m = r.target_mag[f * bins + k];
        const double mh = std::abs(s[k]);
        const double lg = sign(std::log(mh + log_floor_) - std::log(m + log_floor_));
        mag_grad[k] = weight * ((mh - m) * sc_scale + sign(mh - m) * lin_scale +
                                lg * log_scale / (mh + log_floor_) + en_scale * mh);
      }
      magnitude_backward(fft, z, s, mag_grad, frame_grad);
      for (std::size_t i = 0; i < r.size; ++i) (*grad)[f * r.hop + i] += frame_grad[i] * r.window[i];
    }
  }
  if (breakdown) breakdown->stft = total;
  return total;
}

// ---------------------------------------------------------------------------

HarmonicLoss::HarmonicLoss(std::span<const double> target, std::span<const double> rpm,
                           double sample_rate, HarmonicLossConfig cfg)
    : cfg_(cfg), sample_rate_(sample_rate), length_(target.size()) {
  require(rpm.size() == target.size(), ErrorKind::kInvalidInput,
          "harmonic loss: rpm and target lengths differ");
  require(cfg.fft_size >= cfg.window && cfg.window > 0 && cfg.hop > 0 && cfg.orders > 0 &&
              cfg.half_width >= 0,
          ErrorKind::kConfig, "invalid harmonic loss configuration");
  if (length_ == 0) return;
  const std::size_t w = std::min(cfg.window, length_);
  window_ = hann_window(w);
  RealFft fft(cfg.fft_size);
  std::vector<double> frame(w);
  std::vector<Complex> spec(fft.bins());
  const long half = static_cast<long>(cfg.fft_size / 2);
  for (std::size_t start = 0; start + w <= length_; start += cfg.hop) {
    double mean_rpm = 0.0;
    for (std::size_t i = 0; i < w; ++i) mean_rpm += rpm[start + i];
    const double f0 = mean_rpm / static_cast<double>(w) / 120.0;
    if (!(f0 > 0.0)) continue;
    Frame fr;
    fr.start = start;
    for (int k = 1; k <= cfg.orders; ++k) {
      const long c = std::lround(k * f0 * static_cast<double>(cfg.fft_size) / sample_rate);
      if (c + cfg.half_width > half) break;
      fr.centers.push_back(c);
      fr.orders.push_back(k);
    }
    if (fr.centers.empty()) continue;
    for (std::size_t i = 0; i < w; ++i) frame[i] = target[start + i] * window_[i];
    fft.forward(frame, spec);
    for (long c : fr.centers) {
      double e = 0.0;
      for (long b = std::max(0L, c - cfg.half_width); b <= c + cfg.half_width; ++b) e += std::abs(spec[b]);
      fr.target.push_back(e);
    }
    terms_ += fr.centers.size();
    frames_.push_back(std::move(fr));
  }
}

double HarmonicLoss::evaluate(std::span<const double> y_hat, std::vector<double>* grad,
                              std::vector<double>* per_order) const {
  require(y_hat.size() == length_, ErrorKind::kInvalidInput,
          "harmonic loss: signal length differs from the target");
  if (grad) grad->assign(length_, 0.0);
  std::vector<double> order_sum(static_cast<std::size_t>(cfg_.orders), 0.0);
  std::vector<std::size_t> order_count(static_cast<std::size_t>(cfg_.orders), 0);
  if (terms_ == 0) {
    if (per_order) per_order->assign(order_sum.size(), 0.0);
    return 0.0;
  }
  const std::size_t w = window_.size();
  RealFft fft(cfg_.fft_size);
  std::vector<double> frame(w), frame_grad(cfg_.fft_size), mag_grad;
  std::vector<Complex> spec(fft.bins()), z;
  if (grad) {
    mag_grad.resize(fft.bins());
    z.resize(fft.bins());
  }
  const double inv_terms = 1.0 / static_cast<double>(terms_);
  const double d = cfg_.log_floor;
  double total = 0.0;
  for (const auto& fr : frames_) {
    for (std::size_t i = 0; i < w; ++i) frame[i] = y_hat[fr.start + i] * window_[i];
    fft.forward(frame, spec);
    if (grad) std::fill(mag_grad.begin(), mag_grad.end(), 0.0);
    for (std::size_t j = 0; j < fr.centers.size(); ++j) {
      const long c = fr.centers[j];
      const long lo = std::max(0L, c - cfg_.half_width);
      double e = 0.0;
      for (long b = lo; b <= c + cfg_.half_width; ++b) e += std::abs(spec[b]);
      const double diff = std::log(e + d) - std::log(fr.target[j] + d);
      total += std::abs(diff);
      const auto k = static_cast<std::size_t>(fr.orders[j] - 1);
      order_sum[k] += std::abs(diff);
      ++order_count[k];
      if (grad) {
        const double g = sign(diff) * inv_terms / (e + d);
        for (long b = lo; b <= c + cfg_.half_width; ++b) mag_grad[b] += g;
      }
    }
    if (grad) {
      magnitude_backward(fft, z, spec, mag_grad, frame_grad);
      for (std::size_t i = 0; i < w; ++i) (*grad)[fr.start + i] += frame_grad[i] * window_[i];
    }
  }
  if (per_order) {
    per_order->assign(order_sum.size(), 0.0);
    for (std::size_t k = 0; k < order_sum.size(); ++k) {
      if (order_count[k] > 0) (*per_order)[k] = order_sum[k] / static_cast<double>(order_count[k]);
    }
  }
  return total * inv_terms;
}

std::vector<std::vector<double>> HarmonicLoss::order_energies(std::span<const double> y,
                                                               bool squared) const {
  require(y.size() == length_, ErrorKind::kInvalidInput,
          "harmonic loss: signal length differs from the target");
  std::vector<std::vector<double>> out;
  const std::size_t w = window_.size();
  RealFft fft(cfg_.fft_size);
  std::vector<double> frame(w);
  std::vector<Complex> spec(fft.bins());
  for (const auto& fr : frames_) {
    for (std::size_t i = 0; i < w; ++i) frame[i] = y[fr.start + i] * window_[i];
    fft.forward(frame, spec);
    std::vector<double> e(static_cast<std::size_t>(cfg_.orders), 0.0);
    for (std::size_t j = 0; j < fr.centers.size(); ++j) {
      const long c = fr.centers[j];
      double acc = 0.0;
      for (long b = std::max(0L, c - cfg_.half_width); b <= c + cfg_.half_width; ++b) {
        const double m = std::abs(spec[b]);
        acc += squared ? m * m : m;
      }
      e[static_cast<std::size_t>(fr.orders[j] - 1)] = acc;
    }
    out.push_back(std::move(e));
  }
  return out;
}

LossBreakdown mrstft_loss(std::span<const double> y, std::span<const double> y_hat) {
  LossBreakdown b;
  MrStftLoss loss(y);
  b.stft = loss.evaluate(y_hat, nullptr, &b);
  b.total = b.stft;
  return b;
}

double harmonic_loss(std::span<const double> y, std::span<const double> y_hat,
                     std::span<const double> rpm, double sample_rate,
                     std::vector<double>* per_order) {
  HarmonicLoss loss(y, rpm, sample_rate);
  return loss.evaluate(y_hat, nullptr, per_order);
}

NodeId mrstft_node(Tape& t, NodeId y_hat, const MrStftLoss& loss, LossBreakdown* breakdown) {
  auto grad = std::make_shared<std::vector<double>>();
  const double v = loss.evaluate(t.value(y_hat), t.requires_grad(y_hat) ? grad.get() : nullptr,
                                 breakdown);
  return t.record("mrstft", {y_hat}, Vec{v}, [grad](const Vec& g, std::span<Vec* const> in) {
    if (!in[0]) return;
    for (std::size_t i = 0; i < grad->size(); ++i) (*in[0])[i] += g[0] * (*grad)[i];
  });
}

NodeId harmonic_node(Tape& t, NodeId y_hat, const HarmonicLoss& loss,
                     std::vector<double>* per_order) {
  auto grad = std::make_shared<std::vector<double>>();
  const double v = loss.evaluate(t.value(y_hat), t.requires_grad(y_hat) ? grad.get() : nullptr,
                                 per_order);
  return t.record("harmonic", {y_hat}, Vec{v}, [grad](const Vec& g, std::span<Vec* const> in) {
    if (!in[0]) return;
    for (std::size_t i = 0; i < grad->size(); ++i) (*in[0])[i] += g[0] * (*grad)[i];
  });
}

}  // namespace ptr::diff
