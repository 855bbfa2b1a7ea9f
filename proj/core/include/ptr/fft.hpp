#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ptr {

using Complex = std::complex<double>;

/// Real-to-complex FFT of a fixed power-of-two (or any) size, backed by FFTW.
/// Plans are created once per size and shared; execution is thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t size);

  std::size_t size() const { return size_; }
  std::size_t bins() const { return size_ / 2 + 1; }

  /// `in` may be shorter than size(); it is zero-padded.
  void forward(std::span<const double> in, std::span<Complex> out) const;
  /// Unnormalized inverse (FFTW convention): inverse(forward(x)) == size()*x.
  void inverse(std::span<const Complex> in, std::span<double> out) const;

 private:
  std::size_t size_;
  void* r2c_;
  void* c2r_;
  mutable std::vector<double> real_buf_;
  mutable std::vector<Complex> cplx_buf_;
};

std::size_t next_pow2(std::size_t n);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Linear convolution via FFT, result length a.size() + b.size() - 1.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace ptr
