#include "ptr/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "ptr/error.hpp"

namespace ptr {

namespace {

struct PlanPair {
  fftw_plan r2c;
  fftw_plan c2r;
};

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

PlanPair plans_for(std::size_t n) {
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(plan_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int ni = static_cast<int>(n);
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair p{fftw_plan_dft_r2c_1d(ni, r, c, flags), fftw_plan_dft_c2r_1d(ni, c, r, flags)};
  fftw_free(r);
  fftw_free(c);
  require(p.r2c != nullptr && p.c2r != nullptr, ErrorKind::kState, "FFTW planning failed");
  cache.emplace(n, p);
  return p;
}

}  // namespace

RealFft::RealFft(std::size_t size) : size_(size) {
  require(size >= 2, ErrorKind::kInvalidInput, "FFT size must be >= 2");
  auto p = plans_for(size);
  r2c_ = p.r2c;
  c2r_ = p.c2r;
  real_buf_.resize(size);
  cplx_buf_.resize(bins());
}

void RealFft::forward(std::span<const double> in, std::span<Complex> out) const {
  require(in.size() <= size_ && out.size() >= bins(), ErrorKind::kInvalidInput,
          "RealFft::forward: bad buffer sizes");
  std::copy(in.begin(), in.end(), real_buf_.begin());
  std::fill(real_buf_.begin() + static_cast<std::ptrdiff_t>(in.size()), real_buf_.end(), 0.0);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(r2c_), real_buf_.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const Complex> in, std::span<double> out) const {
  require(in.size() >= bins() && out.size() >= size_, ErrorKind::kInvalidInput,
          "RealFft::inverse: bad buffer sizes");
  // c2r destroys its input.
  std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(bins()), cplx_buf_.begin());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(c2r_), reinterpret_cast<fftw_complex*>(cplx_buf_.data()),
                       out.data());
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = std::max<std::size_t>(2, next_pow2(out_len));
  RealFft fft(n);
  std::vector<Complex> fa(fft.bins()), fb(fft.bins());
  fft.forward(a, fa);
  fft.forward(b, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k] / static_cast<double>(n);
  std::vector<double> out(n);
  fft.inverse(fa, out);
  out.resize(out_len);
  return out;
}

}  // namespace ptr
