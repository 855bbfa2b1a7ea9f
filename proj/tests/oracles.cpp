#include "oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <unistd.h>

namespace ptr::test {

namespace {

// cos/sin table for exp(-2*pi*i*m/n), indexed by m mod n.
struct Twiddles {
  explicit Twiddles(std::size_t n) : c(n), s(n) {
    for (std::size_t m = 0; m < n; ++m) {
      const long double a = 2.0L * std::numbers::pi_v<long double> * m / n;
      c[m] = static_cast<double>(std::cos(a));
      s[m] = static_cast<double>(-std::sin(a));
    }
  }
  std::vector<double> c, s;
};

std::vector<double> magnitudes(std::span<const double> frame, const Twiddles& tw) {
  const std::size_t n = frame.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    long double re = 0.0L, im = 0.0L;
    std::size_t m = 0;
    for (std::size_t t = 0; t < n; ++t) {
      re += frame[t] * tw.c[m];
      im += frame[t] * tw.s[m];
      m += k;
      if (m >= n) m -= n;
    }
    mag[k] = static_cast<double>(std::sqrt(re * re + im * im));
  }
  return mag;
}

}  // namespace

std::vector<std::complex<double>> naive_rdft(std::span<const double> x) {
  const std::size_t n = x.size();
  Twiddles tw(n);
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t m = (k * t) % n;
      re += x[t] * tw.c[m];
      im += x[t] * tw.s[m];
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::pow(std::sin(std::numbers::pi * i / n), 2.0);
  return w;
}

std::vector<double> naive_frame_magnitude(std::span<const double> x, std::size_t start, std::size_t n,
                                          std::span<const double> window, std::size_t nfft) {
  std::vector<double> frame(nfft, 0.0);
  for (std::size_t i = 0; i < n && start + i < x.size(); ++i) frame[i] = x[start + i] * window[i];
  return magnitudes(frame, Twiddles(nfft));
}

double naive_mrstft(std::span<const double> y, std::span<const double> y_hat,
                    const std::vector<std::size_t>& sizes, double floor) {
  double total = 0.0;
  int used = 0;
  for (std::size_t n : sizes) {
    if (n > y.size()) continue;
    ++used;
    const std::size_t hop = n / 4;
    const auto w = hann(n);
    Twiddles tw(n);
    long double diff2 = 0, tnorm2 = 0, l1 = 0, tsum = 0, logs = 0, energy = 0;
    std::size_t count = 0;
    std::vector<double> fa(n), fb(n);
    for (std::size_t start = 0; start + n <= y.size(); start += hop) {
      for (std::size_t i = 0; i < n; ++i) {
        fa[i] = y[start + i] * w[i];
        fb[i] = y_hat[start + i] * w[i];
      }
      const auto ma = magnitudes(fa, tw);
      const auto mb = magnitudes(fb, tw);
      for (std::size_t k = 0; k < ma.size(); ++k) {
        diff2 += (ma[k] - mb[k]) * (ma[k] - mb[k]);
        tnorm2 += ma[k] * ma[k];
        l1 += std::abs(ma[k] - mb[k]);
        tsum += ma[k];
        logs += std::abs(std::log(ma[k] + floor) - std::log(mb[k] + floor));
        energy += mb[k] * mb[k];
        ++count;
      }
    }
    total += static_cast<double>(std::sqrt(diff2 / tnorm2) + l1 / tsum + logs / count +
                                 std::abs(tnorm2 - energy) / tnorm2);
  }
  return used ? total / used : 0.0;
}

double companion_pole_radius(std::span<const double> a) {
  // a[0] is unused (implicit leading 1); trailing zeros lower the order.
  std::size_t p = a.size() - 1;
  while (p > 0 && a[p] == 0.0) --p;
  if (p == 0) return 0.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) c(0, static_cast<Eigen::Index>(j)) = -a[j + 1];
  for (std::size_t i = 1; i < p; ++i) c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  const Eigen::VectorXcd ev = c.eigenvalues();
  return ev.cwiseAbs().maxCoeff();
}

std::vector<double> recursive_filter(std::span<const double> x, std::span<const double> a) {
  std::vector<long double> y(x.size(), 0.0L);
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    long double acc = x[n];
    for (std::size_t i = 1; i < a.size() && i <= n; ++i) {
      if (a[i] != 0.0) acc -= a[i] * y[n - i];
    }
    y[n] = acc;
    out[n] = static_cast<double>(acc);
  }
  return out;
}

double autocorrelation(std::span<const double> x, std::size_t lag) {
  long double r = 0.0L, e1 = 0.0L, e2 = 0.0L;
  for (std::size_t i = 0; i + lag < x.size(); ++i) {
    r += static_cast<long double>(x[i]) * x[i + lag];
    e1 += static_cast<long double>(x[i]) * x[i];
    e2 += static_cast<long double>(x[i + lag]) * x[i + lag];
  }
  return static_cast<double>(r / std::sqrt(e1 * e2));
}

double band_energy(std::span<const double> x, double sample_rate, double lo_hz, double hi_hz) {
  const std::size_t n = x.size();
  Twiddles tw(n);
  const auto lo = static_cast<std::size_t>(std::ceil(lo_hz * n / sample_rate));
  const auto hi = std::min(n / 2, static_cast<std::size_t>(std::floor(hi_hz * n / sample_rate)));
  long double e = 0.0L;
  for (std::size_t k = lo; k <= hi; ++k) {
    long double re = 0.0L, im = 0.0L;
    std::size_t m = 0;
    for (std::size_t t = 0; t < n; ++t) {
      re += x[t] * tw.c[m];
      im += x[t] * tw.s[m];
      m += k;
      if (m >= n) m -= n;
    }
    e += re * re + im * im;
  }
  return static_cast<double>(e);
}

std::vector<double> power_spectrum(std::span<const double> x, std::size_t nfft) {
  std::vector<std::complex<double>> a(nfft);
  for (std::size_t i = 0; i < std::min(nfft, x.size()); ++i) a[i] = x[i];
  for (std::size_t i = 1, j = 0; i < nfft; ++i) {
    std::size_t bit = nfft >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= nfft; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * k / len;
      const std::complex<double> w(static_cast<double>(std::cos(ang)), static_cast<double>(std::sin(ang)));
      for (std::size_t s = 0; s < nfft; s += len) {
        const auto u = a[s + k];
        const auto v = a[s + k + half] * w;
        a[s + k] = u + v;
        a[s + k + half] = u - v;
      }
    }
  }
  std::vector<double> p(nfft / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(a[k]);
  return p;
}

std::string temp_path(const std::string& name) {
  const char* dir = std::getenv("TMPDIR");
  return std::string(dir ? dir : "/tmp") + "/ptr_test_" + std::to_string(::getpid()) + "_" + name;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_ramp_csv(const std::string& path, double seconds, double rpm0, double rpm1, double torque,
                    double rate) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  std::fprintf(f, "time,rpm,torque\n");
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / rate;
    std::fprintf(f, "%.9g,%.9g,%.9g\n", t, rpm0 + (rpm1 - rpm0) * t / seconds, torque);
  }
  std::fclose(f);
}

}  // namespace ptr::test
