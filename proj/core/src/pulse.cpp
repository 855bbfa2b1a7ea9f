#include "ptr/pulse.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <numbers>

#include "ptr/error.hpp"

namespace ptr::pulse {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Below these distances from the q = 1 pole the closed-form series lose
// precision and the sums are accumulated term by term instead.
constexpr double kComplexSeriesGuard = 0.05;
constexpr double kRealSeriesGuard = 1e-3;
constexpr double kMinRatio = 1e-150;

void check_track(const std::vector<double>& t, const char* name, double lo, bool lo_open, double hi) {
  require(!t.empty(), ErrorKind::kInvalidInput, std::string("empty pulse track '") + name + "'");
  for (double v : t) {
    const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && v <= hi;
    require(ok, ErrorKind::kParameterRange,
            std::string("pulse parameter '") + name + "' out of range: " + std::to_string(v));
  }
}

}  // namespace

void PulseParams::validate() const {
  const double inf = std::numeric_limits<double>::infinity();
  check_track(lambda, "lambda", 0.0, false, inf);
  check_track(alpha, "alpha", 0.0, true, inf);
  check_track(beta, "beta", 0.0, false, inf);
  check_track(nu, "nu", 0.0, true, 1.0);
  check_track(gain, "gain", 0.0, false, inf);
  const std::size_t f = frames();
  for (const auto* t : {&lambda, &alpha, &beta, &nu, &gain}) {
    require(t->size() == 1 || t->size() == f, ErrorKind::kInvalidInput,
            "pulse tracks must have length 1 or a common frame count");
  }
  require(std::isfinite(timing_deg), ErrorKind::kParameterRange, "timing must be finite");
}

std::size_t PulseParams::frames() const {
  return std::max({lambda.size(), alpha.size(), beta.size(), nu.size(), gain.size()});
}

int unmasked_harmonics(int harmonics, double f0, double nyquist) {
  if (!(f0 > 0.0)) return harmonics;
  const double kmax = std::floor(nyquist / f0);
  return kmax >= harmonics ? harmonics : static_cast<int>(std::max(0.0, kmax));
}

HarmonicWeights harmonic_decay_weights(double lambda, int harmonics, double f0, double nyquist) {
  require(harmonics >= 1, ErrorKind::kInvalidInput, "harmonic count must be >= 1");
  HarmonicWeights w;
  w.a.assign(static_cast<std::size_t>(harmonics), 0.0);
  const int kmax = unmasked_harmonics(harmonics, f0, nyquist);
  if (kmax == 0) {
    w.silent = true;
    return w;
  }
  double total = 0.0;
  for (int k = 1; k <= kmax; ++k) {
    w.a[static_cast<std::size_t>(k - 1)] = std::exp(-0.5 * k * lambda);
    total += w.a[static_cast<std::size_t>(k - 1)];
  }
  for (double& v : w.a) v /= total;
  return w;
}

double pressure_envelope(double phi, double alpha, double beta) {
  return (1.0 - std::exp(-alpha * phi)) * std::exp(-beta * phi);
}

double phase_bend(double phi, double nu) {
  require(nu > 0.0 && nu <= 1.0, ErrorKind::kParameterRange,
          "phase-bend exponent must lie in (0, 1], got " + std::to_string(nu));
  if (phi <= 0.0) return 0.0;
  return kTwoPi * std::pow(phi / kTwoPi, nu);
}

double harmonic_stack(double theta, double lambda, int harmonics, double f0, double nyquist) {
  const auto w = harmonic_decay_weights(lambda, harmonics, f0, nyquist);
  double s = 0.0;
  for (int k = 1; k <= harmonics; ++k) s += w.a[static_cast<std::size_t>(k - 1)] * std::sin(k * theta);
  return s;
}

template <bool kWithGrad>
PulseSample pulse_sample(const PulseInputs& in, int harmonics, double nyquist) {
  PulseSample out;
  const int kmax = unmasked_harmonics(harmonics, in.f0, nyquist);
  if (kmax == 0) return out;
  const double phi = in.phi;
  const double ea = std::exp(-in.alpha * phi);
  const double eb = std::exp(-in.beta * phi);
  const double env = (1.0 - ea) * eb;

  // Bent phase theta = 2*pi*u^nu.
  const double u = phi / kTwoPi;
  double theta = 0.0, dtheta_dnu = 0.0, dtheta_dphi = 0.0;
  if (u > 0.0) {
    const double lu = std::log(u);
    const double un = std::exp(in.nu * lu);
    theta = kTwoPi * un;
    if constexpr (kWithGrad) {
      dtheta_dnu = theta * lu;
      dtheta_dphi = in.nu * un / u;
    }
  }

  // Harmonic sums with ratio r = exp(-lambda/2) and q = r*exp(i*theta):
  //   G0 = sum q^k, G1 = sum k q^k, D = sum r^k, Dr = sum k r^(k-1).
  const double r = std::max(std::exp(-0.5 * in.lambda), kMinRatio);
  const double kd = static_cast<double>(kmax);
  const std::complex<double> q = std::polar(r, theta);
  const std::complex<double> one_minus_q = 1.0 - q;
  std::complex<double> g0, g1;
  if (std::abs(one_minus_q) >= kComplexSeriesGuard) {
    const std::complex<double> qk = std::polar(std::pow(r, kd), kd * theta);
    g0 = q * (1.0 - qk) / one_minus_q;
    if constexpr (kWithGrad) {
      g1 = q * (1.0 - (kd + 1.0) * qk + kd * qk * q) / (one_minus_q * one_minus_q);
    }
  } else {
    std::complex<double> z = q;
    for (int k = 1; k <= kmax; ++k) {
      g0 += z;
      if constexpr (kWithGrad) g1 += static_cast<double>(k) * z;
      z *= q;
    }
  }
  double d = 0.0, dr = 0.0;
  if (1.0 - r >= kRealSeriesGuard) {
    const double rk = std::pow(r, kd);
    d = r * (1.0 - rk) / (1.0 - r);
    if constexpr (kWithGrad) {
      dr = (1.0 - (kd + 1.0) * rk + kd * rk * r) / ((1.0 - r) * (1.0 - r));
    }
  } else {
    double z = r;
    for (int k = 1; k <= kmax; ++k) {
      d += z;
      if constexpr (kWithGrad) dr += static_cast<double>(k) * z / r;
      z *= r;
    }
  }

  const double n = g0.imag();
  const double s = n / d;
  out.value = env * in.gain * s;
  if constexpr (kWithGrad) {
    const double n_theta = g1.real();
    const double n_r = g1.imag() / r;
    const double ds_dr = (n_r * d - n * dr) / (d * d);
    const double ds_dtheta = n_theta / d;
    out.d_lambda = env * in.gain * ds_dr * (-0.5 * r);
    out.d_nu = env * in.gain * ds_dtheta * dtheta_dnu;
    out.d_gain = env * s;
    out.d_alpha = in.gain * s * phi * ea * eb;
    out.d_beta = -in.gain * s * phi * env;
    const double denv_dphi = in.alpha * ea * eb - in.beta * env;
    out.d_phi = in.gain * (denv_dphi * s + env * ds_dtheta * dtheta_dphi);
  }
  return out;
}

template PulseSample pulse_sample<true>(const PulseInputs&, int, double);
template PulseSample pulse_sample<false>(const PulseInputs&, int, double);

std::vector<double> pulse_waveform(std::span<const double> cyl_phase, const PulseSeries& params,
                                   std::span<const double> f0, int harmonics, double nyquist) {
  const std::size_t n = cyl_phase.size();
  for (auto s : {params.lambda, params.alpha, params.beta, params.nu, params.gain, f0}) {
    require(s.size() == n, ErrorKind::kInvalidInput, "pulse_waveform: series length mismatch");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PulseInputs in{cyl_phase[i], params.lambda[i], params.alpha[i], params.beta[i],
                         params.nu[i], params.gain[i], f0[i]};
    out[i] = pulse_sample<false>(in, harmonics, nyquist).value;
  }
  return out;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_grad(double x) { return sigmoid(x); }

double softplus_inverse(double y) {
  y = std::max(y, 1e-12);
  return y > 30.0 ? y : y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

}  // namespace ptr::pulse
