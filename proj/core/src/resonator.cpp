#include "ptr/resonator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ptr/engine.hpp"
#include "ptr/error.hpp"
#include "ptr/fft.hpp"
#include "ptr/parallel.hpp"
#include "ptr/pulse.hpp"

namespace ptr::resonator {

namespace {
constexpr std::uint64_t kGumbelChannel = 0x47756d62656cULL;

double gumbel(std::uint64_t seed, std::size_t j) {
  const double u = engine::counter_uniform(seed, kGumbelChannel, static_cast<std::int64_t>(j));
  return -std::log(-std::log(u));
}

std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += out[i] = std::exp(z[i] - m);
  for (double& v : out) v /= total;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

int max_tap(const std::vector<std::pair<int, double>>& taps) {
  int p = 0;
  for (const auto& t : taps) p = std::max(p, t.first);
  return p;
}
}  // namespace

int ResonatorParams::argmax_delay() const {
  require(!delay_logits.empty(), ErrorKind::kInvalidInput, "resonator has no delay logits");
  return delay_min + static_cast<int>(argmax(delay_logits));
}

void ResonatorParams::validate() const {
  require(delay_min >= 1 && delay_max >= delay_min, ErrorKind::kConfig,
          "delay range must satisfy 1 <= delay_min <= delay_max");
  require(delay_logits.size() == candidates(), ErrorKind::kInvalidInput,
          "delay_logits length " + std::to_string(delay_logits.size()) + " does not match the " +
              std::to_string(candidates()) + " candidate delays");
  require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::kParameterRange,
          "Gumbel-softmax temperature must be > 0");
  for (double v : {theta1, theta2, gain_logit}) {
    require(std::isfinite(v), ErrorKind::kParameterRange, "resonator parameters must be finite");
  }
  for (double v : delay_logits) {
    require(std::isfinite(v), ErrorKind::kParameterRange, "delay logits must be finite");
  }
}

std::vector<double> ResonatorParams::peaked_logits(int delay, int delay_min, int delay_max,
                                                   double peak) {
  require(delay >= delay_min && delay <= delay_max, ErrorKind::kParameterRange,
          "delay " + std::to_string(delay) + " outside [" + std::to_string(delay_min) + ", " +
              std::to_string(delay_max) + "]");
  std::vector<double> logits(static_cast<std::size_t>(delay_max - delay_min + 1), 0.0);
  logits[static_cast<std::size_t>(delay - delay_min)] = peak;
  return logits;
}

DirectCoeffs reflection_to_direct(double theta1, double theta2) {
  DirectCoeffs d;
  const double k1 = std::tanh(theta1);
  const double k2 = std::tanh(theta2);
  double da2 = 1.0 - k2 * k2;
  d.a2 = k2;
  if (std::abs(k2) > kA2Limit) {
    d.a2 = std::copysign(kA2Limit, k2);
    da2 = 0.0;
  }
  d.da2_dtheta2 = da2;
  d.a1 = k1 * (1.0 - d.a2);
  d.da1_dtheta1 = (1.0 - k1 * k1) * (1.0 - d.a2);
  d.da1_dtheta2 = -k1 * da2;
  const double bound = 1.0 + d.a2 - kTriangleMargin;
  if (std::abs(d.a1) > bound) {
    const double sign = d.a1 < 0.0 ? -1.0 : 1.0;
    d.a1 = sign * bound;
    d.da1_dtheta1 = 0.0;
    d.da1_dtheta2 = sign * da2;
  }
  return d;
}

EffectiveCoeffs integrate_gain(double a1, double a2, double gain_logit) {
  EffectiveCoeffs e;
  const double sg = pulse::sigmoid(gain_logit);
  e.scale = std::pow(sg, kGainExponent);
  e.dscale_dgain = kGainExponent * e.scale * (1.0 - sg);
  e.alpha = a1 * e.scale;
  e.beta = a2 * e.scale;
  return e;
}

std::vector<double> gumbel_noise(std::uint64_t seed, std::size_t count) {
  std::vector<double> g(count);
  for (std::size_t j = 0; j < count; ++j) g[j] = gumbel(seed, j);
  return g;
}

DelaySelection select_delay(std::span<const double> logits, double temperature, bool hard,
                            std::uint64_t seed) {
  require(!logits.empty(), ErrorKind::kInvalidInput, "no delay candidates");
  require(temperature > 0.0, ErrorKind::kParameterRange, "temperature must be > 0");
  std::vector<double> z(logits.begin(), logits.end());
  if (hard) {
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += gumbel(seed, j);
  }
  DelaySelection sel;
  sel.index = static_cast<int>(argmax(z));
  for (double& v : z) v /= temperature;
  sel.soft = softmax(z);
  return sel;
}

std::vector<double> softmax_backward(std::span<const double> soft, std::span<const double> grad_soft,
                                     double temperature) {
  require(soft.size() == grad_soft.size(), ErrorKind::kInvalidInput, "softmax_backward size mismatch");
  double dot = 0.0;
  for (std::size_t j = 0; j < soft.size(); ++j) dot += soft[j] * grad_soft[j];
  std::vector<double> out(soft.size());
  for (std::size_t j = 0; j < soft.size(); ++j) out[j] = soft[j] * (grad_soft[j] - dot) / temperature;
  return out;
}

std::vector<std::pair<int, double>> AllPoleCoeffs::taps() const {
  std::vector<std::pair<int, double>> t;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] != 0.0) t.emplace_back(static_cast<int>(i), a[i]);
  }
  return t;
}

double AllPoleCoeffs::loop_gain() const {
  double s = 0.0;
  for (std::size_t i = 1; i < a.size(); ++i) s += std::abs(a[i]);
  return s;
}

double AllPoleCoeffs::pole_radius_bound() const {
  // Every root z of z^P + a_1 z^(P-1) + ... + a_P satisfies |z|^P <= rho when
  // |z| <= 1, so rho < 1 confines the poles to radius rho^(1/P).
  const double rho = loop_gain();
  if (rho >= 1.0) return std::numeric_limits<double>::infinity();
  const int p = max_tap(taps());
  return p == 0 ? 0.0 : std::pow(rho, 1.0 / p);
}

AllPoleCoeffs build_coeff_vector(int delay, double alpha_eff, double beta_eff, int delay_min,
                                 int delay_max) {
  require(delay_min >= 1 && delay >= delay_min && delay <= delay_max, ErrorKind::kParameterRange,
          "delay " + std::to_string(delay) + " outside [" + std::to_string(delay_min) + ", " +
              std::to_string(delay_max) + "]");
  AllPoleCoeffs c;
  c.a.assign(static_cast<std::size_t>(delay_max) + 2, 0.0);
  c.a[static_cast<std::size_t>(delay)] = -alpha_eff;
  c.a[static_cast<std::size_t>(delay) + 1] = -beta_eff;
  c.delay = delay;
  return c;
}

AllPoleCoeffs build_mixture_coeffs(std::span<const double> weights, double alpha_eff,
                                   double beta_eff, int delay_min, int delay_max) {
  require(delay_min >= 1 && delay_max >= delay_min, ErrorKind::kConfig, "invalid delay range");
  require(weights.size() == static_cast<std::size_t>(delay_max - delay_min + 1),
          ErrorKind::kInvalidInput, "mixture weights must cover every candidate delay");
  AllPoleCoeffs c;
  c.a.assign(static_cast<std::size_t>(delay_max) + 2, 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const std::size_t l = static_cast<std::size_t>(delay_min) + j;
    c.a[l] -= alpha_eff * weights[j];
    c.a[l + 1] -= beta_eff * weights[j];
  }
  return c;
}

std::vector<double> ks_recursive(std::span<const double> x, const AllPoleCoeffs& coeffs) {
  const auto taps = coeffs.taps();
  std::vector<double> y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = x[n];
    for (const auto& [i, a] : taps) {
      if (n >= static_cast<std::size_t>(i)) acc -= a * y[n - static_cast<std::size_t>(i)];
    }
    y[n] = acc;
  }
  return y;
}

std::vector<double> impulse_response(const AllPoleCoeffs& coeffs, std::size_t max_len,
                                     double rel_tol) {
  const auto taps = coeffs.taps();
  if (max_len == 0) return {};
  if (taps.empty()) return {1.0};
  const double rho = coeffs.loop_gain();
  require(rho < 1.0, ErrorKind::kUnstableFilter,
          "impulse response requested for a filter without a stability certificate");
  const std::size_t p = static_cast<std::size_t>(max_tap(taps));
  // |h[n]| <= rho * max(|h[n-p..n-1]|), so the l1 tail from n on is at most
  // p * window_max / (1 - rho).
  const double tail_factor = static_cast<double>(p) / (1.0 - rho);
  std::vector<double> h;
  h.reserve(std::min<std::size_t>(max_len, 1 << 16));
  h.push_back(1.0);
  double peak = 1.0;
  std::size_t last_check = 0;
  while (h.size() < max_len) {
    const std::size_t n = h.size();
    double acc = 0.0;
    for (const auto& [i, a] : taps) {
      if (n >= static_cast<std::size_t>(i)) acc -= a * h[n - static_cast<std::size_t>(i)];
    }
    h.push_back(acc);
    peak = std::max(peak, std::abs(acc));
    if (n >= p && n - last_check >= p) {
      last_check = n;
      double window = 0.0;
      for (std::size_t m = n + 1 - p; m <= n; ++m) window = std::max(window, std::abs(h[m]));
      if (tail_factor * window < rel_tol * peak) break;
    }
  }
  return h;
}

namespace {

std::size_t response_cap(const AllPoleCoeffs& coeffs, std::size_t input_len) {
  const double r = coeffs.pole_radius_bound();
  const std::size_t span = coeffs.a.size() > 2 ? coeffs.a.size() - 2 : 1;
  const double cap = r <= 0.0 ? 1.0 : 4.0 * static_cast<double>(span) / (1.0 - r);
  return std::min(input_len, static_cast<std::size_t>(std::min(cap, 1e9)) + 1);
}

}  // namespace

std::vector<double> convolve_response(std::span<const double> x, std::span<const double> h,
                                      std::size_t block_len) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  if (n == 0 || h.empty()) return y;
  if (h.size() == 1) {
    for (std::size_t i = 0; i < n; ++i) y[i] = h[0] * x[i];
    return y;
  }
  block_len = std::max<std::size_t>(1, std::min(block_len, n));
  const std::size_t size = next_pow2(block_len + h.size() - 1);
  RealFft fft(size);
  std::vector<Complex> hf(fft.bins()), xf(fft.bins());
  fft.forward(h, hf);
  std::vector<double> seg(size);
  const double scale = 1.0 / static_cast<double>(size);
  for (std::size_t start = 0; start < n; start += block_len) {
    const std::size_t len = std::min(block_len, n - start);
    fft.forward(x.subspan(start, len), xf);
    for (std::size_t k = 0; k < xf.size(); ++k) xf[k] *= hf[k];
    fft.inverse(xf, seg);
    const std::size_t stop = std::min(n, start + len + h.size() - 1);
    for (std::size_t i = start; i < stop; ++i) y[i] += seg[i - start] * scale;
  }
  return y;
}

namespace {

// c[j] = sum_m a[j + m] * b[m] for j in [0, out_len).
std::vector<double> correlate(std::span<const double> a, std::span<const double> b,
                              std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  if (a.empty() || b.empty() || out_len == 0) return out;
  const std::size_t size = next_pow2(std::max(a.size(), out_len) + b.size());
  RealFft fft(size);
  std::vector<Complex> af(fft.bins()), bf(fft.bins());
  fft.forward(a, af);
  fft.forward(b, bf);
  for (std::size_t k = 0; k < af.size(); ++k) af[k] *= std::conj(bf[k]);
  std::vector<double> c(size);
  fft.inverse(af, c);
  const double scale = 1.0 / static_cast<double>(size);
  for (std::size_t j = 0; j < out_len; ++j) out[j] = c[j] * scale;
  return out;
}

}  // namespace

std::vector<double> allpole_apply(std::span<const double> x, const AllPoleCoeffs& coeffs,
                                  std::size_t block_len) {
  const double rho = coeffs.loop_gain();
  if (rho >= kMaxLoopGain) {
    fail(ErrorKind::kUnstableFilter, "resonator loop gain " + std::to_string(rho) +
                                         " reaches the limit " + std::to_string(kMaxLoopGain));
  }
  const auto h = impulse_response(coeffs, response_cap(coeffs, x.size()));
  return convolve_response(x, h, block_len);
}

AllPoleGrad allpole_backward(std::span<const double> x, std::span<const double> y,
                             std::span<const double> h, std::span<const double> grad_y,
                             std::size_t coeff_len) {
  const std::size_t n = x.size();
  require(y.size() == n && grad_y.size() == n, ErrorKind::kInvalidInput,
          "allpole_backward: length mismatch");
  AllPoleGrad g;
  g.x = correlate(grad_y, h, n);
  // dy[n]/da_j = -(h * y)[n - j]
  const auto u = convolve_response(y, h, 8192);
  auto c = correlate(grad_y, u, coeff_len);
  g.a.resize(coeff_len);
  for (std::size_t j = 0; j < coeff_len; ++j) g.a[j] = -c[j];
  if (coeff_len > 0) g.a[0] = 0.0;
  return g;
}

ResolvedResonator resolve(const ResonatorParams& params, DelayMode mode, std::uint64_t seed) {
  params.validate();
  ResolvedResonator r;
  r.direct = reflection_to_direct(params.theta1, params.theta2);
  r.eff = integrate_gain(r.direct.a1, r.direct.a2, params.gain_logit);
  r.selection = select_delay(params.delay_logits, params.temperature,
                             mode == DelayMode::kStraightThrough, seed);
  if (mode == DelayMode::kSoft) {
    r.coeffs = build_mixture_coeffs(r.selection.soft, r.eff.alpha, r.eff.beta, params.delay_min,
                                    params.delay_max);
  } else {
    r.coeffs = build_coeff_vector(params.delay_min + r.selection.index, r.eff.alpha, r.eff.beta,
                                  params.delay_min, params.delay_max);
  }
  return r;
}

std::vector<double> resonator_network(std::span<const double> left, std::span<const double> right,
                                      const NetworkParams& params, std::size_t block_len) {
  require(left.size() == right.size(), ErrorKind::kInvalidInput,
          "resonator_network: bank lengths differ");
  const auto rl = resolve(params.left, DelayMode::kInference, 0);
  const auto rr = resolve(params.right, DelayMode::kInference, 0);
  const auto rs = resolve(params.shared, DelayMode::kInference, 0);
  std::vector<double> yl, yr;
  parallel_chunks(2, 2, [&](std::size_t c, std::size_t, std::size_t) {
    if (c == 0) yl = allpole_apply(left, rl.coeffs, block_len);
    else yr = allpole_apply(right, rr.coeffs, block_len);
  });
  for (std::size_t i = 0; i < yl.size(); ++i) yl[i] += yr[i];
  return allpole_apply(yl, rs.coeffs, block_len);
}

KsFilter::KsFilter(const AllPoleCoeffs& coeffs) : taps_(coeffs.taps()) {
  const std::size_t need = static_cast<std::size_t>(max_tap(taps_)) + 1;
  std::size_t size = 1;
  while (size < need) size <<= 1;
  history_.assign(size, 0.0);
  mask_ = size - 1;
}

void KsFilter::process(std::span<const double> in, std::span<double> out) {
  require(out.size() >= in.size(), ErrorKind::kInvalidInput, "KsFilter output too small");
  for (std::size_t n = 0; n < in.size(); ++n) {
    double acc = in[n];
    for (const auto& [i, a] : taps_) acc -= a * history_[(pos_ - static_cast<std::size_t>(i)) & mask_];
    history_[pos_ & mask_] = acc;
    out[n] = acc;
    ++pos_;
  }
}

void KsFilter::reset() {
  std::fill(history_.begin(), history_.end(), 0.0);
  pos_ = 0;
}

}  // namespace ptr::resonator
