#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace ptr::resonator {

inline constexpr double kA2Limit = 0.999;
inline constexpr double kTriangleMargin = 1e-6;
inline constexpr double kGainExponent = 0.35;
inline constexpr double kMaxLoopGain = 0.9995;

/// One Karplus-Strong resonator in its unconstrained parameterization.
struct ResonatorParams {
  double theta1 = 1.0;
  double theta2 = 0.3;
  double gain_logit = 0.5;
  std::vector<double> delay_logits;  // one per candidate in [delay_min, delay_max]
  int delay_min = 16;
  int delay_max = 400;
  double temperature = 0.5;

  std::size_t candidates() const { return static_cast<std::size_t>(delay_max - delay_min + 1); }
  /// Argmax of the delay logits, as a delay in samples.
  int argmax_delay() const;
  void validate() const;

  /// Logits peaked at `delay` (peak height above a flat floor of zero).
  static std::vector<double> peaked_logits(int delay, int delay_min, int delay_max,
                                           double peak = 12.0);
};

/// Second-order direct-form pair with the Jacobian w.r.t. (theta1, theta2).
struct DirectCoeffs {
  double a1 = 0.0;
  double a2 = 0.0;
  double da1_dtheta1 = 0.0;
  double da1_dtheta2 = 0.0;
  double da2_dtheta2 = 0.0;
};

/// k_i = tanh(theta_i); a2 = clamp(k2, +-0.999); a1 = k1*(1 - a2) clamped into
/// the open stability triangle |a1| < 1 + a2.
DirectCoeffs reflection_to_direct(double theta1, double theta2);

struct EffectiveCoeffs {
  double alpha = 0.0;
  double beta = 0.0;
  double scale = 0.0;        // sigmoid(g)^0.35
  double dscale_dgain = 0.0;
};

/// alpha_eff = a1*s, beta_eff = a2*s with s = sigmoid(gain_logit)^0.35.
EffectiveCoeffs integrate_gain(double a1, double a2, double gain_logit);

struct DelaySelection {
  int index = 0;                 // winning candidate (delay = delay_min + index)
  std::vector<double> soft;      // softmax((logits + noise) / temperature)
};

enum class DelayMode {
  kInference,       // argmax of logits, no noise
  kStraightThrough,  // hard Gumbel-argmax forward, soft gradient
  kSoft              // soft mixture forward (dense coefficients)
};

/// Standard Gumbel noise g_j = -log(-log u_j), deterministic in (seed, j).
std::vector<double> gumbel_noise(std::uint64_t seed, std::size_t count);

/// Gumbel-softmax delay choice. With hard = false (or mode kInference) no
/// noise is drawn and the argmax of the logits wins.
DelaySelection select_delay(std::span<const double> logits, double temperature, bool hard,
                            std::uint64_t seed);

/// softmax Jacobian-vector product: gradient of logits from gradient of soft weights.
std::vector<double> softmax_backward(std::span<const double> soft, std::span<const double> grad_soft,
                                     double temperature);

/// Denominator coefficients a[i], i = 0..delay_max+1 (a[0] unused, the
/// leading 1 is implicit): y[n] = x[n] - sum_i a[i] y[n-i].
struct AllPoleCoeffs {
  std::vector<double> a;
  int delay = 0;  // selected delay L (0 for a non-sparse mixture)

  /// Indices with non-zero coefficients.
  std::vector<std::pair<int, double>> taps() const;
  /// Sum of |a_i|; < 1 certifies stability of the all-pole filter.
  double loop_gain() const;
  /// Certified upper bound on the pole magnitudes.
  double pole_radius_bound() const;
};

/// Hard selection: a[L] = -alpha_eff, a[L+1] = -beta_eff.
AllPoleCoeffs build_coeff_vector(int delay, double alpha_eff, double beta_eff, int delay_min,
                                 int delay_max);

/// Selection-weighted mixture: a[delay_min + j] -= alpha*w_j, a[delay_min + j + 1] -= beta*w_j.
AllPoleCoeffs build_mixture_coeffs(std::span<const double> weights, double alpha_eff,
                                   double beta_eff, int delay_min, int delay_max);

/// Reference: direct sample-by-sample recursion, zero initial state.
std::vector<double> ks_recursive(std::span<const double> x, const AllPoleCoeffs& coeffs);

/// Impulse response truncated once the remaining tail is certified below
/// rel_tol * max|h| in l1 norm, capped at max_len.
std::vector<double> impulse_response(const AllPoleCoeffs& coeffs, std::size_t max_len,
                                     double rel_tol = 1e-7);

/// Non-recursive evaluation: truncated impulse response + FFT overlap-add
/// convolution in blocks of block_len input samples. Throws kUnstableFilter
/// when the loop gain reaches kMaxLoopGain.
std::vector<double> allpole_apply(std::span<const double> x, const AllPoleCoeffs& coeffs,
                                  std::size_t block_len = 8192);

/// First x.size() samples of the linear convolution x * h, by FFT overlap-add.
std::vector<double> convolve_response(std::span<const double> x, std::span<const double> h,
                                      std::size_t block_len);

struct AllPoleGrad {
  std::vector<double> x;  // dL/dx
  std::vector<double> a;  // dL/da[i], i = 0..delay_max+1
};

/// Reverse-mode gradient of an all-pole filtering y = x / A(z) given dL/dy.
/// `h` is the impulse response used by the forward pass.
AllPoleGrad allpole_backward(std::span<const double> x, std::span<const double> y,
                             std::span<const double> h, std::span<const double> grad_y,
                             std::size_t coeff_len);

/// Everything needed to run one resonator forward.
struct ResolvedResonator {
  DirectCoeffs direct;
  EffectiveCoeffs eff;
  DelaySelection selection;
  AllPoleCoeffs coeffs;
};

ResolvedResonator resolve(const ResonatorParams& params, DelayMode mode, std::uint64_t seed);

struct NetworkParams {
  ResonatorParams left;
  ResonatorParams right;
  ResonatorParams shared;
};

/// out = R_shared(R_left(left) + R_right(right)), inference-mode delays.
std::vector<double> resonator_network(std::span<const double> left, std::span<const double> right,
                                      const NetworkParams& params, std::size_t block_len = 8192);

/// Streaming recursive filter with persistent delay-line state.
class KsFilter {
 public:
  explicit KsFilter(const AllPoleCoeffs& coeffs);

  void process(std::span<const double> in, std::span<double> out);
  void reset();

 private:
  std::vector<std::pair<int, double>> taps_;
  std::vector<double> history_;  // ring buffer, power-of-two size
  std::size_t mask_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace ptr::resonator
