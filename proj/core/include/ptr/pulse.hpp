#pragma once

#include <span>
#include <vector>

namespace ptr::pulse {

/// Physical pulse parameters for one cylinder. Each track holds one value per
/// model frame, or a single value for a constant.
struct PulseParams {
  std::vector<double> lambda{0.15};  // harmonic decay rate, >= 0
  std::vector<double> alpha{8.0};    // envelope attack rate, > 0
  std::vector<double> beta{1.0};     // envelope decay rate, >= 0
  std::vector<double> nu{0.7};       // phase-bend exponent, (0, 1]
  std::vector<double> gain{0.5};     // c, >= 0
  double timing_deg = 0.0;           // crank-angle timing adjustment

  void validate() const;
  std::size_t frames() const;
};

struct HarmonicWeights {
  std::vector<double> a;  // a[k-1] for harmonic k
  bool silent = false;    // every harmonic above Nyquist
};

/// a_k = exp(-0.5 k lambda), zeroed where k*f0 > nyquist, L1-normalized.
HarmonicWeights harmonic_decay_weights(double lambda, int harmonics, double f0, double nyquist);

/// Highest unmasked harmonic index (0 when all are masked).
int unmasked_harmonics(int harmonics, double f0, double nyquist);

/// E(phi) = (1 - exp(-alpha*phi)) * exp(-beta*phi).
double pressure_envelope(double phi, double alpha, double beta);

/// 2*pi*(phi/2*pi)^nu. Throws kParameterRange for nu outside (0, 1].
double phase_bend(double phi, double nu);

/// Normalized decaying sine stack sum_k a_k sin(k*theta) with a_k from
/// harmonic_decay_weights. Reference evaluation (explicit loop).
double harmonic_stack(double theta, double lambda, int harmonics, double f0, double nyquist);

/// Per-sample pulse value and its partial derivatives.
struct PulseSample {
  double value = 0.0;
  double d_lambda = 0.0;
  double d_alpha = 0.0;
  double d_beta = 0.0;
  double d_nu = 0.0;
  double d_gain = 0.0;
  double d_phi = 0.0;  // w.r.t. firing-cycle phase (timing)
};

struct PulseInputs {
  double phi;  // firing-cycle phase in [0, 2*pi)
  double lambda, alpha, beta, nu, gain;
  double f0;
};

/// Evaluates P = E(phi) * c * sum_k a_k sin(k*phi_mod). The harmonic sums are
/// evaluated in closed form (geometric series) away from q = 1 and by explicit
/// recursion near it.
template <bool kWithGrad>
PulseSample pulse_sample(const PulseInputs& in, int harmonics, double nyquist);

extern template PulseSample pulse_sample<true>(const PulseInputs&, int, double);
extern template PulseSample pulse_sample<false>(const PulseInputs&, int, double);

/// Audio-rate parameter series for pulse_waveform.
struct PulseSeries {
  std::span<const double> lambda, alpha, beta, nu, gain;
};

/// P_i over a whole series. All spans must share the length of cyl_phase.
std::vector<double> pulse_waveform(std::span<const double> cyl_phase, const PulseSeries& params,
                                   std::span<const double> f0, int harmonics, double nyquist);

/// Unconstrained <-> physical parameter maps used by fitting.
double softplus(double x);
double softplus_grad(double x);  // sigmoid
double softplus_inverse(double y);
double sigmoid(double x);
double logit(double p);

inline constexpr double kAlphaFloor = 0.1;
inline constexpr double kNuFloor = 0.01;

}  // namespace ptr::pulse
