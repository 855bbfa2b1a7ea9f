#include "ptr/synth.hpp"

#include <algorithm>
#include <cmath>

#include "ptr/error.hpp"
#include "ptr/pulse.hpp"

namespace ptr {

namespace {

constexpr std::uint64_t kLeftChannel = 0;
constexpr std::uint64_t kRightChannel = 1;

resonator::AllPoleCoeffs inference_coeffs(const resonator::ResonatorParams& r) {
  return resonator::resolve(r, resonator::DelayMode::kInference, 0).coeffs;
}

void check_rates(const ParamSet& params, const SynthConfig& cfg) {
  params.validate();
  cfg.validate();
  require(params.sample_rate == cfg.sample_rate && params.model_rate == cfg.model_rate,
          ErrorKind::kConfig, "parameter file rates do not match the synthesis configuration");
  const auto check = [](double rho) {
    require(rho < resonator::kMaxLoopGain, ErrorKind::kUnstableFilter,
            "resonator loop gain " + std::to_string(rho) + " is too close to instability");
  };
  check(inference_coeffs(params.resonators.left).loop_gain());
  check(inference_coeffs(params.resonators.right).loop_gain());
  check(inference_coeffs(params.resonators.shared).loop_gain());
}

// Sums the eight cylinder pulses into the two bank signals for samples
// [start, start + n).
void render_banks(const ParamSet& params, const SynthConfig& cfg,
                  const std::array<double, engine::kCylinders>& offsets,
                  const std::array<double, engine::kCylinders>& timings, std::int64_t start,
                  std::span<const double> wrapped, std::span<const double> f0,
                  std::span<const double> g_thr, std::span<double> left, std::span<double> right) {
  const std::size_t n = wrapped.size();
  std::fill(left.begin(), left.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  std::fill(right.begin(), right.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  const double hop = cfg.frame_hop();
  for (int c = 0; c < engine::kCylinders; ++c) {
    const auto& p = params.cylinders[c];
    auto& bank = params.engine.bank_map[c] == engine::Bank::kLeft ? left : right;
    const double shift = offsets[c] + timings[c];
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t t = start + static_cast<std::int64_t>(i);
      const pulse::PulseInputs in{control::wrap_phase(wrapped[i] + shift),
                                  control::frame_value_at(p.lambda, hop, t),
                                  control::frame_value_at(p.alpha, hop, t),
                                  control::frame_value_at(p.beta, hop, t),
                                  control::frame_value_at(p.nu, hop, t),
                                  control::frame_value_at(p.gain, hop, t),
                                  f0[i]};
      const double gate = cfg.pulse_throttle_gating ? g_thr[i] : 1.0;
      bank[i] += gate * pulse::pulse_sample<false>(in, cfg.harmonics, cfg.nyquist()).value;
    }
  }
}

void augment_bank(const engine::NoiseParams& noise, std::span<const double> bank,
                  std::span<const double> eta, std::span<const double> g_thr,
                  std::span<const double> g_dfco, std::span<const double> wrapped,
                  std::span<double> out) {
  for (std::size_t i = 0; i < wrapped.size(); ++i) {
    const double env = pulse::pressure_envelope(wrapped[i], noise.intake_alpha, noise.intake_beta);
    out[i] = engine::augment_sample(bank[i], eta[i], g_thr[i], g_dfco[i], env, noise.turb_depth);
  }
}

std::array<double, engine::kCylinders> timing_phases(const ParamSet& params) {
  std::array<double, engine::kCylinders> t{};
  for (int c = 0; c < engine::kCylinders; ++c) {
    t[c] = engine::crank_to_phase(params.cylinders[c].timing_deg, params.engine);
  }
  return t;
}

}  // namespace

Synth::Synth(const ParamSet& params, const SynthConfig& cfg)
    : params_((check_rates(params, cfg), params)),
      cfg_(cfg),
      offsets_(engine::firing_offsets(params.engine)),
      timings_(timing_phases(params)),
      noise_left_(static_cast<int>(params.noise.band_gains.size()), cfg.noise_low_hz,
                  cfg.sample_rate, cfg.noise_block, params.noise.seed, kLeftChannel),
      noise_right_(static_cast<int>(params.noise.band_gains.size()), cfg.noise_low_hz,
                   cfg.sample_rate, cfg.noise_block, params.noise.seed, kRightChannel),
      res_left_(inference_coeffs(params.resonators.left)),
      res_right_(inference_coeffs(params.resonators.right)),
      res_shared_(inference_coeffs(params.resonators.shared)) {}

void Synth::ensure_capacity(std::size_t n) {
  if (wrapped_.size() >= n) return;
  for (auto* v : {&wrapped_, &f0_, &g_thr_, &g_dfco_, &bank_l_, &bank_r_, &eta_l_, &eta_r_, &tmp_l_,
                  &tmp_r_}) {
    v->resize(n);
  }
  bands_.resize(n * params_.noise.band_gains.size());
}

void Synth::process(std::span<const double> rpm, std::span<const double> torque,
                    std::span<double> out) {
  const std::size_t n = rpm.size();
  require(torque.size() == n && out.size() >= n, ErrorKind::kInvalidInput,
          "Synth::process: rpm, torque and output lengths differ");
  if (n == 0) return;
  ensure_capacity(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(rpm[i]) && rpm[i] >= 0.0 && std::isfinite(torque[i]),
            ErrorKind::kInvalidInput, "rpm must be finite and >= 0, torque finite");
    f0_[i] = rpm[i] / 120.0;
    phase_.step(f0_[i], cfg_.sample_rate);
    wrapped_[i] = phase_.wrapped();
    g_thr_[i] = control::throttle_gate(torque[i], cfg_.throttle_epsilon);
    g_dfco_[i] = control::dfco_gate(torque[i], cfg_.dfco_epsilon);
  }
  const std::span<const double> wrapped(wrapped_.data(), n), f0(f0_.data(), n),
      g_thr(g_thr_.data(), n), g_dfco(g_dfco_.data(), n);
  render_banks(params_, cfg_, offsets_, timings_, pos_, wrapped, f0, g_thr, bank_l_, bank_r_);

  const double hop = cfg_.frame_hop();
  noise_left_.render(pos_, n, bands_);
  engine::mix_noise_bands(bands_, n, params_.noise.band_gains, hop, pos_, eta_l_);
  noise_right_.render(pos_, n, bands_);
  engine::mix_noise_bands(bands_, n, params_.noise.band_gains, hop, pos_, eta_r_);

  augment_bank(params_.noise, bank_l_, eta_l_, g_thr, g_dfco, wrapped, tmp_l_);
  augment_bank(params_.noise, bank_r_, eta_r_, g_thr, g_dfco, wrapped, tmp_r_);
  const std::span<double> tl(tmp_l_.data(), n), tr(tmp_r_.data(), n);
  res_left_.process(tl, tl);
  res_right_.process(tr, tr);
  for (std::size_t i = 0; i < n; ++i) tl[i] += tr[i];
  res_shared_.process(tl, out.first(n));
  pos_ += static_cast<std::int64_t>(n);
}

void Synth::reset() {
  phase_ = control::PhaseState{};
  res_left_.reset();
  res_right_.reset();
  res_shared_.reset();
  pos_ = 0;
}

std::vector<double> render(const ParamSet& params, const control::AudioControls& controls,
                           const SynthConfig& cfg, std::size_t block_size) {
  require(block_size > 0, ErrorKind::kInvalidInput, "block size must be positive");
  require(controls.rpm.size() == controls.torque.size(), ErrorKind::kInvalidInput,
          "rpm and torque lengths differ");
  Synth synth(params, cfg);
  const std::size_t n = controls.size();
  std::vector<double> out(n);
  for (std::size_t start = 0; start < n; start += block_size) {
    const std::size_t len = std::min(block_size, n - start);
    synth.process(std::span(controls.rpm).subspan(start, len),
                  std::span(controls.torque).subspan(start, len),
                  std::span(out).subspan(start, len));
  }
  return out;
}

RenderTrace render_trace(const ParamSet& params, const control::AudioControls& controls,
                         const SynthConfig& cfg) {
  check_rates(params, cfg);
  require(controls.rpm.size() == controls.torque.size(), ErrorKind::kInvalidInput,
          "rpm and torque lengths differ");
  const std::size_t n = controls.size();
  RenderTrace tr;
  const auto phase = control::accumulate_phase(controls.rpm, cfg.sample_rate);
  tr.phase = phase.wrapped;
  tr.g_thr = control::throttle_gate(controls.torque, cfg.throttle_epsilon);
  tr.g_dfco = control::dfco_gate(controls.torque, cfg.dfco_epsilon);
  tr.bank_left.resize(n);
  tr.bank_right.resize(n);
  render_banks(params, cfg, engine::firing_offsets(params.engine), timing_phases(params), 0,
               tr.phase, phase.f0, tr.g_thr, tr.bank_left, tr.bank_right);

  const int bands = static_cast<int>(params.noise.band_gains.size());
  const double hop = cfg.frame_hop();
  for (auto [channel, eta] : {std::pair{kLeftChannel, &tr.eta_left}, std::pair{kRightChannel, &tr.eta_right}}) {
    engine::BandNoiseSource src(bands, cfg.noise_low_hz, cfg.sample_rate, cfg.noise_block,
                                params.noise.seed, channel);
    const auto sig = src.render(0, n);
    eta->resize(n);
    engine::mix_noise_bands(sig, n, params.noise.band_gains, hop, 0, *eta);
  }
  tr.excitation_left.resize(n);
  tr.excitation_right.resize(n);
  augment_bank(params.noise, tr.bank_left, tr.eta_left, tr.g_thr, tr.g_dfco, tr.phase,
               tr.excitation_left);
  augment_bank(params.noise, tr.bank_right, tr.eta_right, tr.g_thr, tr.g_dfco, tr.phase,
               tr.excitation_right);
  tr.output = resonator::resonator_network(tr.excitation_left, tr.excitation_right, params.resonators);
  return tr;
}

}  // namespace ptr
