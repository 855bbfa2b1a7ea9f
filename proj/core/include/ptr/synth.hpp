#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ptr/config.hpp"
#include "ptr/control.hpp"
#include "ptr/engine.hpp"
#include "ptr/params.hpp"
#include "ptr/resonator.hpp"

namespace ptr {

/// Streaming renderer: one instance owns the phase accumulator, noise
/// generators and resonator delay lines of a single stream. Buffers grow to
/// the largest block seen and are reused afterwards.
class Synth {
 public:
  Synth(const ParamSet& params, const SynthConfig& cfg);

  /// Renders rpm.size() samples continuing from the current position.
  void process(std::span<const double> rpm, std::span<const double> torque, std::span<double> out);
  void reset();
  std::int64_t position() const { return pos_; }

 private:
  void ensure_capacity(std::size_t n);

  ParamSet params_;
  SynthConfig cfg_;
  std::array<double, engine::kCylinders> offsets_{};
  std::array<double, engine::kCylinders> timings_{};
  control::PhaseState phase_;
  engine::BandNoiseSource noise_left_;
  engine::BandNoiseSource noise_right_;
  resonator::KsFilter res_left_;
  resonator::KsFilter res_right_;
  resonator::KsFilter res_shared_;
  std::int64_t pos_ = 0;

  std::vector<double> wrapped_, f0_, g_thr_, g_dfco_, bank_l_, bank_r_, bands_, eta_l_, eta_r_,
      tmp_l_, tmp_r_;
};

/// Intermediate signals of an offline render, for analysis and tests.
struct RenderTrace {
  std::vector<double> output;
  std::vector<double> bank_left, bank_right;      // summed pulses before augmentation
  std::vector<double> eta_left, eta_right;        // noise bank outputs
  std::vector<double> excitation_left, excitation_right;  // augmented banks
  std::vector<double> g_thr, g_dfco, phase;
};

/// Offline render through Synth in blocks of `block_size` samples.
std::vector<double> render(const ParamSet& params, const control::AudioControls& controls,
                           const SynthConfig& cfg, std::size_t block_size);

/// Whole-signal render keeping intermediate signals (non-streaming path:
/// resonators through allpole_apply).
RenderTrace render_trace(const ParamSet& params, const control::AudioControls& controls,
                         const SynthConfig& cfg);

}  // namespace ptr
