#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ptr/config.hpp"
#include "ptr/control.hpp"
#include "ptr/diff/tape.hpp"
#include "ptr/engine.hpp"
#include "ptr/params.hpp"
#include "ptr/resonator.hpp"

namespace ptr::diff {

/// Control-derived constants of a differentiable render. Built once per
/// fitting run; the noise realisations are constant inputs.
struct RenderContext {
  RenderContext(const ParamSet& params, const control::AudioControls& controls,
                const SynthConfig& cfg);

  std::size_t length = 0;
  double hop = 128.0;
  SynthConfig cfg;
  std::vector<double> rpm, wrapped_phase, f0, g_thr, g_dfco;
  std::vector<double> band_left, band_right;  // [band][sample], flattened
  std::array<double, engine::kCylinders> offsets{};
};

struct GraphOptions {
  resonator::DelayMode mode = resonator::DelayMode::kInference;
  std::uint64_t gumbel_seed = 0;
  double temperature = 0.0;  // <= 0: use each resonator's own temperature
  /// Fixed straight-through reference weights per resonator name
  /// ("left"/"right"/"shared"). Only used by finite-difference checks.
  const std::map<std::string, std::vector<double>>* soft_reference = nullptr;
};

struct GraphNodes {
  NodeId output;
  NodeId bank_left, bank_right;
  std::map<std::string, NodeId> params;
  std::map<std::string, int> selected_delay;  // per resonator
};

/// Records the full synthesis graph on `tape` with every entry of `raw` as a
/// named parameter. Backward closures refer to `ctx`, which must outlive the tape.
GraphNodes build_render_graph(Tape& tape, const RawParams& raw, const ParamSet& shape,
                              const RenderContext& ctx, const GraphOptions& opts = {});

/// Pulse op: inputs (lambda, alpha, beta, nu, gain, timing) audio-rate
/// nodes (timing is a scalar, radians of engine-cycle phase).
NodeId pulse_node(Tape& t, std::span<const double> base_phase, std::span<const double> f0,
                  NodeId lambda, NodeId alpha, NodeId beta, NodeId nu, NodeId gain, NodeId timing,
                  int harmonics, double nyquist);

/// eta = sum_b upsample(gains_b) * eta_b with gains a flattened [band][frame] node.
NodeId noise_node(Tape& t, NodeId gains, std::span<const double> bands, std::size_t bands_count,
                  std::size_t length, double hop);

/// Augmentation op (inputs: pulse, eta, turb, intake_alpha, intake_beta).
NodeId augment_node(Tape& t, NodeId pulse, NodeId eta, NodeId turb, NodeId intake_alpha,
                    NodeId intake_beta, std::span<const double> g_thr,
                    std::span<const double> g_dfco, std::span<const double> engine_phase);

/// (theta1, theta2, gain_logit) scalars -> [alpha_eff, beta_eff].
NodeId effective_coeff_node(Tape& t, NodeId theta1, NodeId theta2, NodeId gain_logit);

/// Logits -> soft weights softmax((logits + noise)/temperature).
NodeId soft_weights_node(Tape& t, NodeId logits, std::span<const double> noise, double temperature);

/// All-pole filter whose selection weights are `onehot + soft - reference`.
/// An empty onehot selects the pure soft mixture.
NodeId resonator_node(Tape& t, NodeId x, NodeId coeffs, NodeId soft, std::vector<double> onehot,
                      std::vector<double> reference, int delay_min, int delay_max);

}  // namespace ptr::diff
