#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ptr/config.hpp"
#include "ptr/engine.hpp"
#include "ptr/pulse.hpp"
#include "ptr/resonator.hpp"

namespace ptr {

inline constexpr const char* kParamsSchema = "ptr_params_v1";

/// Complete synthesizer state: engine layout, per-cylinder pulses, noise and
/// the three exhaust resonators. Frame tracks are either length 1 or one
/// value per model frame.
struct ParamSet {
  engine::EngineConfig engine;
  std::array<pulse::PulseParams, engine::kCylinders> cylinders;
  engine::NoiseParams noise;
  resonator::NetworkParams resonators;
  double sample_rate = 16000.0;
  double model_rate = 125.0;

  void validate() const;
  /// Number of model frames used by the longest track (1 if all constant).
  std::size_t frames() const;
};

/// Reasonable V8 defaults used by `ptr init-params` and the tests.
ParamSet default_params(const SynthConfig& cfg = {}, std::size_t frames = 1);

/// Repeats every length-1 track to `frames` values.
void expand_tracks(ParamSet& params, std::size_t frames);

std::string params_to_json(const ParamSet& params);
ParamSet params_from_json(const std::string& text);
ParamSet load_params(const std::string& path);
void save_params(const std::string& path, const ParamSet& params);

/// Unconstrained optimisation variables keyed by name, e.g. "cyl3.lambda",
/// "noise.band_gains", "res.left.delay_logits". std::map keeps a stable order.
using RawParams = std::map<std::string, std::vector<double>>;

RawParams to_raw(const ParamSet& params);
/// Maps raw variables back onto a copy of `shape`.
ParamSet from_raw(const RawParams& raw, const ParamSet& shape);

/// Names of the frame-rate (time-varying) raw variables.
bool is_frame_track(const std::string& name);

}  // namespace ptr
