#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ptr {

/// Global synthesis settings. Every field can be overridden from a
/// key/value config file (see docs/config.md) and from CLI flags.
struct SynthConfig {
  double sample_rate = 16000.0;
  double model_rate = 125.0;
  double control_rate = 1000.0;
  int harmonics = 96;
  int noise_bands = 16;
  double noise_low_hz = 60.0;
  int noise_block = 2048;
  double throttle_epsilon = 0.02;
  double dfco_epsilon = 0.02;
  bool pulse_throttle_gating = true;
  int delay_min = 16;
  int delay_max = 400;
  int block_size = 512;

  /// Audio samples per model frame (128 at the defaults).
  double frame_hop() const { return sample_rate / model_rate; }
  double nyquist() const { return 0.5 * sample_rate; }
  void validate() const;
};

/// Flat key/value store parsed from a `key = value` file. `#` starts a comment.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Applies the synthesis keys that are present onto `cfg`.
  void apply(SynthConfig& cfg) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ptr
