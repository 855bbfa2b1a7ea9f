#include "ptr/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ptr/error.hpp"

namespace ptr {

void SynthConfig::validate() const {
  require(sample_rate > 0 && model_rate > 0 && control_rate > 0, ErrorKind::kConfig,
          "rates must be positive");
  require(std::abs(frame_hop() - std::round(frame_hop())) < 1e-9, ErrorKind::kConfig,
          "sample_rate must be an integer multiple of model_rate");
  require(harmonics >= 1, ErrorKind::kConfig, "harmonics must be >= 1");
  require(noise_bands >= 2, ErrorKind::kConfig, "noise_bands must be >= 2");
  require(noise_low_hz > 0 && noise_low_hz < nyquist(), ErrorKind::kConfig,
          "noise_low_hz must lie below Nyquist");
  require(noise_block >= 16 && noise_block % 2 == 0, ErrorKind::kConfig,
          "noise_block must be even and >= 16");
  require(throttle_epsilon > 0 && dfco_epsilon > 0, ErrorKind::kConfig,
          "gate epsilons must be positive");
  require(delay_min >= 1 && delay_max >= delay_min, ErrorKind::kConfig,
          "delay range must satisfy 1 <= delay_min <= delay_max");
  require(block_size >= 1, ErrorKind::kConfig, "block_size must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') continue;  // section headers are cosmetic
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kInvalidInput,
            "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    require(!key.empty(), ErrorKind::kInvalidInput,
            "config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kInvalidInput, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    require(used == it->second.size(), ErrorKind::kInvalidInput, "");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kInvalidInput, "config key '" + key + "': not a number: " + it->second);
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    long long v = std::stoll(it->second, &used);
    require(used == it->second.size(), ErrorKind::kInvalidInput, "");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kInvalidInput, "config key '" + key + "': not an integer: " + it->second);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorKind::kInvalidInput, "config key '" + key + "': not a boolean: " + v);
}

void KeyValueConfig::apply(SynthConfig& cfg) const {
  cfg.sample_rate = get_double("sample_rate", cfg.sample_rate);
  cfg.model_rate = get_double("model_rate", cfg.model_rate);
  cfg.control_rate = get_double("control_rate", cfg.control_rate);
  cfg.harmonics = static_cast<int>(get_int("harmonics", cfg.harmonics));
  cfg.noise_bands = static_cast<int>(get_int("noise_bands", cfg.noise_bands));
  cfg.noise_low_hz = get_double("noise_low_hz", cfg.noise_low_hz);
  cfg.noise_block = static_cast<int>(get_int("noise_block", cfg.noise_block));
  cfg.throttle_epsilon = get_double("throttle_epsilon", cfg.throttle_epsilon);
  cfg.dfco_epsilon = get_double("dfco_epsilon", cfg.dfco_epsilon);
  cfg.pulse_throttle_gating = get_bool("pulse_throttle_gating", cfg.pulse_throttle_gating);
  cfg.delay_min = static_cast<int>(get_int("delay_min", cfg.delay_min));
  cfg.delay_max = static_cast<int>(get_int("delay_max", cfg.delay_max));
  cfg.block_size = static_cast<int>(get_int("block_size", cfg.block_size));
}

}  // namespace ptr
