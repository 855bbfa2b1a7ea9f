#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ptr/config.hpp"

namespace ptr::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification failure or fit divergence
inline constexpr int kExitInput = 2;    // malformed input or configuration

struct RenderOptions {
  std::string control;
  std::string params;  // empty: default parameters
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t block_size = 512;
  bool normalize = false;
  bool pcm16 = false;
};

struct FitOptions {
  std::string target;
  std::string control;
  std::string init;
  std::string out;
  std::string trace;
  std::optional<std::uint64_t> seed;
  int iterations = 500;
  double lr = 1e-3;
  double harmonic_weight = 1.0;
  double weight_decay = 1e-2;
  double tv_weight = 1e-3;
  bool quiet = false;
};

struct PulsePlotOptions {
  std::vector<std::string> sets;  // "lambda=..,alpha=..,beta=..,nu=..,gain=.."
  std::size_t resolution = 512;
  double rpm = 3000.0;
  std::string out;  // empty: stdout
};

struct VerifyCliOptions {
  std::string suite = "all";
  double tolerance = 1e-5;
  std::uint64_t seed = 7;
  bool inject_unstable = false;
};

struct StreamOptions {
  std::string params;
  std::optional<std::uint64_t> seed;
  std::size_t block_size = 512;
  std::size_t queue_frames = 4096;
};

int cmd_render(const RenderOptions& opts, const SynthConfig& cfg);
int cmd_fit(const FitOptions& opts, const SynthConfig& cfg);
int cmd_pulse_plot(const PulsePlotOptions& opts, const SynthConfig& cfg, std::ostream& out);
int cmd_verify(const VerifyCliOptions& opts, std::ostream& out);
int cmd_stream(const StreamOptions& opts, const SynthConfig& cfg, std::istream& in, std::ostream& out,
               std::ostream& err);
int cmd_init_params(const std::string& out, std::size_t frames, const SynthConfig& cfg);

}  // namespace ptr::cli
