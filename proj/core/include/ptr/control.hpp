#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ptr::control {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// RPM / normalized torque series at a uniform control rate.
struct ControlTrajectory {
  std::vector<double> rpm;
  std::vector<double> torque;  // [-1, 1]
  double control_rate = 1000.0;
  double duration = 0.0;  // seconds covered by the trajectory

  void validate() const;
  /// Number of audio samples this trajectory renders to.
  std::size_t audio_length(double sample_rate) const;
};

/// RPM / torque interpolated to audio rate.
struct AudioControls {
  std::vector<double> rpm;
  std::vector<double> torque;
  double sample_rate = 16000.0;

  std::size_t size() const { return rpm.size(); }
};

/// Incremental two-stage linear resampler: irregular (time, rpm, torque)
/// points -> uniform control grid -> audio rate. Offline ingestion feeds a
/// whole file through the same object, so streamed and offline audio-rate
/// controls are bit-identical.
class ControlResampler {
 public:
  ControlResampler(double control_rate, double sample_rate);

  /// Returns false (and ignores the point) when time does not increase.
  bool push(double time, double rpm, double torque);
  /// Marks end of input; the remaining audio samples become available.
  void finish();

  /// Moves every audio-rate sample that can be produced so far into out.
  std::size_t pull(std::vector<double>& rpm_out, std::vector<double>& torque_out,
                   std::size_t max_samples = static_cast<std::size_t>(-1));

  bool finished() const { return finished_; }
  /// Total audio length, known once finish() was called.
  std::size_t total_audio_samples() const { return total_audio_; }
  std::size_t emitted() const { return next_audio_; }
  const std::vector<double>& grid_rpm() const { return grid_rpm_; }
  const std::vector<double>& grid_torque() const { return grid_torque_; }
  double first_time() const { return t0_; }
  double last_time() const { return last_t_; }

 private:
  void advance_grid();
  bool audio_ready(std::size_t n, std::size_t& i, double& frac) const;

  double control_rate_;
  double sample_rate_;
  bool have_first_ = false;
  bool finished_ = false;
  double t0_ = 0.0;
  double last_t_ = 0.0;
  // Last two raw points.
  double pa_t_ = 0, pa_rpm_ = 0, pa_tq_ = 0;
  double pb_t_ = 0, pb_rpm_ = 0, pb_tq_ = 0;
  std::size_t raw_count_ = 0;
  std::vector<double> grid_rpm_;
  std::vector<double> grid_torque_;
  std::size_t grid_total_ = 0;
  std::size_t next_audio_ = 0;
  std::size_t total_audio_ = 0;
};

/// Parses `time,rpm,torque` CSV (header required) and resamples it.
/// Errors carry the offending line number.
ControlTrajectory parse_control_csv(std::istream& in, double control_rate);
ControlTrajectory load_control_csv(const std::string& path, double control_rate);
void write_control_csv(std::ostream& out, const ControlTrajectory& traj);

AudioControls to_audio_rate(const ControlTrajectory& traj, double sample_rate);

/// Builds a trajectory from uniformly sampled series (duration = (n-1)/rate).
ControlTrajectory make_trajectory(std::vector<double> rpm, std::vector<double> torque,
                                  double control_rate);

// ---------------------------------------------------------------------------
// Frame features

inline constexpr std::size_t kFeatureCount = 6;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "rpm", "torque", "d_rpm", "d_torque", "dd_rpm", "dd_torque"};

struct FeatureStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> std{};
};

struct ControlFeatures {
  // Indexed like kFeatureNames.
  std::array<std::vector<double>, kFeatureCount> series;
  FeatureStats stats;  // populated by standardize()
  bool standardized = false;

  std::size_t frames() const { return series[0].size(); }
  std::vector<double>& rpm() { return series[0]; }
  std::vector<double>& torque() { return series[1]; }
  std::vector<double>& d_rpm() { return series[2]; }
  std::vector<double>& d_torque() { return series[3]; }
  std::vector<double>& dd_rpm() { return series[4]; }
  std::vector<double>& dd_torque() { return series[5]; }
};

/// Frame-averages (trailing windows) and takes first/second differences.
ControlFeatures derive_deltas(const ControlTrajectory& traj, double model_rate);

FeatureStats compute_stats(const ControlFeatures& features);
ControlFeatures standardize(const ControlFeatures& features, const FeatureStats& stats);
ControlFeatures destandardize(const ControlFeatures& features);

// ---------------------------------------------------------------------------
// Conditioning

std::vector<double> throttle_gate(std::span<const double> torque, double epsilon = 0.02);
std::vector<double> dfco_gate(std::span<const double> torque, double epsilon = 0.02);

inline double throttle_gate(double torque, double epsilon) {
  return std::pow(torque > epsilon ? torque : epsilon, 0.7);
}
inline double dfco_gate(double torque, double epsilon) {
  return -torque > epsilon ? -torque : epsilon;
}

/// Wraps x into [0, 2*pi).
double wrap_phase(double x);

/// Engine-cycle phase accumulator. The wrapped phase is tracked in cycles
/// with Kahan compensation; the unwrapped phase is cycles + integer count.
class PhaseState {
 public:
  /// Advances by one sample at fundamental f0 (Hz). The very first sample
  /// sits at phase 0 regardless of f0.
  void step(double f0, double sample_rate);

  double wrapped() const { return kTwoPi * frac_; }
  double unwrapped() const { return kTwoPi * (static_cast<double>(turns_) + frac_); }
  double cycle_fraction() const { return frac_; }

 private:
  bool started_ = false;
  std::int64_t turns_ = 0;
  double frac_ = 0.0;
  double comp_ = 0.0;
};

struct PhaseSeries {
  std::vector<double> unwrapped;
  std::vector<double> wrapped;
  std::vector<double> f0;
};

PhaseSeries accumulate_phase(std::span<const double> rpm, double sample_rate);

/// phi_i = wrap(phi + offset_i + timing_i). `timings` may be empty.
std::vector<std::vector<double>> cylinder_phases(std::span<const double> wrapped_phase,
                                                 std::span<const double> offsets,
                                                 std::span<const double> timings = {});

/// Linear interpolation of a frame-rate track to audio rate, interpolating
/// between frame centres (t*hop + (hop-1)/2) and holding the ends. A track of
/// length 1 is a constant.
double frame_value_at(std::span<const double> track, double hop, std::int64_t sample);
std::vector<double> upsample_frames(std::span<const double> track, double hop, std::size_t length,
                                    std::int64_t start = 0);
/// Adjoint of upsample_frames: accumulates audio-rate gradient into frames.
void upsample_frames_adjoint(std::span<const double> grad_audio, double hop,
                             std::span<double> grad_track, std::int64_t start = 0);

}  // namespace ptr::control
