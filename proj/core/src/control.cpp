#include "ptr/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ptr/error.hpp"

namespace ptr::control {

void ControlTrajectory::validate() const {
  require(control_rate > 0, ErrorKind::kInvalidInput, "control_rate must be positive");
  require(rpm.size() == torque.size(), ErrorKind::kInvalidInput,
          "rpm and torque series differ in length");
  require(!rpm.empty(), ErrorKind::kInvalidInput, "empty control trajectory");
  require(duration >= 0, ErrorKind::kInvalidInput, "negative duration");
  for (std::size_t i = 0; i < rpm.size(); ++i) {
    require(std::isfinite(rpm[i]) && rpm[i] >= 0, ErrorKind::kInvalidInput,
            "rpm must be finite and >= 0 (sample " + std::to_string(i) + ")");
    require(std::isfinite(torque[i]), ErrorKind::kInvalidInput,
            "torque must be finite (sample " + std::to_string(i) + ")");
  }
}

std::size_t ControlTrajectory::audio_length(double sample_rate) const {
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

namespace {

// Shared by the offline and streaming paths so both round identically.
inline double grid_position(std::size_t n, double control_rate, double sample_rate) {
  return static_cast<double>(n) * control_rate / sample_rate;
}

inline double lerp(double a, double b, double frac) { return a + (b - a) * frac; }

}  // namespace

// ---------------------------------------------------------------------------

ControlResampler::ControlResampler(double control_rate, double sample_rate)
    : control_rate_(control_rate), sample_rate_(sample_rate) {
  require(control_rate > 0 && sample_rate > 0, ErrorKind::kInvalidInput, "rates must be positive");
}

bool ControlResampler::push(double time, double rpm, double torque) {
  if (finished_ || !std::isfinite(time) || !std::isfinite(rpm) || !std::isfinite(torque) || rpm < 0) {
    return false;
  }
  if (!have_first_) {
    have_first_ = true;
    t0_ = time;
    last_t_ = time;
    pb_t_ = time;
    pb_rpm_ = rpm;
    pb_tq_ = torque;
    raw_count_ = 1;
    advance_grid();
    return true;
  }
  if (!(time > last_t_)) return false;
  pa_t_ = pb_t_;
  pa_rpm_ = pb_rpm_;
  pa_tq_ = pb_tq_;
  pb_t_ = time;
  pb_rpm_ = rpm;
  pb_tq_ = torque;
  last_t_ = time;
  ++raw_count_;
  advance_grid();
  return true;
}

void ControlResampler::advance_grid() {
  while (true) {
    const double tg = t0_ + static_cast<double>(grid_rpm_.size()) / control_rate_;
    if (tg > pb_t_) break;
    if (raw_count_ == 1) {
      grid_rpm_.push_back(pb_rpm_);
      grid_torque_.push_back(pb_tq_);
    } else {
      const double frac = (tg - pa_t_) / (pb_t_ - pa_t_);
      grid_rpm_.push_back(lerp(pa_rpm_, pb_rpm_, frac));
      grid_torque_.push_back(lerp(pa_tq_, pb_tq_, frac));
    }
  }
}

void ControlResampler::finish() {
  if (finished_) return;
  finished_ = true;
  total_audio_ = have_first_
                     ? static_cast<std::size_t>(std::llround((last_t_ - t0_) * sample_rate_))
                     : 0;
}

bool ControlResampler::audio_ready(std::size_t n, std::size_t& i, double& frac) const {
  if (grid_rpm_.empty()) return false;
  const double p = grid_position(n, control_rate_, sample_rate_);
  i = static_cast<std::size_t>(std::floor(p));
  frac = p - static_cast<double>(i);
  if (finished_) return n < total_audio_;
  const auto bound = static_cast<std::size_t>(std::llround((last_t_ - t0_) * sample_rate_));
  return n < bound && i + 1 < grid_rpm_.size();
}

std::size_t ControlResampler::pull(std::vector<double>& rpm_out, std::vector<double>& torque_out,
                                   std::size_t max_samples) {
  std::size_t produced = 0;
  std::size_t i = 0;
  double frac = 0.0;
  while (produced < max_samples && audio_ready(next_audio_, i, frac)) {
    if (i + 1 < grid_rpm_.size()) {
      rpm_out.push_back(lerp(grid_rpm_[i], grid_rpm_[i + 1], frac));
      torque_out.push_back(lerp(grid_torque_[i], grid_torque_[i + 1], frac));
    } else {
      rpm_out.push_back(grid_rpm_.back());
      torque_out.push_back(grid_torque_.back());
    }
    ++next_audio_;
    ++produced;
  }
  return produced;
}

// ---------------------------------------------------------------------------

ControlTrajectory parse_control_csv(std::istream& in, double control_rate) {
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  ControlResampler resampler(control_rate, 1.0);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      std::string compact;
      for (char ch : line) {
        if (ch != ' ' && ch != '\t') compact += ch;
      }
      require(compact == "time,rpm,torque", ErrorKind::kInvalidInput,
              "control CSV line " + std::to_string(lineno) + ": expected header 'time,rpm,torque'");
      header_seen = true;
      continue;
    }
    std::array<double, 3> v{};
    std::stringstream ss(line);
    std::string field;
    static constexpr std::array<const char*, 3> kNames = {"time", "rpm", "torque"};
    for (std::size_t f = 0; f < 3; ++f) {
      require(static_cast<bool>(std::getline(ss, field, ',')), ErrorKind::kInvalidInput,
              "control CSV line " + std::to_string(lineno) + ": missing field '" + kNames[f] + "'");
      try {
        std::size_t used = 0;
        v[f] = std::stod(field, &used);
        while (used < field.size() && (field[used] == ' ' || field[used] == '\t')) ++used;
        require(used == field.size(), ErrorKind::kInvalidInput, "");
      } catch (const std::exception&) {
        fail(ErrorKind::kInvalidInput, "control CSV line " + std::to_string(lineno) + ": field '" +
                                           kNames[f] + "' is not a number: '" + field + "'");
      }
    }
    require(!std::getline(ss, field, ','), ErrorKind::kInvalidInput,
            "control CSV line " + std::to_string(lineno) + ": too many fields");
    require(std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]),
            ErrorKind::kInvalidInput,
            "control CSV line " + std::to_string(lineno) + ": non-finite value");
    require(v[1] >= 0, ErrorKind::kInvalidInput,
            "control CSV line " + std::to_string(lineno) + ": field 'rpm' must be >= 0");
    require(resampler.push(v[0], v[1], v[2]), ErrorKind::kInvalidInput,
            "control CSV line " + std::to_string(lineno) + ": field 'time' must increase");
  }
  require(header_seen, ErrorKind::kInvalidInput, "control CSV: missing header");
  require(!resampler.grid_rpm().empty(), ErrorKind::kInvalidInput, "control CSV: no data rows");
  resampler.finish();
  ControlTrajectory traj;
  traj.rpm = resampler.grid_rpm();
  traj.torque = resampler.grid_torque();
  traj.control_rate = control_rate;
  traj.duration = resampler.last_time() - resampler.first_time();
  traj.validate();
  return traj;
}

ControlTrajectory load_control_csv(const std::string& path, double control_rate) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kInvalidInput, "cannot open control CSV " + path);
  return parse_control_csv(in, control_rate);
}

void write_control_csv(std::ostream& out, const ControlTrajectory& traj) {
  out << "time,rpm,torque\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < traj.rpm.size(); ++i) {
    out << static_cast<double>(i) / traj.control_rate << ',' << traj.rpm[i] << ',' << traj.torque[i]
        << '\n';
  }
}

AudioControls to_audio_rate(const ControlTrajectory& traj, double sample_rate) {
  traj.validate();
  AudioControls out;
  out.sample_rate = sample_rate;
  const std::size_t n = traj.audio_length(sample_rate);
  out.rpm.resize(n);
  out.torque.resize(n);
  const std::size_t m = traj.rpm.size();
  for (std::size_t s = 0; s < n; ++s) {
    const double p = grid_position(s, traj.control_rate, sample_rate);
    const auto i = static_cast<std::size_t>(std::floor(p));
    const double frac = p - static_cast<double>(i);
    if (i + 1 < m) {
      out.rpm[s] = lerp(traj.rpm[i], traj.rpm[i + 1], frac);
      out.torque[s] = lerp(traj.torque[i], traj.torque[i + 1], frac);
    } else {
      out.rpm[s] = traj.rpm.back();
      out.torque[s] = traj.torque.back();
    }
  }
  return out;
}

ControlTrajectory make_trajectory(std::vector<double> rpm, std::vector<double> torque,
                                  double control_rate) {
  ControlTrajectory traj;
  traj.control_rate = control_rate;
  traj.duration = rpm.empty() ? 0.0 : static_cast<double>(rpm.size() - 1) / control_rate;
  traj.rpm = std::move(rpm);
  traj.torque = std::move(torque);
  traj.validate();
  return traj;
}

// ---------------------------------------------------------------------------

ControlFeatures derive_deltas(const ControlTrajectory& traj, double model_rate) {
  traj.validate();
  require(model_rate > 0, ErrorKind::kInvalidInput, "model_rate must be positive");
  const double per_frame = traj.control_rate / model_rate;
  const auto frames =
      static_cast<std::size_t>(std::floor(static_cast<double>(traj.rpm.size()) / per_frame + 1e-9));
  require(frames >= 2, ErrorKind::kInvalidInput,
          "trajectory shorter than 2 model frames (" + std::to_string(frames) + ")");

  ControlFeatures f;
  auto average = [&](const std::vector<double>& x) {
    std::vector<double> out(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      // Trailing window: samples with time in [t/model_rate, (t+1)/model_rate).
      const auto b = static_cast<std::size_t>(std::ceil(static_cast<double>(t) * per_frame - 1e-9));
      auto e = static_cast<std::size_t>(std::ceil(static_cast<double>(t + 1) * per_frame - 1e-9));
      e = std::min(std::max(e, b + 1), x.size());
      double acc = 0.0;
      for (std::size_t j = b; j < e; ++j) acc += x[j];
      out[t] = acc / static_cast<double>(e - b);
    }
    return out;
  };
  auto diff1 = [](const std::vector<double>& x) {
    std::vector<double> d(x.size(), 0.0);
    for (std::size_t t = 1; t < x.size(); ++t) d[t] = x[t] - x[t - 1];
    return d;
  };
  auto diff2 = [](const std::vector<double>& d) {
    // d[0] is a padding zero, so the second difference starts at t = 2.
    std::vector<double> dd(d.size(), 0.0);
    for (std::size_t t = 2; t < d.size(); ++t) dd[t] = d[t] - d[t - 1];
    return dd;
  };
  f.series[0] = average(traj.rpm);
  f.series[1] = average(traj.torque);
  f.series[2] = diff1(f.series[0]);
  f.series[3] = diff1(f.series[1]);
  f.series[4] = diff2(f.series[2]);
  f.series[5] = diff2(f.series[3]);
  return f;
}

FeatureStats compute_stats(const ControlFeatures& features) {
  FeatureStats s;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    const auto& x = features.series[k];
    require(!x.empty(), ErrorKind::kInvalidInput, "empty feature series");
    const double n = static_cast<double>(x.size());
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - m) * (v - m);
    s.mean[k] = m;
    s.std[k] = std::sqrt(var / n);
  }
  return s;
}

ControlFeatures standardize(const ControlFeatures& features, const FeatureStats& stats) {
  ControlFeatures out = features;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    require(stats.std[k] > 0 && std::isfinite(stats.std[k]), ErrorKind::kInvalidInput,
            std::string("degenerate feature '") + kFeatureNames[k] + "': zero standard deviation");
    for (double& v : out.series[k]) v = (v - stats.mean[k]) / stats.std[k];
  }
  out.stats = stats;
  out.standardized = true;
  return out;
}

ControlFeatures destandardize(const ControlFeatures& features) {
  require(features.standardized, ErrorKind::kState, "features are not standardized");
  ControlFeatures out = features;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    for (double& v : out.series[k]) v = v * features.stats.std[k] + features.stats.mean[k];
  }
  out.standardized = false;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> throttle_gate(std::span<const double> torque, double epsilon) {
  require(epsilon > 0, ErrorKind::kInvalidInput, "epsilon must be positive");
  std::vector<double> g(torque.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = throttle_gate(torque[i], epsilon);
  return g;
}

std::vector<double> dfco_gate(std::span<const double> torque, double epsilon) {
  require(epsilon > 0, ErrorKind::kInvalidInput, "epsilon must be positive");
  std::vector<double> g(torque.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = dfco_gate(torque[i], epsilon);
  return g;
}

double wrap_phase(double x) {
  double w = x - kTwoPi * std::floor(x / kTwoPi);
  if (w >= kTwoPi) w -= kTwoPi;
  if (w < 0.0) w = 0.0;
  return w;
}

void PhaseState::step(double f0, double sample_rate) {
  if (!started_) {
    started_ = true;
    return;
  }
  // Kahan-compensated accumulation of the cycle fraction.
  const double y = f0 / sample_rate - comp_;
  const double t = frac_ + y;
  comp_ = (t - frac_) - y;
  frac_ = t;
  if (frac_ >= 1.0) {
    const double whole = std::floor(frac_);
    frac_ -= whole;
    turns_ += static_cast<std::int64_t>(whole);
  }
}

PhaseSeries accumulate_phase(std::span<const double> rpm, double sample_rate) {
  require(sample_rate > 0, ErrorKind::kInvalidInput, "sample_rate must be positive");
  PhaseSeries out;
  out.unwrapped.resize(rpm.size());
  out.wrapped.resize(rpm.size());
  out.f0.resize(rpm.size());
  PhaseState state;
  for (std::size_t n = 0; n < rpm.size(); ++n) {
    require(rpm[n] >= 0 && std::isfinite(rpm[n]), ErrorKind::kInvalidInput,
            "negative or non-finite rpm at sample " + std::to_string(n));
    out.f0[n] = rpm[n] / 120.0;
    state.step(out.f0[n], sample_rate);
    out.unwrapped[n] = state.unwrapped();
    out.wrapped[n] = state.wrapped();
  }
  return out;
}

std::vector<std::vector<double>> cylinder_phases(std::span<const double> wrapped_phase,
                                                 std::span<const double> offsets,
                                                 std::span<const double> timings) {
  require(timings.empty() || timings.size() == offsets.size(), ErrorKind::kInvalidInput,
          "timings length must match offsets");
  std::vector<std::vector<double>> out(offsets.size(), std::vector<double>(wrapped_phase.size()));
  for (std::size_t c = 0; c < offsets.size(); ++c) {
    const double shift = offsets[c] + (timings.empty() ? 0.0 : timings[c]);
    for (std::size_t n = 0; n < wrapped_phase.size(); ++n) {
      out[c][n] = wrap_phase(wrapped_phase[n] + shift);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct FramePos {
  std::size_t i;
  double frac;  // weight of frame i + 1
  bool single;  // hold frame i only
};

inline FramePos frame_position(std::size_t frames, double hop, std::int64_t sample) {
  if (frames <= 1) return {0, 0.0, true};
  const double p = (static_cast<double>(sample) - 0.5 * (hop - 1.0)) / hop;
  if (p <= 0.0) return {0, 0.0, true};
  const double fl = std::floor(p);
  const auto i = static_cast<std::size_t>(fl);
  if (i >= frames - 1) return {frames - 1, 0.0, true};
  return {i, p - fl, false};
}

}  // namespace

double frame_value_at(std::span<const double> track, double hop, std::int64_t sample) {
  const auto pos = frame_position(track.size(), hop, sample);
  if (pos.single) return track[pos.i];
  return lerp(track[pos.i], track[pos.i + 1], pos.frac);
}

std::vector<double> upsample_frames(std::span<const double> track, double hop, std::size_t length,
                                    std::int64_t start) {
  require(!track.empty(), ErrorKind::kInvalidInput, "empty parameter track");
  std::vector<double> out(length);
  for (std::size_t n = 0; n < length; ++n) {
    out[n] = frame_value_at(track, hop, start + static_cast<std::int64_t>(n));
  }
  return out;
}

void upsample_frames_adjoint(std::span<const double> grad_audio, double hop,
                             std::span<double> grad_track, std::int64_t start) {
  for (std::size_t n = 0; n < grad_audio.size(); ++n) {
    const auto pos = frame_position(grad_track.size(), hop, start + static_cast<std::int64_t>(n));
    if (pos.single) {
      grad_track[pos.i] += grad_audio[n];
    } else {
      grad_track[pos.i] += grad_audio[n] * (1.0 - pos.frac);
      grad_track[pos.i + 1] += grad_audio[n] * pos.frac;
    }
  }
}

}  // namespace ptr::control
