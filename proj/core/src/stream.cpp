#include "ptr/stream.hpp"

#include <algorithm>
#include <cmath>

#include "ptr/error.hpp"

namespace ptr {

StreamSession::StreamSession(const ParamSet& params, const SynthConfig& cfg, std::size_t block_size)
    : synth_(params, cfg), resampler_(cfg.control_rate, cfg.sample_rate), block_(block_size) {
  require(block_size > 0, ErrorKind::kInvalidInput, "stream block size must be positive");
  rpm_.reserve(4 * block_size);
  torque_.reserve(4 * block_size);
  scratch_.resize(block_size);
}

bool StreamSession::push_frame(double time, double rpm, double torque) {
  if (!std::isfinite(time) || !std::isfinite(rpm) || !std::isfinite(torque) || rpm < 0.0) {
    return false;
  }
  if (resampler_.finished() || !resampler_.push(time, rpm, torque)) return false;
  resampler_.pull(rpm_, torque_);
  return true;
}

void StreamSession::finish() {
  resampler_.finish();
  resampler_.pull(rpm_, torque_);
}

std::size_t StreamSession::render_next(std::span<double> out) {
  require(out.size() >= block_, ErrorKind::kInvalidInput, "stream output block too small");
  const std::size_t avail = buffered();
  std::size_t n = 0;
  if (avail >= block_) {
    n = block_;
  } else if (resampler_.finished() && avail > 0) {
    n = avail;
  } else {
    return 0;
  }
  synth_.process(std::span<const double>(rpm_).subspan(read_, n),
                 std::span<const double>(torque_).subspan(read_, n), out.first(n));
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(n), out.begin() + static_cast<std::ptrdiff_t>(block_), 0.0);
  read_ += n;
  if (read_ >= block_) {
    // Compact in place; capacity is retained so steady state does not allocate.
    rpm_.erase(rpm_.begin(), rpm_.begin() + static_cast<std::ptrdiff_t>(read_));
    torque_.erase(torque_.begin(), torque_.begin() + static_cast<std::ptrdiff_t>(read_));
    read_ = 0;
  }
  return n;
}

std::size_t StreamSession::pull_block(std::span<double> out) { return render_next(out); }

std::size_t StreamSession::pull_block(std::span<float> out) {
  require(out.size() >= block_, ErrorKind::kInvalidInput, "stream output block too small");
  const std::size_t n = render_next(scratch_);
  if (n == 0) return 0;
  for (std::size_t i = 0; i < block_; ++i) out[i] = static_cast<float>(scratch_[i]);
  return n;
}

}  // namespace ptr
