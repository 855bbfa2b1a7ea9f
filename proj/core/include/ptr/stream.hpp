#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ptr/config.hpp"
#include "ptr/control.hpp"
#include "ptr/params.hpp"
#include "ptr/synth.hpp"

namespace ptr {

/// Embedded streaming binding: control frames in, fixed-size audio blocks
/// out. Uses the same resampler and synthesizer as the offline render, so a
/// replayed control stream yields the offline audio.
class StreamSession {
 public:
  StreamSession(const ParamSet& params, const SynthConfig& cfg, std::size_t block_size);

  /// Returns false when the frame is rejected (non-increasing time,
  /// negative or non-finite values).
  bool push_frame(double time, double rpm, double torque);
  /// No more frames; the tail becomes available as a final short block.
  void finish();

  /// Renders the next block if enough control is buffered. Returns the
  /// number of valid samples (block_size, or fewer for the final block,
  /// with the remainder zero-filled), 0 when nothing is ready.
  std::size_t pull_block(std::span<float> out);
  std::size_t pull_block(std::span<double> out);

  std::size_t block_size() const { return block_; }
  std::size_t buffered() const { return rpm_.size() - read_; }
  bool drained() const { return resampler_.finished() && buffered() == 0; }

 private:
  std::size_t render_next(std::span<double> out);

  Synth synth_;
  control::ControlResampler resampler_;
  std::size_t block_;
  std::vector<double> rpm_, torque_, scratch_;
  std::size_t read_ = 0;
};

}  // namespace ptr
