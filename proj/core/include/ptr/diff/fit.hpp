#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "ptr/config.hpp"
#include "ptr/control.hpp"
#include "ptr/diff/loss.hpp"
#include "ptr/params.hpp"

namespace ptr::diff {

struct FitConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  int iterations = 500;
  bool one_cycle = true;
  double pct_start = 0.3;
  double harmonic_weight = 1.0;
  double tv_weight = 1e-3;
  std::uint64_t seed = 0;
  double temperature_start = 2.0;
  double temperature_end = 0.5;
  bool gumbel = true;
  double divergence_factor = 1e3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Learning rate of a cosine one-cycle schedule at `step` of `total`:
/// peak/25 -> peak over pct_start, then down to peak/(25*1e4).
double one_cycle_lr(int step, int total, double peak, double pct_start);

/// AdamW with decoupled weight decay over named parameter vectors.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay);
  void step(RawParams& params, const GradientMap& grads, double lr);
  int steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct TraceRow {
  int iter = 0;
  double total = 0.0;
  double stft = 0.0;
  double harmonic = 0.0;
  double tv = 0.0;
  double lr = 0.0;
};

struct FitResult {
  ParamSet params;
  std::vector<TraceRow> trace;
  std::vector<LossBreakdown> breakdowns;
  int best_iter = 0;
  double initial_total = 0.0;
  double best_total = 0.0;
};

using FitCallback = std::function<void(const TraceRow&)>;

/// Analysis-by-synthesis: optimises every raw parameter (frame tracks per
/// frame) so the differentiable render of `controls` matches `target`.
/// Returns the best-loss parameters and the per-iteration trace.
FitResult fit(std::span<const double> target, const control::AudioControls& controls,
              const ParamSet& init, const FitConfig& cfg, const SynthConfig& synth,
              const FitCallback& on_iteration = {});

/// Loss of a parameter set in inference mode (hard argmax delays).
LossBreakdown evaluate_loss(std::span<const double> target, const control::AudioControls& controls,
                            const ParamSet& params, const SynthConfig& synth,
                            double harmonic_weight = 1.0);

/// Differentiable-path render (inference mode), for comparisons.
std::vector<double> render_differentiable(const ParamSet& params,
                                          const control::AudioControls& controls,
                                          const SynthConfig& synth);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace ptr::diff
