#include "ptr/diff/fit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ptr/diff/graph.hpp"
#include "ptr/error.hpp"

namespace ptr::diff {

namespace {

double cosine_anneal(double start, double end, double pct) {
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

struct Objective {
  NodeId total;     // stft + w * harmonic
  NodeId stft;
  NodeId harmonic;
  NodeId tv;        // smoothness penalty (unweighted)
  NodeId objective; // total + tv_weight * tv
};

Objective build_objective(Tape& tape, NodeId output, const GraphNodes& nodes, const RawParams& raw,
                          const ParamSet& shape, const MrStftLoss& stft, const HarmonicLoss& harm,
                          double harmonic_weight, double tv_weight, LossBreakdown* breakdown) {
  Objective o;
  o.stft = mrstft_node(tape, output, stft, breakdown);
  o.harmonic = harmonic_node(tape, output, harm, breakdown ? &breakdown->harmonic_per_order : nullptr);
  const NodeId parts[] = {o.stft, o.harmonic};
  const double weights[] = {1.0, harmonic_weight};
  o.total = weighted_sum(tape, parts, weights);
  std::vector<NodeId> tv_terms;
  for (const auto& [name, value] : raw) {
    if (!is_frame_track(name) || value.size() < 2) continue;
    const std::size_t rows = name == "noise.band_gains" ? shape.noise.band_gains.size() : 1;
    tv_terms.push_back(total_variation(tape, nodes.params.at(name), rows));
  }
  if (tv_terms.empty()) {
    o.tv = tape.constant(Vec{0.0});
  } else {
    const std::vector<double> ones(tv_terms.size(), 1.0 / static_cast<double>(tv_terms.size()));
    o.tv = weighted_sum(tape, tv_terms, ones);
  }
  const NodeId obj[] = {o.total, o.tv};
  const double ow[] = {1.0, tv_weight};
  o.objective = weighted_sum(tape, obj, ow);
  return o;
}

}  // namespace

void FitConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::kConfig, "learning rate must be > 0");
  require(iterations >= 0, ErrorKind::kConfig, "iterations must be >= 0");
  require(weight_decay >= 0.0, ErrorKind::kConfig, "weight decay must be >= 0");
  require(pct_start > 0.0 && pct_start < 1.0, ErrorKind::kConfig, "pct_start must lie in (0, 1)");
  require(harmonic_weight >= 0.0 && tv_weight >= 0.0, ErrorKind::kConfig,
          "loss weights must be >= 0");
  require(temperature_start > 0.0 && temperature_end > 0.0, ErrorKind::kConfig,
          "temperatures must be > 0");
  require(divergence_factor > 1.0, ErrorKind::kConfig, "divergence factor must exceed 1");
}

double one_cycle_lr(int step, int total, double peak, double pct_start) {
  const double initial = peak / 25.0;
  const double final_lr = initial / 1e4;
  if (total <= 1) return peak;
  const double up_end = std::max(1.0, pct_start * total - 1.0);
  const double last = static_cast<double>(total - 1);
  const double s = std::clamp(static_cast<double>(step), 0.0, last);
  if (s <= up_end) return cosine_anneal(initial, peak, s / up_end);
  const double span = std::max(1.0, last - up_end);
  return cosine_anneal(peak, final_lr, (s - up_end) / span);
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(RawParams& params, const GradientMap& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const auto& g = git->second;
    require(g.size() == p.size(), ErrorKind::kState, "gradient size mismatch for '" + name + "'");
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= lr * weight_decay_ * p[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

FitResult fit(std::span<const double> target, const control::AudioControls& controls,
              const ParamSet& init, const FitConfig& cfg, const SynthConfig& synth,
              const FitCallback& on_iteration) {
  cfg.validate();
  init.validate();
  require(target.size() == controls.size(), ErrorKind::kInvalidInput,
          "target has " + std::to_string(target.size()) + " samples but the controls render " +
              std::to_string(controls.size()));
  const RenderContext ctx(init, controls, synth);
  const MrStftLoss stft(target);
  const HarmonicLoss harm(target, controls.rpm, synth.sample_rate);
  // Constant tracks become one learnable per model frame.
  ParamSet shape = init;
  const auto frames = static_cast<std::size_t>(
      std::ceil(static_cast<double>(std::max<std::size_t>(controls.size(), 1)) / synth.frame_hop()));
  expand_tracks(shape, frames);
  RawParams raw = to_raw(shape);
  RawParams best_raw = raw;
  AdamW opt(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);

  FitResult result;
  for (int it = 0; it <= cfg.iterations; ++it) {
    const double frac = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
    GraphOptions opts;
    opts.mode = cfg.gumbel ? resonator::DelayMode::kStraightThrough : resonator::DelayMode::kInference;
    opts.gumbel_seed = cfg.seed + static_cast<std::uint64_t>(it);
    opts.temperature = cfg.temperature_start +
                       (cfg.temperature_end - cfg.temperature_start) * std::min(frac, 1.0);
    Tape tape;
    const auto nodes = build_render_graph(tape, raw, shape, ctx, opts);
    LossBreakdown bd;
    const auto obj = build_objective(tape, nodes.output, nodes, raw, shape, stft, harm,
                                     cfg.harmonic_weight, cfg.tv_weight, &bd);
    bd.harmonic = tape.scalar(obj.harmonic);
    bd.stft = tape.scalar(obj.stft);
    bd.total = tape.scalar(obj.total);

    TraceRow row;
    row.iter = it;
    row.total = bd.total;
    row.stft = bd.stft;
    row.harmonic = bd.harmonic;
    row.tv = tape.scalar(obj.tv);
    row.lr = cfg.one_cycle ? one_cycle_lr(it, cfg.iterations, cfg.lr, cfg.pct_start) : cfg.lr;
    if (it == cfg.iterations) row.lr = 0.0;

    if (it == 0) {
      result.initial_total = bd.total;
      result.best_total = bd.total;
    }
    // The losses are normalized (silence scores about 1), so a near-perfect
    // start is measured against that scale instead of its own tiny value.
    const double scale = std::max(result.initial_total, 1.0);
    if (!std::isfinite(bd.total) || bd.total > cfg.divergence_factor * scale) {
      std::ostringstream msg;
      msg << "fit diverged at iteration " << it << ": loss " << bd.total << " exceeds "
          << cfg.divergence_factor << " x max(initial loss " << result.initial_total << ", 1)";
      fail(ErrorKind::kDivergence, msg.str());
    }
    if (bd.total < result.best_total) {
      result.best_total = bd.total;
      result.best_iter = it;
      best_raw = raw;
    }
    result.trace.push_back(row);
    result.breakdowns.push_back(std::move(bd));
    if (on_iteration) on_iteration(row);
    if (it == cfg.iterations) break;

    const auto grads = tape.backward(obj.objective);
    opt.step(raw, grads, row.lr);
  }
  result.params = result.best_iter == 0 ? init : from_raw(best_raw, shape);
  return result;
}

std::vector<double> render_differentiable(const ParamSet& params,
                                          const control::AudioControls& controls,
                                          const SynthConfig& synth) {
  const RenderContext ctx(params, controls, synth);
  Tape tape;
  const auto nodes = build_render_graph(tape, to_raw(params), params, ctx);
  return tape.value(nodes.output);
}

LossBreakdown evaluate_loss(std::span<const double> target, const control::AudioControls& controls,
                            const ParamSet& params, const SynthConfig& synth,
                            double harmonic_weight) {
  const auto y = render_differentiable(params, controls, synth);
  require(target.size() == y.size(), ErrorKind::kInvalidInput,
          "target length differs from the rendered length");
  LossBreakdown bd;
  bd.stft = MrStftLoss(target).evaluate(y, nullptr, &bd);
  bd.harmonic = HarmonicLoss(target, controls.rpm, synth.sample_rate)
                    .evaluate(y, nullptr, &bd.harmonic_per_order);
  bd.total = bd.stft + harmonic_weight * bd.harmonic;
  return bd;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iter,total,stft,harmonic,lr\n";
  out << std::setprecision(12);
  for (const auto& r : trace) {
    out << r.iter << ',' << r.total << ',' << r.stft << ',' << r.harmonic << ',' << r.lr << '\n';
  }
}

}  // namespace ptr::diff
