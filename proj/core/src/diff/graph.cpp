#include "ptr/diff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "ptr/error.hpp"
#include "ptr/pulse.hpp"

namespace ptr::diff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> one_hot(std::size_t n, std::size_t index) {
  std::vector<double> v(n, 0.0);
  v[index] = 1.0;
  return v;
}

}  // namespace

RenderContext::RenderContext(const ParamSet& params, const control::AudioControls& controls,
                             const SynthConfig& config)
    : length(controls.size()), hop(config.frame_hop()), cfg(config) {
  config.validate();
  require(controls.rpm.size() == controls.torque.size(), ErrorKind::kInvalidInput,
          "rpm and torque lengths differ");
  require(params.sample_rate == config.sample_rate && params.model_rate == config.model_rate,
          ErrorKind::kConfig, "parameter file rates do not match the synthesis configuration");
  rpm = controls.rpm;
  const auto phase = control::accumulate_phase(controls.rpm, config.sample_rate);
  wrapped_phase = phase.wrapped;
  f0 = phase.f0;
  g_thr = control::throttle_gate(controls.torque, config.throttle_epsilon);
  g_dfco = control::dfco_gate(controls.torque, config.dfco_epsilon);
  const int bands = static_cast<int>(params.noise.band_gains.size());
  engine::BandNoiseSource left(bands, config.noise_low_hz, config.sample_rate, config.noise_block,
                               params.noise.seed, 0);
  engine::BandNoiseSource right(bands, config.noise_low_hz, config.sample_rate, config.noise_block,
                                params.noise.seed, 1);
  band_left = left.render(0, length);
  band_right = right.render(0, length);
  offsets = engine::firing_offsets(params.engine);
}

NodeId pulse_node(Tape& t, std::span<const double> base_phase, std::span<const double> f0,
                  NodeId lambda, NodeId alpha, NodeId beta, NodeId nu, NodeId gain, NodeId timing,
                  int harmonics, double nyquist) {
  const std::size_t n = base_phase.size();
  const Vec& l = t.value(lambda);
  const Vec& a = t.value(alpha);
  const Vec& b = t.value(beta);
  const Vec& v = t.value(nu);
  const Vec& c = t.value(gain);
  require(f0.size() == n && l.size() == n && a.size() == n && b.size() == n && v.size() == n &&
              c.size() == n,
          ErrorKind::kInvalidInput, "pulse_node: series length mismatch");
  const double shift = t.scalar(timing);
  Vec out(n);
  // Partials in the input order lambda, alpha, beta, nu, gain, phi.
  auto partial = std::make_shared<std::array<Vec, 6>>();
  for (auto& p : *partial) p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const pulse::PulseInputs in{control::wrap_phase(base_phase[i] + shift), l[i], a[i], b[i], v[i],
                                c[i], f0[i]};
    const auto s = pulse::pulse_sample<true>(in, harmonics, nyquist);
    out[i] = s.value;
    (*partial)[0][i] = s.d_lambda;
    (*partial)[1][i] = s.d_alpha;
    (*partial)[2][i] = s.d_beta;
    (*partial)[3][i] = s.d_nu;
    (*partial)[4][i] = s.d_gain;
    (*partial)[5][i] = s.d_phi;
  }
  return t.record("pulse", {lambda, alpha, beta, nu, gain, timing}, std::move(out),
                  [partial](const Vec& g, std::span<Vec* const> in) {
                    for (std::size_t k = 0; k < 5; ++k) {
                      if (!in[k]) continue;
                      const Vec& d = (*partial)[k];
                      for (std::size_t i = 0; i < g.size(); ++i) (*in[k])[i] += g[i] * d[i];
                    }
                    if (in[5]) {
                      const Vec& d = (*partial)[5];
                      double s = 0.0;
                      for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * d[i];
                      (*in[5])[0] += s;
                    }
                  });
}

NodeId noise_node(Tape& t, NodeId gains, std::span<const double> bands, std::size_t bands_count,
                  std::size_t length, double hop) {
  const Vec& gv = t.value(gains);
  require(bands_count > 0 && gv.size() % bands_count == 0, ErrorKind::kInvalidInput,
          "noise_node: gain vector does not split into bands");
  require(bands.size() >= bands_count * length, ErrorKind::kInvalidInput,
          "noise_node: band signals too short");
  const std::size_t frames = gv.size() / bands_count;
  Vec out(length, 0.0);
  for (std::size_t b = 0; b < bands_count; ++b) {
    const auto g = control::upsample_frames(std::span(gv).subspan(b * frames, frames), hop, length);
    const double* src = bands.data() + b * length;
    for (std::size_t i = 0; i < length; ++i) out[i] += g[i] * src[i];
  }
  return t.record("noise", {gains}, std::move(out),
                  [bands, bands_count, length, frames, hop](const Vec& g, std::span<Vec* const> in) {
                    if (!in[0]) return;
                    Vec ga(length);
                    for (std::size_t b = 0; b < bands_count; ++b) {
                      const double* src = bands.data() + b * length;
                      for (std::size_t i = 0; i < length; ++i) ga[i] = g[i] * src[i];
                      control::upsample_frames_adjoint(
                          ga, hop, std::span(*in[0]).subspan(b * frames, frames));
                    }
                  });
}

NodeId augment_node(Tape& t, NodeId pulse, NodeId eta, NodeId turb, NodeId intake_alpha,
                    NodeId intake_beta, std::span<const double> g_thr,
                    std::span<const double> g_dfco, std::span<const double> engine_phase) {
  const Vec& p = t.value(pulse);
  const Vec& e = t.value(eta);
  const std::size_t n = p.size();
  require(e.size() == n && g_thr.size() == n && g_dfco.size() == n && engine_phase.size() == n,
          ErrorKind::kInvalidInput, "augment_node: series length mismatch");
  const double td = t.scalar(turb);
  const double ia = t.scalar(intake_alpha);
  const double ib = t.scalar(intake_beta);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double env = pulse::pressure_envelope(engine_phase[i], ia, ib);
    out[i] = engine::augment_sample(p[i], e[i], g_thr[i], g_dfco[i], env, td);
  }
  return t.record(
      "augment", {pulse, eta, turb, intake_alpha, intake_beta}, std::move(out),
      [p, e, g_thr, g_dfco, engine_phase, td, ia, ib](const Vec& g, std::span<Vec* const> in) {
        double gt = 0.0, ga = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double phi = engine_phase[i];
          const double ea = std::exp(-ia * phi);
          const double eb = std::exp(-ib * phi);
          const double env = (1.0 - ea) * eb;
          if (in[0]) (*in[0])[i] += g[i] * (1.0 + td * g_thr[i] * e[i]);
          if (in[1]) (*in[1])[i] += g[i] * (p[i] * td * g_thr[i] + env * g_thr[i] + g_dfco[i]);
          gt += g[i] * p[i] * g_thr[i] * e[i];
          const double genv = g[i] * e[i] * g_thr[i];
          ga += genv * phi * ea * eb;
          gb -= genv * phi * env;
        }
        if (in[2]) (*in[2])[0] += gt;
        if (in[3]) (*in[3])[0] += ga;
        if (in[4]) (*in[4])[0] += gb;
      });
}

NodeId effective_coeff_node(Tape& t, NodeId theta1, NodeId theta2, NodeId gain_logit) {
  const auto d = resonator::reflection_to_direct(t.scalar(theta1), t.scalar(theta2));
  const auto e = resonator::integrate_gain(d.a1, d.a2, t.scalar(gain_logit));
  return t.record("effective_coeffs", {theta1, theta2, gain_logit}, Vec{e.alpha, e.beta},
                  [d, e](const Vec& g, std::span<Vec* const> in) {
                    if (in[0]) (*in[0])[0] += g[0] * d.da1_dtheta1 * e.scale;
                    if (in[1]) {
                      (*in[1])[0] += g[0] * d.da1_dtheta2 * e.scale + g[1] * d.da2_dtheta2 * e.scale;
                    }
                    if (in[2]) (*in[2])[0] += (g[0] * d.a1 + g[1] * d.a2) * e.dscale_dgain;
                  });
}

NodeId soft_weights_node(Tape& t, NodeId logits, std::span<const double> noise, double temperature) {
  const Vec& l = t.value(logits);
  require(noise.empty() || noise.size() == l.size(), ErrorKind::kInvalidInput,
          "soft_weights_node: noise length mismatch");
  require(temperature > 0.0, ErrorKind::kParameterRange, "temperature must be > 0");
  Vec z(l.size());
  for (std::size_t j = 0; j < l.size(); ++j) z[j] = (l[j] + (noise.empty() ? 0.0 : noise[j])) / temperature;
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) total += v = std::exp(v - m);
  for (double& v : z) v /= total;
  Vec w = z;
  return t.record("soft_weights", {logits}, std::move(z),
                  [w, temperature](const Vec& g, std::span<Vec* const> in) {
                    if (!in[0]) return;
                    const auto gl = resonator::softmax_backward(w, g, temperature);
                    for (std::size_t j = 0; j < gl.size(); ++j) (*in[0])[j] += gl[j];
                  });
}

NodeId resonator_node(Tape& t, NodeId x, NodeId coeffs, NodeId soft, std::vector<double> onehot,
                      std::vector<double> reference, int delay_min, int delay_max) {
  const Vec& xv = t.value(x);
  const Vec& cv = t.value(coeffs);
  const Vec& w = t.value(soft);
  const std::size_t cand = static_cast<std::size_t>(delay_max - delay_min + 1);
  require(cv.size() == 2 && w.size() == cand, ErrorKind::kInvalidInput,
          "resonator_node: coefficient or weight size mismatch");
  Vec sel(cand);
  if (onehot.empty()) {
    sel = w;
  } else {
    require(onehot.size() == cand && reference.size() == cand, ErrorKind::kInvalidInput,
            "resonator_node: selection size mismatch");
    // Straight-through: the forward value is the one-hot, the gradient flows through w.
    for (std::size_t j = 0; j < cand; ++j) sel[j] = onehot[j] + (w[j] - reference[j]);
  }
  const double alpha = cv[0], beta = cv[1];
  const auto a = resonator::build_mixture_coeffs(sel, alpha, beta, delay_min, delay_max);
  const double rho = a.loop_gain();
  require(rho < resonator::kMaxLoopGain, ErrorKind::kUnstableFilter,
          "resonator loop gain " + std::to_string(rho) + " reaches the stability limit");
  // Full-length response: no truncation point that could move under a
  // parameter perturbation.
  auto h = std::make_shared<Vec>(resonator::impulse_response(a, xv.size(), 0.0));
  Vec y = resonator::convolve_response(xv, *h, std::max<std::size_t>(xv.size(), 1));
  auto saved_y = std::make_shared<Vec>(y);
  const std::size_t coeff_len = a.a.size();
  return t.record(
      "resonator", {x, coeffs, soft}, std::move(y),
      [xv, h, saved_y, sel, alpha, beta, delay_min, coeff_len](const Vec& g,
                                                              std::span<Vec* const> in) {
        const auto gr = resonator::allpole_backward(xv, *saved_y, *h, g, coeff_len);
        if (in[0]) {
          for (std::size_t i = 0; i < gr.x.size(); ++i) (*in[0])[i] += gr.x[i];
        }
        const std::size_t base = static_cast<std::size_t>(delay_min);
        if (in[1]) {
          double ga = 0.0, gb = 0.0;
          for (std::size_t j = 0; j < sel.size(); ++j) {
            ga -= sel[j] * gr.a[base + j];
            gb -= sel[j] * gr.a[base + j + 1];
          }
          (*in[1])[0] += ga;
          (*in[1])[1] += gb;
        }
        if (in[2]) {
          for (std::size_t j = 0; j < sel.size(); ++j) {
            (*in[2])[j] += -alpha * gr.a[base + j] - beta * gr.a[base + j + 1];
          }
        }
      });
}

GraphNodes build_render_graph(Tape& tape, const RawParams& raw, const ParamSet& shape,
                              const RenderContext& ctx, const GraphOptions& opts) {
  GraphNodes nodes;
  for (const auto& [name, value] : raw) nodes.params[name] = tape.parameter(name, value);
  auto p = [&](const std::string& name) {
    auto it = nodes.params.find(name);
    require(it != nodes.params.end(), ErrorKind::kInvalidInput, "raw parameter '" + name + "' missing");
    return it->second;
  };
  const std::size_t n = ctx.length;
  const double hop = ctx.hop;
  const auto& cfg = ctx.cfg;
  const NodeId gthr = tape.constant(ctx.g_thr);

  NodeId bank_l, bank_r;
  std::vector<double> base(n);
  for (int c = 0; c < engine::kCylinders; ++c) {
    const std::string pre = "cyl" + std::to_string(c + 1) + ".";
    const NodeId lambda = upsample(tape, softplus(tape, p(pre + "lambda")), hop, n);
    const NodeId alpha =
        upsample(tape, add_scalar(tape, softplus(tape, p(pre + "alpha")), pulse::kAlphaFloor), hop, n);
    const NodeId beta = upsample(tape, softplus(tape, p(pre + "beta")), hop, n);
    const NodeId nu = upsample(tape, sigmoid_range(tape, p(pre + "nu"), pulse::kNuFloor, 1.0), hop, n);
    const NodeId gain = upsample(tape, softplus(tape, p(pre + "gain")), hop, n);
    const double deg_to_phase = kTwoPi / shape.engine.cycle_degrees;
    const NodeId timing = scale(tape, tanh(tape, p(pre + "timing")),
                                shape.engine.timing_limit_deg * deg_to_phase);
    for (std::size_t i = 0; i < n; ++i) base[i] = ctx.wrapped_phase[i] + ctx.offsets[c];
    NodeId pulse = pulse_node(tape, base, ctx.f0, lambda, alpha, beta, nu, gain, timing,
                              cfg.harmonics, cfg.nyquist());
    if (cfg.pulse_throttle_gating) pulse = mul(tape, pulse, gthr);
    NodeId& bank = shape.engine.bank_map[c] == engine::Bank::kLeft ? bank_l : bank_r;
    bank = bank.valid() ? add(tape, bank, pulse) : pulse;
  }
  require(bank_l.valid() && bank_r.valid(), ErrorKind::kConfig, "each bank needs a cylinder");
  nodes.bank_left = bank_l;
  nodes.bank_right = bank_r;

  const std::size_t bands = shape.noise.band_gains.size();
  const NodeId gains = softplus(tape, p("noise.band_gains"));
  const NodeId eta_l = noise_node(tape, gains, ctx.band_left, bands, n, hop);
  const NodeId eta_r = noise_node(tape, gains, ctx.band_right, bands, n, hop);
  const NodeId turb = softplus(tape, p("noise.turb_depth"));
  const NodeId ia = add_scalar(tape, softplus(tape, p("noise.intake_alpha")), pulse::kAlphaFloor);
  const NodeId ib = softplus(tape, p("noise.intake_beta"));
  const NodeId ex_l = augment_node(tape, bank_l, eta_l, turb, ia, ib, ctx.g_thr, ctx.g_dfco, ctx.wrapped_phase);
  const NodeId ex_r = augment_node(tape, bank_r, eta_r, turb, ia, ib, ctx.g_thr, ctx.g_dfco, ctx.wrapped_phase);

  auto resonate = [&](const char* name, NodeId x, const resonator::ResonatorParams& rp,
                      std::uint64_t salt) {
    const std::string pre = std::string("res.") + name + ".";
    const NodeId coeffs = effective_coeff_node(tape, p(pre + "theta1"), p(pre + "theta2"),
                                               p(pre + "gain_logit"));
    const NodeId logits = p(pre + "delay_logits");
    const double temp = opts.temperature > 0.0 ? opts.temperature : rp.temperature;
    std::vector<double> noise;
    if (opts.mode == resonator::DelayMode::kStraightThrough) {
      noise = resonator::gumbel_noise(opts.gumbel_seed * 3 + salt, tape.value(logits).size());
    }
    const NodeId soft = soft_weights_node(tape, logits, noise, temp);
    std::vector<double> onehot, reference;
    int delay = 0;
    if (opts.mode != resonator::DelayMode::kSoft) {
      std::vector<double> z = tape.value(logits);
      for (std::size_t j = 0; j < noise.size(); ++j) z[j] += noise[j];
      const auto idx = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      onehot = one_hot(z.size(), idx);
      delay = rp.delay_min + static_cast<int>(idx);
      reference = tape.value(soft);
      if (opts.soft_reference) {
        auto it = opts.soft_reference->find(name);
        if (it != opts.soft_reference->end()) reference = it->second;
      }
    }
    nodes.selected_delay[name] = delay;
    return resonator_node(tape, x, coeffs, soft, std::move(onehot), std::move(reference),
                          rp.delay_min, rp.delay_max);
  };
  const NodeId y_l = resonate("left", ex_l, shape.resonators.left, 0);
  const NodeId y_r = resonate("right", ex_r, shape.resonators.right, 1);
  nodes.output = resonate("shared", add(tape, y_l, y_r), shape.resonators.shared, 2);
  return nodes;
}

}  // namespace ptr::diff
