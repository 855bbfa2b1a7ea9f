#include "ptr/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>

#include "ptr/control.hpp"
#include "ptr/diff/graph.hpp"
#include "ptr/diff/loss.hpp"
#include "ptr/engine.hpp"
#include "ptr/error.hpp"
#include "ptr/params.hpp"
#include "ptr/pulse.hpp"
#include "ptr/resonator.hpp"

namespace ptr::diff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSampleRate = 16000.0;
constexpr double kHop = 128.0;

using NodeMap = std::map<std::string, NodeId>;
using LossBuilder = std::function<NodeId(Tape&, const NodeMap&)>;
// Returns a non-empty reason when (name, index) sits on a non-differentiable point.
using ExclusionFn = std::function<std::string(const std::string&, std::size_t, double)>;

struct Problem {
  RawParams params;
  LossBuilder loss;
  // Alternative to `loss` for graphs that register their own parameters.
  std::function<NodeId(Tape&, const RawParams&)> graph;
  std::map<std::string, std::vector<std::size_t>> probes;  // all indices if absent
  ExclusionFn exclude;
};

std::vector<std::size_t> pick(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n <= k) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

NodeId record(const Problem& p, Tape& t, const RawParams& values) {
  if (p.graph) return p.graph(t, values);
  NodeMap ids;
  for (const auto& [name, v] : values) ids[name] = t.parameter(name, v);
  return p.loss(t, ids);
}

double evaluate(const Problem& p, const RawParams& values) {
  Tape t;
  return t.scalar(record(p, t, values));
}

void run(const Problem& p, const GradCheckOptions& opts, GradCheckReport& report) {
  Tape t;
  const auto grads = t.backward(record(p, t, p.params));
  const double h = opts.step;
  for (const auto& [name, v] : p.params) {
    std::vector<std::size_t> idx;
    auto it = p.probes.find(name);
    if (it != p.probes.end()) {
      idx = it->second;
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) idx.push_back(i);
    }
    for (std::size_t i : idx) {
      // Central differences carry O(h^2) truncation error, large where the
      // signal has strong curvature (the bent phase near zero, magnitude
      // kinks in the losses); a mismatch is only reported after refining h.
      GradCheckEntry e;
      e.param = name;
      e.index = i;
      e.analytic = grads.at(name)[i];
      std::string why;
      bool probed = false;
      for (int refine = 0; refine < 3 && !e.ok; ++refine) {
        const double step = h * std::pow(0.1, refine);
        if (p.exclude) {
          why = p.exclude(name, i, step);
          if (!why.empty()) continue;
        }
        RawParams plus = p.params, minus = p.params;
        plus[name][i] += step;
        minus[name][i] -= step;
        const double numeric = (evaluate(p, plus) - evaluate(p, minus)) / (2.0 * step);
        const double abs_error = std::abs(e.analytic - numeric);
        const double scale = std::max(std::abs(e.analytic), std::abs(numeric));
        const double rel_error = scale > 0.0 ? abs_error / scale : 0.0;
        if (!probed || abs_error < e.abs_error) {
          e.numeric = numeric;
          e.abs_error = abs_error;
          e.rel_error = rel_error;
          e.step = step;
        }
        probed = true;
        e.ok = e.abs_error <= opts.abs_tol || e.rel_error <= opts.rel_tol;
      }
      if (!probed) {
        report.excluded.push_back(name + "[" + std::to_string(i) + "]: " + why);
        continue;
      }
      if (e.abs_error > opts.abs_tol) report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.passed = report.passed && e.ok;
      report.entries.push_back(e);
    }
  }
}

std::size_t samples_for(const GradCheckOptions& opts, double fallback_seconds) {
  const double d = opts.duration > 0.0 ? opts.duration : fallback_seconds;
  return static_cast<std::size_t>(std::llround(d * kSampleRate));
}

std::size_t frames_for(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(n) / kHop));
}

// Raw per-frame values whose mapped physical values wander inside [lo, hi].
std::vector<double> raw_track(std::mt19937_64& rng, std::size_t frames, double lo, double hi,
                              const std::function<double(double)>& inverse) {
  std::uniform_real_distribution<double> u(lo, hi);
  const double a = u(rng), b = u(rng);
  std::vector<double> v(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double x = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
    v[f] = inverse(a + (b - a) * x);
  }
  return v;
}

const auto kInvSoftplus = [](double y) { return pulse::softplus_inverse(y); };
const auto kInvAlpha = [](double y) { return pulse::softplus_inverse(y - pulse::kAlphaFloor); };
const auto kInvNu = [](double y) {
  return pulse::logit((y - pulse::kNuFloor) / (1.0 - pulse::kNuFloor));
};

// Timing perturbations that carry a sample across the 2*pi wrap of a
// cylinder phase hit the (tiny) discontinuity of the pulse at phase zero.
std::string wrap_exclusion(std::span<const double> base_phase, double raw_timing, double h,
                           double limit_deg) {
  const double to_phase = kTwoPi / 720.0 * limit_deg;
  const double lo = std::tanh(raw_timing - h) * to_phase;
  const double hi = std::tanh(raw_timing + h) * to_phase;
  for (double b : base_phase) {
    const double a = control::wrap_phase(b + lo);
    if (a + (hi - lo) >= kTwoPi) return "phase wrap inside the finite-difference step";
  }
  return {};
}

std::string clamp_exclusion(double theta1, double theta2, const std::string& field, double h) {
  auto clamped = [](double t1, double t2) {
    const double k1 = std::tanh(t1), k2 = std::tanh(t2);
    const double a2 = std::clamp(k2, -resonator::kA2Limit, resonator::kA2Limit);
    const bool c2 = std::abs(k2) > resonator::kA2Limit;
    const bool c1 = std::abs(k1 * (1.0 - a2)) > 1.0 + a2 - resonator::kTriangleMargin;
    return std::pair{c1, c2};
  };
  const auto base = clamped(theta1, theta2);
  const bool t1 = field == "theta1";
  const auto p = clamped(theta1 + (t1 ? h : 0.0), theta2 + (t1 ? 0.0 : h));
  const auto m = clamped(theta1 - (t1 ? h : 0.0), theta2 - (t1 ? 0.0 : h));
  if (p != base || m != base) return "stability clamp boundary";
  return {};
}

// ---------------------------------------------------------------------------

Problem pulse_problem(std::mt19937_64& rng, const GradCheckOptions& opts, SynthConfig& cfg,
                      std::shared_ptr<void>& keep) {
  const std::size_t n = samples_for(opts, 0.5);
  const std::size_t frames = frames_for(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Data {
    std::vector<double> base, f0, proj;
  };
  auto d = std::make_shared<Data>();
  keep = d;
  const double rpm0 = 900.0 + 4000.0 * u(rng), rpm1 = 900.0 + 4000.0 * u(rng);
  std::vector<double> rpm(n);
  for (std::size_t i = 0; i < n; ++i) rpm[i] = rpm0 + (rpm1 - rpm0) * i / std::max<double>(1, n - 1);
  const auto phase = control::accumulate_phase(rpm, kSampleRate);
  d->f0 = phase.f0;
  const double offset = -kTwoPi * u(rng);
  d->base.resize(n);
  for (std::size_t i = 0; i < n; ++i) d->base[i] = phase.wrapped[i] + offset;
  d->proj = normal_vector(rng, n, 1.0);

  Problem p;
  p.params["lambda"] = raw_track(rng, frames, 0.05, 1.0, kInvSoftplus);
  p.params["alpha"] = raw_track(rng, frames, 2.0, 20.0, kInvAlpha);
  p.params["beta"] = raw_track(rng, frames, 0.2, 3.0, kInvSoftplus);
  p.params["nu"] = raw_track(rng, frames, 0.3, 0.95, kInvNu);
  p.params["gain"] = raw_track(rng, frames, 0.1, 1.0, kInvSoftplus);
  p.params["timing"] = {std::atanh(0.9 * (2.0 * u(rng) - 1.0))};
  for (const char* k : {"lambda", "alpha", "beta", "nu", "gain"}) p.probes[k] = pick(rng, frames, 4);
  const int harmonics = cfg.harmonics;
  const double nyq = cfg.nyquist();
  p.loss = [d, harmonics, nyq, n](Tape& t, const NodeMap& ids) {
    const NodeId lambda = upsample(t, softplus(t, ids.at("lambda")), kHop, n);
    const NodeId alpha = upsample(t, add_scalar(t, softplus(t, ids.at("alpha")), pulse::kAlphaFloor), kHop, n);
    const NodeId beta = upsample(t, softplus(t, ids.at("beta")), kHop, n);
    const NodeId nu = upsample(t, sigmoid_range(t, ids.at("nu"), pulse::kNuFloor, 1.0), kHop, n);
    const NodeId gain = upsample(t, softplus(t, ids.at("gain")), kHop, n);
    const NodeId timing = scale(t, tanh(t, ids.at("timing")), 40.0 * kTwoPi / 720.0);
    const NodeId y = pulse_node(t, d->base, d->f0, lambda, alpha, beta, nu, gain, timing, harmonics, nyq);
    return dot_const(t, y, d->proj);
  };
  const double raw_timing = p.params["timing"][0];
  p.exclude = [d, raw_timing](const std::string& name, std::size_t, double h) {
    return name == "timing" ? wrap_exclusion(d->base, raw_timing, h, 40.0) : std::string();
  };
  return p;
}

Problem noise_problem(std::mt19937_64& rng, const GradCheckOptions& opts, SynthConfig& cfg,
                      std::shared_ptr<void>& keep) {
  const std::size_t n = samples_for(opts, 0.5);
  const std::size_t frames = frames_for(n);
  const std::size_t bands = static_cast<std::size_t>(cfg.noise_bands);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Data {
    std::vector<double> pulse, bands, g_thr, g_dfco, phase, proj;
  };
  auto d = std::make_shared<Data>();
  keep = d;
  d->pulse = normal_vector(rng, n, 0.3);
  engine::BandNoiseSource src(static_cast<int>(bands), cfg.noise_low_hz, kSampleRate, cfg.noise_block,
                              rng(), 0);
  d->bands = src.render(0, n);
  std::vector<double> torque(n), rpm(n, 1000.0 + 3000.0 * u(rng));
  const double w = 1.0 + 4.0 * u(rng);
  for (std::size_t i = 0; i < n; ++i) torque[i] = std::sin(kTwoPi * w * i / kSampleRate);
  d->g_thr = control::throttle_gate(torque, cfg.throttle_epsilon);
  d->g_dfco = control::dfco_gate(torque, cfg.dfco_epsilon);
  d->phase = control::accumulate_phase(rpm, kSampleRate).wrapped;
  d->proj = normal_vector(rng, n, 1.0);

  Problem p;
  std::vector<double> gains;
  for (std::size_t b = 0; b < bands; ++b) {
    const auto tr = raw_track(rng, frames, 0.01, 0.2, kInvSoftplus);
    gains.insert(gains.end(), tr.begin(), tr.end());
  }
  p.params["band_gains"] = gains;
  p.params["turb_depth"] = {pulse::softplus_inverse(0.05 + 0.6 * u(rng))};
  p.params["intake_alpha"] = {kInvAlpha(1.0 + 8.0 * u(rng))};
  p.params["intake_beta"] = {pulse::softplus_inverse(0.3 + 3.0 * u(rng))};
  p.probes["band_gains"] = pick(rng, gains.size(), 8);
  p.loss = [d, n, bands](Tape& t, const NodeMap& ids) {
    const NodeId pulse = t.constant(d->pulse);
    const NodeId eta = noise_node(t, softplus(t, ids.at("band_gains")), d->bands, bands, n, kHop);
    const NodeId y = augment_node(
        t, pulse, eta, softplus(t, ids.at("turb_depth")),
        add_scalar(t, softplus(t, ids.at("intake_alpha")), pulse::kAlphaFloor),
        softplus(t, ids.at("intake_beta")), d->g_thr, d->g_dfco, d->phase);
    return dot_const(t, y, d->proj);
  };
  return p;
}

Problem allpole_problem(std::mt19937_64& rng, const GradCheckOptions& opts, std::shared_ptr<void>& keep) {
  const std::size_t n = opts.duration > 0.0 ? samples_for(opts, 0.0) : 4096;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int dmin = 16, dmax = 64;
  const int delay = dmin + static_cast<int>(u(rng) * (dmax - dmin));
  const double total = 0.2 + 0.7 * u(rng);
  const double split = 2.0 * u(rng) - 1.0;
  Problem p;
  p.params["coeffs"] = {total * split, total * (1.0 - std::abs(split)) * (u(rng) < 0.5 ? -1.0 : 1.0)};
  p.params["x"] = normal_vector(rng, n, 0.3);
  p.probes["x"] = pick(rng, n, 6);
  const std::size_t cand = static_cast<std::size_t>(dmax - dmin + 1);
  auto onehot = std::make_shared<std::vector<double>>(cand, 0.0);
  (*onehot)[static_cast<std::size_t>(delay - dmin)] = 1.0;
  keep = onehot;
  p.loss = [onehot, n](Tape& t, const NodeMap& ids) {
    const NodeId w = t.constant(*onehot);
    const NodeId y = resonator_node(t, ids.at("x"), ids.at("coeffs"), w, {}, {}, dmin, dmax);
    return scale(t, sum(t, square(t, y)), 1.0 / static_cast<double>(n));
  };
  return p;
}

Problem resonator_problem(std::mt19937_64& rng, const GradCheckOptions& opts, bool straight_through,
                          std::shared_ptr<void>& keep) {
  const std::size_t n = samples_for(opts, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int dmin = 16, dmax = 400;
  const std::size_t cand = static_cast<std::size_t>(dmax - dmin + 1);
  struct Data {
    std::vector<double> x, proj, onehot, reference;
  };
  auto d = std::make_shared<Data>();
  keep = d;
  d->x = normal_vector(rng, n, 0.3);
  d->proj = normal_vector(rng, n, 1.0);
  Problem p;
  p.params["theta1"] = {3.0 * u(rng) - 1.5};
  p.params["theta2"] = {3.0 * u(rng) - 1.5};
  p.params["gain_logit"] = {4.0 * u(rng) - 2.0};
  auto logits = normal_vector(rng, cand, 1.0);
  const auto peak = static_cast<std::size_t>(u(rng) * (cand - 1));
  logits[peak] += 4.0;
  p.params["delay_logits"] = logits;
  const double temperature = 0.5 + 1.5 * u(rng);
  auto probes = pick(rng, cand, 4);
  probes.push_back(peak);
  if (peak + 1 < cand) probes.push_back(peak + 1);
  std::sort(probes.begin(), probes.end());
  probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
  p.probes["delay_logits"] = probes;
  if (straight_through) {
    const auto sel = resonator::select_delay(logits, temperature, false, 0);
    d->onehot.assign(cand, 0.0);
    d->onehot[static_cast<std::size_t>(sel.index)] = 1.0;
    d->reference = sel.soft;
  }
  p.loss = [d, temperature](Tape& t, const NodeMap& ids) {
    const NodeId coeffs = effective_coeff_node(t, ids.at("theta1"), ids.at("theta2"), ids.at("gain_logit"));
    const NodeId soft = soft_weights_node(t, ids.at("delay_logits"), {}, temperature);
    const NodeId y = resonator_node(t, t.constant(d->x), coeffs, soft, d->onehot, d->reference, dmin, dmax);
    return dot_const(t, y, d->proj);
  };
  const double t1 = p.params["theta1"][0], t2 = p.params["theta2"][0];
  p.exclude = [t1, t2](const std::string& name, std::size_t, double h) {
    return name == "theta1" || name == "theta2" ? clamp_exclusion(t1, t2, name, h) : std::string();
  };
  return p;
}

Problem loss_problem(std::mt19937_64& rng, const GradCheckOptions& opts, SynthConfig&,
                     std::shared_ptr<void>& keep) {
  const std::size_t n = samples_for(opts, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Data {
    std::vector<double> rpm;
    std::unique_ptr<MrStftLoss> stft;
    std::unique_ptr<HarmonicLoss> harm;
  };
  auto d = std::make_shared<Data>();
  keep = d;
  const double rpm = 1200.0 + 3000.0 * u(rng);
  d->rpm.assign(n, rpm);
  std::vector<double> target(n);
  const double f0 = rpm / 120.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 1; k <= 8; ++k) target[i] += std::sin(kTwoPi * k * f0 * i / kSampleRate + k) / k;
  }
  const auto noise = normal_vector(rng, n, 0.05);
  for (std::size_t i = 0; i < n; ++i) target[i] += noise[i];
  d->stft = std::make_unique<MrStftLoss>(target);
  d->harm = std::make_unique<HarmonicLoss>(target, d->rpm, kSampleRate);
  Problem p;
  auto y = target;
  const auto pert = normal_vector(rng, n, 0.2);
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.7 * y[i] + pert[i];
  p.params["y_hat"] = y;
  p.probes["y_hat"] = pick(rng, n, 12);
  p.loss = [d](Tape& t, const NodeMap& ids) {
    const NodeId parts[] = {mrstft_node(t, ids.at("y_hat"), *d->stft, nullptr),
                            harmonic_node(t, ids.at("y_hat"), *d->harm, nullptr)};
    const double w[] = {1.0, 1.0};
    return weighted_sum(t, parts, w);
  };
  return p;
}

Problem full_problem(std::mt19937_64& rng, const GradCheckOptions& opts, SynthConfig& cfg,
                     std::shared_ptr<void>& keep) {
  const std::size_t n = samples_for(opts, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Data {
    std::unique_ptr<RenderContext> ctx;
    ParamSet shape;
    std::vector<double> proj;
    std::map<std::string, std::vector<double>> reference;
    std::uint64_t seed = 0;
    double temperature = 1.0;
  };
  auto d = std::make_shared<Data>();
  keep = d;
  d->shape = default_params(cfg, frames_for(n));
  d->shape.noise.seed = rng();
  control::AudioControls controls;
  controls.sample_rate = kSampleRate;
  controls.rpm.resize(n);
  controls.torque.resize(n);
  const double r0 = 1000.0 + 2000.0 * u(rng), r1 = 1000.0 + 3000.0 * u(rng);
  const double tw = 1.0 + 3.0 * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / std::max<double>(1, n - 1);
    controls.rpm[i] = r0 + (r1 - r0) * x;
    controls.torque[i] = std::sin(kTwoPi * tw * x + 0.3);
  }
  d->ctx = std::make_unique<RenderContext>(d->shape, controls, cfg);
  d->proj = normal_vector(rng, n, 1.0);
  d->seed = rng() % 1000;
  d->temperature = 0.5 + 1.5 * u(rng);

  Problem p;
  p.params = to_raw(d->shape);
  std::normal_distribution<double> jitter(0.0, 0.2);
  for (auto& [name, v] : p.params) {
    if (name.find("delay_logits") != std::string::npos) continue;
    for (double& x : v) x += jitter(rng);
  }
  // Straight-through reference weights are held fixed at the base point.
  const std::pair<const char*, std::uint64_t> res[] = {{"left", 0}, {"right", 1}, {"shared", 2}};
  for (const auto& [name, salt] : res) {
    const auto& logits = p.params["res." + std::string(name) + ".delay_logits"];
    d->reference[name] = resonator::select_delay(logits, d->temperature, true, d->seed * 3 + salt).soft;
    const auto sel = resonator::select_delay(logits, d->temperature, true, d->seed * 3 + salt);
    auto probes = pick(rng, logits.size(), 2);
    probes.push_back(static_cast<std::size_t>(sel.index));
    if (sel.index > 0) probes.push_back(static_cast<std::size_t>(sel.index - 1));
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    p.probes["res." + std::string(name) + ".delay_logits"] = probes;
  }
  for (const auto& [name, v] : p.params) {
    if (!p.probes.count(name)) p.probes[name] = pick(rng, v.size(), 3);
  }
  p.graph = [d](Tape& t, const RawParams& raw) {
    GraphOptions o;
    o.mode = resonator::DelayMode::kStraightThrough;
    o.gumbel_seed = d->seed;
    o.temperature = d->temperature;
    o.soft_reference = &d->reference;
    const auto nodes = build_render_graph(t, raw, d->shape, *d->ctx, o);
    return dot_const(t, nodes.output, d->proj);
  };
  const double limit = d->shape.engine.timing_limit_deg;
  p.exclude = [d, limit, raw = p.params](const std::string& name, std::size_t, double h) {
    const auto dot = name.rfind('.');
    const std::string field = dot == std::string::npos ? name : name.substr(dot + 1);
    if (field == "timing") {
      const int c = std::stoi(name.substr(3, dot - 3)) - 1;
      std::vector<double> base(d->ctx->wrapped_phase);
      for (double& b : base) b += d->ctx->offsets[static_cast<std::size_t>(c)];
      return wrap_exclusion(base, raw.at(name)[0], h, limit);
    }
    if (field == "theta1" || field == "theta2") {
      const std::string prefix = name.substr(0, dot + 1);
      return clamp_exclusion(raw.at(prefix + "theta1")[0], raw.at(prefix + "theta2")[0], field, h);
    }
    return std::string();
  };
  return p;
}

}  // namespace

std::vector<GradCheckEntry> GradCheckReport::worst(std::size_t n) const {
  auto e = entries;
  std::sort(e.begin(), e.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) { return a.rel_error > b.rel_error; });
  if (e.size() > n) e.resize(n);
  return e;
}

std::vector<std::string> grad_check_scopes() {
  return {"pulse", "noise", "allpole", "resonator", "loss", "full"};
}

GradCheckReport grad_check(const std::string& scope, int trials, std::uint64_t seed,
                           const GradCheckOptions& opts) {
  const auto scopes = grad_check_scopes();
  require(std::find(scopes.begin(), scopes.end(), scope) != scopes.end(), ErrorKind::kInvalidInput,
          "unknown gradient-check scope '" + scope + "'");
  GradCheckReport report;
  report.scope = scope;
  SynthConfig cfg;
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    std::shared_ptr<void> keep;
    if (scope == "pulse") run(pulse_problem(rng, opts, cfg, keep), opts, report);
    else if (scope == "noise") run(noise_problem(rng, opts, cfg, keep), opts, report);
    else if (scope == "allpole") run(allpole_problem(rng, opts, keep), opts, report);
    else if (scope == "resonator") {
      run(resonator_problem(rng, opts, false, keep), opts, report);
      run(resonator_problem(rng, opts, true, keep), opts, report);
    } else if (scope == "loss") run(loss_problem(rng, opts, cfg, keep), opts, report);
    else run(full_problem(rng, opts, cfg, keep), opts, report);
  }
  return report;
}

}  // namespace ptr::diff
