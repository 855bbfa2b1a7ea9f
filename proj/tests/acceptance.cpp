// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion holds. Measurements go through the oracles in oracles.hpp
// wherever the library would otherwise be checking itself.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ptr/diff/fit.hpp"
#include "ptr/diff/gradcheck.hpp"
#include "ptr/diff/loss.hpp"
#include "ptr/params.hpp"
#include "ptr/resonator.hpp"
#include "ptr/synth.hpp"
#include "ptr/wav.hpp"

using namespace ptr;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double db(double ratio) { return 10.0 * std::log10(ratio); }

control::AudioControls constant_controls(double seconds, double rpm, double torque, double fs) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
  control::AudioControls c;
  c.rpm.assign(n, rpm);
  c.torque.assign(n, torque);
  c.sample_rate = fs;
  return c;
}

control::AudioControls ramp_controls(double seconds, double rpm0, double rpm1, double torque,
                                     const SynthConfig& cfg) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * 1000.0)) + 1;
  std::vector<double> rpm(n), tq(n, torque);
  for (std::size_t i = 0; i < n; ++i) rpm[i] = rpm0 + (rpm1 - rpm0) * static_cast<double>(i) / (n - 1);
  return control::to_audio_rate(control::make_trajectory(rpm, tq, 1000.0), cfg.sample_rate);
}

void silence_noise(ParamSet& p) {
  for (auto& g : p.noise.band_gains) std::fill(g.begin(), g.end(), 0.0);
}

// ---------------------------------------------------------------------------

Outcome filter_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> theta(-3.0, 3.0), gain(-4.0, 4.0), unit(-1.0, 1.0);
  std::uniform_int_distribution<int> delay(16, 400);
  double worst = 0.0, worst_oracle = 0.0;
  int done = 0;
  while (done < 100) {
    const auto d = resonator::reflection_to_direct(theta(rng), theta(rng));
    const auto e = resonator::integrate_gain(d.a1, d.a2, gain(rng));
    const auto coeffs = resonator::build_coeff_vector(delay(rng), e.alpha, e.beta, 16, 400);
    if (coeffs.loop_gain() >= resonator::kMaxLoopGain) continue;  // rejected by allpole_apply
    std::vector<double> x(4096);
    double peak = 0.0;
    for (double& v : x) peak = std::max(peak, std::abs(v = unit(rng)));
    for (double& v : x) v /= peak;
    const auto fast = resonator::allpole_apply(x, coeffs);
    const auto ref = resonator::ks_recursive(x, coeffs);
    const auto oracle = test::recursive_filter(x, coeffs.a);
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(fast[i] - ref[i]));
      worst_oracle = std::max(worst_oracle, std::abs(fast[i] - oracle[i]));
    }
    ++done;
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-5 && worst_oracle < 1e-5 && elapsed < 30.0,
          "max |allpole - ks_recursive| " + num(worst) + ", vs long-double recursion " +
              num(worst_oracle) + " (tol 1e-5); " + num(elapsed, 3) + " s (limit 30 s)"};
}

// Largest positive root of r^P = sum |a_i| r^(P-i): every pole lies inside it.
double cauchy_radius(const std::vector<double>& a) {
  auto g = [&](double r) {
    double s = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (a[i] != 0.0) s += std::abs(a[i]) * std::pow(r, -static_cast<double>(i));
    }
    return s;
  };
  double lo = 0.0, hi = 2.0;
  while (g(hi) > 1.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 1.0 ? lo : hi) = mid;
  }
  return hi;
}

Outcome stability_sweep() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> theta(-8.0, 8.0), gain(-12.0, 12.0);
  std::normal_distribution<double> logit(0.0, 2.0);
  std::uniform_int_distribution<int> delay(16, 400);
  constexpr int kDraws = 10000;
  constexpr int kEigenEvery = 50;  // companion eigenvalues are O(L^3); sample them
  int failures = 0, eigen_checked = 0;
  double worst_quad = 0.0, worst_cauchy = 0.0, worst_eigen = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    resonator::ResonatorParams p;
    p.theta1 = theta(rng);
    p.theta2 = theta(rng);
    p.gain_logit = gain(rng);
    p.delay_logits.resize(p.candidates());
    for (double& l : p.delay_logits) l = logit(rng);
    // Alternate between hard selections and dense soft mixtures.
    const auto mode = i % 2 ? resonator::DelayMode::kSoft : resonator::DelayMode::kInference;
    if (mode == resonator::DelayMode::kInference) {
      p.delay_logits = resonator::ResonatorParams::peaked_logits(delay(rng), 16, 400);
    }
    const auto r = resonator::resolve(p, mode, static_cast<std::uint64_t>(i));
    const double quad = std::max(test::companion_pole_radius(std::vector<double>{1.0, r.direct.a1, r.direct.a2}),
                                 test::companion_pole_radius(std::vector<double>{1.0, r.eff.alpha, r.eff.beta}));
    const double cauchy = cauchy_radius(r.coeffs.a);
    bool ok = quad < 1.0 && cauchy < 1.0;
    if (i % kEigenEvery == 0) {
      const double eig = test::companion_pole_radius(r.coeffs.a);
      worst_eigen = std::max(worst_eigen, eig);
      ok = ok && eig < 1.0 && eig <= cauchy + 1e-9;
      ++eigen_checked;
    }
    worst_quad = std::max(worst_quad, quad);
    worst_cauchy = std::max(worst_cauchy, cauchy);
    if (!ok) ++failures;
  }
  return {failures == 0,
          std::to_string(kDraws) + " draws, " + std::to_string(failures) + " failures; max radius: loop filter " +
              num(worst_quad, 10) + ", full denominator (Cauchy bound) " + num(worst_cauchy, 10) +
              ", companion eigenvalues on " + std::to_string(eigen_checked) + " draws " + num(worst_eigen, 10)};
}

Outcome gradient_suite() {
  const std::vector<std::string> families = {
      "lambda", "alpha", "beta", "nu", ".gain", "timing", "turb_depth", "band_gains",
      "intake_alpha", "intake_beta", "theta1", "theta2", "gain_logit", "delay_logits"};
  bool pass = true;
  std::set<std::string> covered;
  std::ostringstream detail;
  std::size_t checked = 0, excluded = 0;
  for (const auto& scope : diff::grad_check_scopes()) {
    diff::GradCheckOptions opts;
    opts.duration = 0.5;
    const auto rep = diff::grad_check(scope, scope == "full" ? 1 : 3, 17, opts);
    pass = pass && rep.passed && !rep.entries.empty();
    checked += rep.entries.size();
    excluded += rep.excluded.size();
    if (scope == "full") {
      for (const auto& e : rep.entries) {
        for (const auto& f : families) {
          if (e.param.find(f) != std::string::npos) covered.insert(f);
        }
      }
    }
    double max_abs_err = 0.0, max_grad = 0.0;
    for (const auto& e : rep.entries) {
      max_abs_err = std::max(max_abs_err, e.abs_error);
      max_grad = std::max(max_grad, std::abs(e.analytic));
    }
    detail << scope << " rel " << num(rep.max_rel_error, 3) << " abs " << num(max_abs_err, 3) << " |g|max "
           << num(max_grad, 3) << (rep.passed ? "" : " FAIL") << "; ";
  }
  const bool all_covered = covered.size() == families.size();
  detail << checked << " entries, " << excluded << " excluded at masks, "
         << covered.size() << "/" << families.size() << " families in the end-to-end render";
  return {pass && all_covered, "per scope max relative error (entries above abs 1e-6), max abs error, largest gradient: " + detail.str()};
}

Outcome periodicity() {
  SynthConfig cfg;
  const double fs = cfg.sample_rate;
  auto single = default_params(cfg);
  silence_noise(single);
  for (int c = 1; c < engine::kCylinders; ++c) single.cylinders[c].gain = {0.0};
  const auto ctl = constant_controls(2.0, 3000.0, 1.0, fs);
  const auto tr = render_trace(single, ctl, cfg);
  const std::size_t skip = 4000;
  const std::vector<double> bank(tr.bank_left.begin() + skip, tr.bank_left.end());
  const std::vector<double> out(tr.output.begin() + skip, tr.output.end());
  const double r640 = test::autocorrelation(bank, 640);
  const double out640 = test::autocorrelation(out, 640);
  std::size_t best_lag = 0;
  double best = -2.0;
  for (std::size_t lag = 320; lag <= 960; ++lag) {
    const double r = test::autocorrelation(bank, lag);
    if (r > best) best = r, best_lag = lag;
  }

  auto all = default_params(cfg);
  silence_noise(all);
  const std::size_t nfft = 1 << 16;
  const auto tr8 = render_trace(all, constant_controls(4.4, 3000.0, 1.0, fs), cfg);
  std::vector<double> sum(nfft);
  const auto hw = test::hann(nfft);
  double mean = 0.0;
  for (std::size_t i = 0; i < nfft; ++i) mean += tr8.bank_left[skip + i] + tr8.bank_right[skip + i];
  mean /= nfft;
  // The pulses carry a DC offset; without removing it the Hann leakage of
  // bin 0 would be the "peak".
  for (std::size_t i = 0; i < nfft; ++i) {
    sum[i] = (tr8.bank_left[skip + i] + tr8.bank_right[skip + i] - mean) * hw[i];
  }
  const auto ps = test::power_spectrum(sum, nfft);
  const auto peak = static_cast<std::size_t>(std::max_element(ps.begin() + 1, ps.end()) - ps.begin());
  const double target_bin = 200.0 * nfft / fs;
  const bool peak_ok = std::abs(static_cast<double>(peak) - target_bin) <= 1.0;

  return {best_lag == 640 && r640 > 0.99 && out640 > 0.99 && peak_ok,
          "single cylinder r[640] " + num(r640, 8) + " (argmax lag " + std::to_string(best_lag) +
              "), after resonators " + num(out640, 8) + "; 8-cylinder peak at bin " +
              std::to_string(peak) + " = " + num(peak * fs / nfft, 6) + " Hz (200 Hz is bin " +
              num(target_bin, 6) + ")"};
}

// Energy within +-3 bins of engine orders 1..16, Hann frames of 4096 with hop
// 1024, each frame's f0 from its mean RPM. Bins are evaluated by direct DFT.
double order_energy(const std::vector<double>& y, const std::vector<double>& rpm, double fs) {
  const std::size_t n = 4096, hop = 1024;
  const auto w = test::hann(n);
  long double total = 0.0L;
  for (std::size_t s = 0; s + n <= y.size(); s += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += rpm[s + i];
    const double f0 = mean / n / 120.0;
    std::set<long> bins;
    for (int k = 1; k <= 16; ++k) {
      const long c = std::lround(k * f0 * n / fs);
      for (long b = c - 3; b <= c + 3; ++b) if (b > 0) bins.insert(b);
    }
    for (long b : bins) {
      long double re = 0.0L, im = 0.0L;
      for (std::size_t i = 0; i < n; ++i) {
        const long double a = 2.0L * std::numbers::pi_v<long double> * b * i / n;
        re += y[s + i] * w[i] * std::cos(a);
        im -= y[s + i] * w[i] * std::sin(a);
      }
      total += re * re + im * im;
    }
  }
  return static_cast<double>(total);
}

double band_power(const std::vector<double>& x, double fs, double lo, double hi) {
  const std::size_t nfft = 1 << 16;
  std::vector<double> xw(nfft, 0.0);
  const std::size_t n = std::min(nfft, x.size());
  const auto hw = test::hann(n);
  for (std::size_t i = 0; i < n; ++i) xw[i] = x[i] * hw[i];
  const auto ps = test::power_spectrum(xw, nfft);
  double e = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const double f = k * fs / nfft;
    if (f >= lo && f <= hi) e += ps[k];
  }
  return e;
}

Outcome regime_gating() {
  SynthConfig cfg;
  const double fs = cfg.sample_rate;
  const auto params = default_params(cfg);
  const auto up = ramp_controls(4.0, 1500.0, 2500.0, 1.0, cfg);
  const auto down = ramp_controls(4.0, 1500.0, 2500.0, -1.0, cfg);
  const auto tp = render_trace(params, up, cfg);
  const auto tm = render_trace(params, down, cfg);
  const double harm_gap = db(order_energy(tp.output, up.rpm, fs) / order_energy(tm.output, down.rpm, fs));

  // -1: every noise term of the excitation (augmented minus plain pulses).
  // +1: only its DFCO floor term, g_dfco * eta.
  const std::size_t n = tp.output.size();
  std::vector<double> floor_minus(n), dfco_plus(n);
  for (std::size_t i = 0; i < n; ++i) {
    floor_minus[i] = (tm.excitation_left[i] - tm.bank_left[i]) + (tm.excitation_right[i] - tm.bank_right[i]);
    dfco_plus[i] = tp.g_dfco[i] * (tp.eta_left[i] + tp.eta_right[i]);
  }
  const double noise_gap = db(band_power(floor_minus, fs, 1000.0, 4000.0) / band_power(dfco_plus, fs, 1000.0, 4000.0));
  // Whole-output view of the same question, for context.
  const double out_gap = db(band_power(tm.output, fs, 1000.0, 4000.0) / band_power(tp.output, fs, 1000.0, 4000.0));
  return {harm_gap >= 10.0 && noise_gap >= 10.0,
          "orders 1-16 energy +1 vs -1: " + num(harm_gap, 4) + " dB (need >= 10); 1-4 kHz noise floor -1 vs "
          "+1 DFCO term: " + num(noise_gap, 4) + " dB (need >= 10); full-output 1-4 kHz -1 vs +1: " +
              num(out_gap, 4) + " dB"};
}

Outcome self_reconstruction() {
  SynthConfig cfg;
  const auto controls = ramp_controls(4.0, 600.0, 4000.0, 0.5, cfg);
  const auto truth = default_params(cfg);
  const auto target = render(truth, controls, cfg, 512);

  // Every continuous parameter scaled by an independent factor in [0.8, 1.2];
  // delays stay at their true candidates.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> f(0.8, 1.2);
  auto init = truth;
  for (auto& c : init.cylinders) {
    for (auto* track : {&c.lambda, &c.alpha, &c.beta, &c.nu, &c.gain}) {
      for (double& v : *track) v *= f(rng);
    }
    c.nu[0] = std::min(c.nu[0], 1.0);
  }
  for (auto& g : init.noise.band_gains) {
    for (double& v : g) v *= f(rng);
  }
  init.noise.turb_depth *= f(rng);
  init.noise.intake_alpha *= f(rng);
  init.noise.intake_beta *= f(rng);
  for (auto* r : {&init.resonators.left, &init.resonators.right, &init.resonators.shared}) {
    r->theta1 *= f(rng);
    r->theta2 *= f(rng);
    r->gain_logit *= f(rng);
  }

  diff::FitConfig fc;
  fc.iterations = 300;
  fc.lr = 1e-2;
  fc.seed = 5;
  const auto t0 = Clock::now();
  const auto before = diff::evaluate_loss(target, controls, init, cfg);
  const auto result = diff::fit(target, controls, init, fc, cfg);
  const auto after = diff::evaluate_loss(target, controls, result.params, cfg);
  const double elapsed = seconds_since(t0);
  const double total_ratio = after.total / before.total;
  const double harm_ratio = after.harmonic / before.harmonic;
  return {total_ratio <= 0.5 && harm_ratio <= 0.5 && elapsed <= 600.0,
          std::to_string(fc.iterations) + " iterations in " + num(elapsed, 4) + " s; total " +
              num(before.total) + " -> " + num(after.total) + " (x" + num(total_ratio, 3) + "), harmonic " +
              num(before.harmonic) + " -> " + num(after.harmonic) + " (x" + num(harm_ratio, 3) +
              "), best iteration " + std::to_string(result.best_iter)};
}

Outcome loss_sanity() {
  SynthConfig cfg;
  const auto controls = ramp_controls(2.5, 900.0, 2600.0, 0.3, cfg);
  const auto y = render(default_params(cfg), controls, cfg, 512);
  std::vector<double> y2(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) y2[i] = 2.0 * y[i];
  const auto same = diff::mrstft_loss(y, y);
  const double harm_same = diff::harmonic_loss(y, y, controls.rpm, cfg.sample_rate);
  const auto doubled = diff::mrstft_loss(y, y2);
  double worst_sc = 0.0;
  for (const auto& r : doubled.stft_per_resolution) worst_sc = std::max(worst_sc, std::abs(r.spectral_convergence - 1.0));
  std::size_t expected = 0;
  for (std::size_t n : diff::default_stft_sizes()) expected += n <= y.size();
  const bool ok = same.stft == 0.0 && harm_same == 0.0 && worst_sc <= 1e-12 &&
                  doubled.stft_per_resolution.size() == expected;
  return {ok, "mrstft(y, y) = " + num(same.stft) + ", harmonic(y, y) = " + num(harm_same) +
                  "; max |SC(y, 2y) - 1| over " + std::to_string(doubled.stft_per_resolution.size()) +
                  " resolutions = " + num(worst_sc, 3)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PTR_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const auto csv = test::temp_path("acc_ramp.csv");
  test::write_ramp_csv(csv, 3.0, 800.0, 3800.0, 0.4);
  const auto a = test::temp_path("acc_a.wav"), b = test::temp_path("acc_b.wav");
  bool ok = run_cli("render -c " + csv + " -o " + a + " --seed 3") == 0 &&
            run_cli("render -c " + csv + " -o " + b + " --seed 3") == 0;
  const bool identical = ok && test::read_bytes(a) == test::read_bytes(b) && !test::read_bytes(a).empty();

  double worst_cli = 0.0;
  const auto ref = read_wav(a).samples;
  for (int block : {1, 64, 1000, 4096}) {
    const auto p = test::temp_path("acc_block.wav");
    ok = ok && run_cli("render -c " + csv + " -o " + p + " --seed 3 --block-size " + std::to_string(block)) == 0;
    const auto s = read_wav(p).samples;
    if (s.size() != ref.size()) {
      ok = false;
      continue;
    }
    for (std::size_t i = 0; i < s.size(); ++i) worst_cli = std::max(worst_cli, std::abs(s[i] - ref[i]));
  }

  // The same invariance in double precision, without the float32 file format.
  SynthConfig cfg;
  const auto controls = ramp_controls(3.0, 800.0, 3800.0, 0.4, cfg);
  const auto params = default_params(cfg);
  const auto base = render(params, controls, cfg, 512);
  double worst_lib = 0.0;
  for (std::size_t block : {1ul, 77ul, 2048ul, 48000ul}) {
    const auto y = render(params, controls, cfg, block);
    for (std::size_t i = 0; i < y.size(); ++i) worst_lib = std::max(worst_lib, std::abs(y[i] - base[i]));
  }
  return {ok && identical && worst_cli <= 1e-6 && worst_lib <= 1e-6,
          std::string("render byte-identical: ") + (identical ? "yes" : "no") +
              "; block sizes 1/64/1000/4096 via CLI max |diff| " + num(worst_cli, 3) +
              ", block sizes 1/77/2048/48000 in double " + num(worst_lib, 3) + " (tol 1e-6)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 filter equivalence", filter_equivalence},
      {"2 stability sweep", stability_sweep},
      {"3 gradient suite", gradient_suite},
      {"4 periodicity", periodicity},
      {"5 regime gating", regime_gating},
      {"6 self-reconstruction fit", self_reconstruction},
      {"7 loss sanity", loss_sanity},
      {"8 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << "[" << name << "] " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
