#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "ptr/control.hpp"
#include "ptr/diff/fit.hpp"
#include "ptr/error.hpp"
#include "ptr/params.hpp"
#include "ptr/pulse.hpp"
#include "ptr/stream.hpp"
#include "ptr/synth.hpp"
#include "ptr/verify.hpp"
#include "ptr/wav.hpp"

namespace ptr::cli {

namespace {

ParamSet load_or_default(const std::string& path, const SynthConfig& cfg) {
  return path.empty() ? default_params(cfg) : load_params(path);
}

control::AudioControls load_controls(const std::string& path, const SynthConfig& cfg) {
  return control::to_audio_rate(control::load_control_csv(path, cfg.control_rate), cfg.sample_rate);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

pulse::PulseParams parse_pulse_set(const std::string& spec) {
  pulse::PulseParams p;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    double v = 0.0;
    require(eq != std::string::npos && parse_number(item.substr(eq + 1), v), ErrorKind::kInvalidInput,
            "pulse set '" + spec + "': expected key=value, got '" + item + "'");
    const std::string key = trim(item.substr(0, eq));
    if (key == "lambda") p.lambda = {v};
    else if (key == "alpha") p.alpha = {v};
    else if (key == "beta") p.beta = {v};
    else if (key == "nu") p.nu = {v};
    else if (key == "gain" || key == "c") p.gain = {v};
    else fail(ErrorKind::kInvalidInput, "pulse set '" + spec + "': unknown key '" + key + "'");
  }
  p.validate();
  return p;
}

// Bounded single-producer single-consumer hand-off between the stdin reader
// and the audio loop.
struct FrameItem {
  enum class Kind { kFrame, kMalformed, kEnd } kind = Kind::kFrame;
  double time = 0.0, rpm = 0.0, torque = 0.0;
  std::size_t line = 0;
  std::string text;
};

class FrameQueue {
 public:
  explicit FrameQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(FrameItem item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  FrameItem pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty(); });
    FrameItem item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

 private:
  std::size_t capacity_;
  std::deque<FrameItem> items_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

void read_frames(std::istream& in, FrameQueue& queue) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (lineno == 1 && s == "time,rpm,torque") continue;
    FrameItem item;
    item.line = lineno;
    std::stringstream ss(s);
    std::string f[3], extra;
    const bool shape = std::getline(ss, f[0], ',') && std::getline(ss, f[1], ',') &&
                       std::getline(ss, f[2], ',') && !std::getline(ss, extra, ',');
    if (!shape || !parse_number(f[0], item.time) || !parse_number(f[1], item.rpm) ||
        !parse_number(f[2], item.torque)) {
      item.kind = FrameItem::Kind::kMalformed;
      item.text = s;
    }
    queue.push(std::move(item));
  }
  FrameItem end;
  end.kind = FrameItem::Kind::kEnd;
  queue.push(std::move(end));
}

}  // namespace

int cmd_render(const RenderOptions& opts, const SynthConfig& cfg) {
  cfg.validate();
  auto params = load_or_default(opts.params, cfg);
  if (opts.seed) params.noise.seed = *opts.seed;
  const auto controls = load_controls(opts.control, cfg);
  auto audio = render(params, controls, cfg, opts.block_size);
  if (opts.normalize) {
    double peak = 0.0;
    for (double v : audio) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
      for (double& v : audio) v /= peak;
    }
  }
  write_wav(opts.out, audio, cfg.sample_rate, opts.pcm16 ? SampleFormat::kPcm16 : SampleFormat::kFloat32);
  return kExitOk;
}

int cmd_fit(const FitOptions& opts, const SynthConfig& cfg) {
  cfg.validate();
  auto wav = read_wav(opts.target);
  std::vector<double> target = wav.samples;
  if (wav.sample_rate != cfg.sample_rate) {
    std::cerr << "ptr fit: resampling target from " << wav.sample_rate << " Hz to " << cfg.sample_rate
              << " Hz\n";
    target = resample_linear(wav.samples, wav.sample_rate, cfg.sample_rate);
  }
  auto controls = load_controls(opts.control, cfg);
  const std::size_t n = std::min(target.size(), controls.size());
  require(n > 0, ErrorKind::kInvalidInput, "fit: empty target or control trajectory");
  if (target.size() != controls.size()) {
    std::cerr << "ptr fit: target has " << target.size() << " samples, controls " << controls.size()
              << "; using the first " << n << "\n";
  }
  target.resize(n);
  controls.rpm.resize(n);
  controls.torque.resize(n);

  auto init = load_or_default(opts.init, cfg);
  diff::FitConfig fc;
  fc.iterations = opts.iterations;
  fc.lr = opts.lr;
  fc.harmonic_weight = opts.harmonic_weight;
  fc.weight_decay = opts.weight_decay;
  fc.tv_weight = opts.tv_weight;
  if (opts.seed) fc.seed = *opts.seed;
  const bool quiet = opts.quiet;
  const auto result = diff::fit(target, controls, init, fc, cfg, [quiet](const diff::TraceRow& row) {
    if (!quiet && row.iter % 10 == 0) {
      std::cerr << "iter " << row.iter << " total " << row.total << " stft " << row.stft << " harmonic "
                << row.harmonic << "\n";
    }
  });
  save_params(opts.out, result.params);
  if (!opts.trace.empty()) {
    std::ofstream tr(opts.trace);
    require(static_cast<bool>(tr), ErrorKind::kInvalidInput, "cannot write trace " + opts.trace);
    diff::write_trace_csv(tr, result.trace);
  }
  std::cerr << "best iteration " << result.best_iter << ": total " << result.best_total << " (initial "
            << result.initial_total << ")\n";
  return kExitOk;
}

int cmd_pulse_plot(const PulsePlotOptions& opts, const SynthConfig& cfg, std::ostream& out) {
  require(opts.resolution >= 2, ErrorKind::kInvalidInput, "pulse-plot: resolution must be >= 2");
  std::vector<std::string> sets = opts.sets;
  if (sets.empty()) {
    sets = {"lambda=0.15,alpha=8,beta=1,nu=1,gain=1", "lambda=0.15,alpha=8,beta=1,nu=0.5,gain=1",
            "lambda=0.6,alpha=3,beta=0.3,nu=0.7,gain=1", "lambda=0.05,alpha=20,beta=3,nu=0.8,gain=1"};
  }
  const double f0 = opts.rpm / 120.0;
  out << std::setprecision(10);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto p = parse_pulse_set(sets[s]);
    if (sets.size() > 1) out << (s > 0 ? "\n" : "") << "# set " << s + 1 << ": " << sets[s] << "\n";
    out << "phase,base,envelope,bent,final\n";
    for (std::size_t i = 0; i < opts.resolution; ++i) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / opts.resolution;
      const double c = p.gain[0];
      const double base = c * pulse::harmonic_stack(phi, p.lambda[0], cfg.harmonics, f0, cfg.nyquist());
      const double env = pulse::pressure_envelope(phi, p.alpha[0], p.beta[0]);
      const double bent = c * pulse::harmonic_stack(pulse::phase_bend(phi, p.nu[0]), p.lambda[0],
                                                    cfg.harmonics, f0, cfg.nyquist());
      out << phi << ',' << base << ',' << env << ',' << bent << ',' << env * bent << '\n';
    }
  }
  return kExitOk;
}

int cmd_verify(const VerifyCliOptions& opts, std::ostream& out) {
  VerifyOptions vo;
  vo.tolerance = opts.tolerance;
  vo.seed = opts.seed;
  vo.inject_unstable = opts.inject_unstable;
  bool ok = true;
  for (const auto& r : run_verify(opts.suite, vo)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_stream(const StreamOptions& opts, const SynthConfig& cfg, std::istream& in, std::ostream& out,
               std::ostream& err) {
  cfg.validate();
  auto params = load_or_default(opts.params, cfg);
  if (opts.seed) params.noise.seed = *opts.seed;
  StreamSession session(params, cfg, opts.block_size);
  std::vector<float> block(opts.block_size);
  FrameQueue queue(opts.queue_frames);
  std::thread reader([&] { read_frames(in, queue); });
  auto emit = [&] {
    while (const std::size_t got = session.pull_block(block)) {
      out.write(reinterpret_cast<const char*>(block.data()),
                static_cast<std::streamsize>(got * sizeof(float)));
      out.flush();
    }
  };
  for (;;) {
    FrameItem item = queue.pop();
    if (item.kind == FrameItem::Kind::kEnd) break;
    if (item.kind == FrameItem::Kind::kMalformed) {
      err << "ptr stream: line " << item.line << ": malformed frame dropped: " << item.text << "\n";
      continue;
    }
    if (!session.push_frame(item.time, item.rpm, item.torque)) {
      err << "ptr stream: line " << item.line << ": frame rejected (time must increase, rpm >= 0)\n";
      continue;
    }
    emit();
  }
  reader.join();
  session.finish();
  emit();
  return kExitOk;
}

int cmd_init_params(const std::string& out, std::size_t frames, const SynthConfig& cfg) {
  cfg.validate();
  save_params(out, default_params(cfg, frames));
  return kExitOk;
}

}  // namespace ptr::cli
