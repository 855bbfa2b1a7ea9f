#include <iostream>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "commands.hpp"
#include "ptr/error.hpp"

namespace {

using namespace ptr;

// Shared flags resolved with precedence: command line > config file > defaults.
struct Common {
  std::string config_path;
  std::optional<double> sample_rate;
  std::optional<int> block_size;
  std::optional<std::uint64_t> seed;
  KeyValueConfig kv;
  SynthConfig cfg;

  void add(CLI::App* app, bool with_seed) {
    app->add_option("--config", config_path, "Key/value config file (see docs/config.md)")
        ->check(CLI::ExistingFile);
    app->add_option("--sample-rate", sample_rate, "Audio sample rate in Hz");
    app->add_option("--block-size", block_size, "Processing block size in samples");
    if (with_seed) app->add_option("--seed", seed, "Noise / Gumbel seed");
  }

  void resolve() {
    if (!config_path.empty()) kv = KeyValueConfig::load(config_path);
    kv.apply(cfg);
    if (sample_rate) cfg.sample_rate = *sample_rate;
    if (block_size) cfg.block_size = *block_size;
    if (!seed && kv.has("seed")) seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    cfg.validate();
  }

  bool flag(const CLI::App* app, const char* name, bool value, const char* key) const {
    return app->count(name) > 0 ? value : kv.get_bool(key, value);
  }
  double number(const CLI::App* app, const char* name, double value, const char* key) const {
    return app->count(name) > 0 ? value : kv.get_double(key, value);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ptr: procedural engine sound synthesis toolkit"};
  app.require_subcommand(1);
  Common common;

  cli::RenderOptions render;
  auto* render_cmd = app.add_subcommand("render", "Render a control trajectory to a WAV file");
  render_cmd->add_option("--control,-c", render.control, "Control CSV (time,rpm,torque)")->required();
  render_cmd->add_option("--params,-p", render.params, "Parameter JSON (default parameters if omitted)");
  render_cmd->add_option("--out,-o", render.out, "Output WAV path")->required();
  render_cmd->add_flag("--normalize", render.normalize, "Peak-normalize the output");
  render_cmd->add_flag("--pcm16", render.pcm16, "Write 16-bit PCM instead of 32-bit float");
  common.add(render_cmd, true);

  cli::FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit synthesis parameters to a target recording");
  fit_cmd->add_option("--target,-t", fit.target, "Target WAV")->required();
  fit_cmd->add_option("--control,-c", fit.control, "Control CSV")->required();
  fit_cmd->add_option("--init,-i", fit.init, "Initial parameter JSON (default parameters if omitted)");
  fit_cmd->add_option("--out,-o", fit.out, "Fitted parameter JSON")->required();
  fit_cmd->add_option("--trace", fit.trace, "Loss trace CSV");
  fit_cmd->add_option("--iters", fit.iterations, "Optimisation steps")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--lr", fit.lr, "Peak learning rate")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--harmonic-weight", fit.harmonic_weight, "Weight of the engine-order loss");
  fit_cmd->add_option("--weight-decay", fit.weight_decay, "AdamW decoupled weight decay");
  fit_cmd->add_option("--tv-weight", fit.tv_weight, "Total-variation penalty on frame tracks");
  fit_cmd->add_flag("--quiet,-q", fit.quiet, "No progress output");
  common.add(fit_cmd, true);

  cli::PulsePlotOptions plot;
  auto* plot_cmd = app.add_subcommand("pulse-plot", "Emit pulse shape curves as CSV");
  plot_cmd->add_option("--set,-s", plot.sets, "lambda=..,alpha=..,beta=..,nu=..,gain=.. (repeatable)");
  plot_cmd->add_option("--resolution,-n", plot.resolution, "Phase grid points per set");
  plot_cmd->add_option("--rpm", plot.rpm, "RPM used for the Nyquist mask");
  plot_cmd->add_option("--out,-o", plot.out, "Output CSV (stdout if omitted)");
  common.add(plot_cmd, false);

  cli::VerifyCliOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run the built-in oracle suites");
  verify_cmd->add_option("suite", verify.suite, "equivalence | stability | gradients | gates | all");
  verify_cmd->add_option("--tolerance", verify.tolerance, "Equivalence tolerance");
  verify_cmd->add_option("--seed", verify.seed, "Random seed of the suites");
  verify_cmd->add_flag("--inject-unstable", verify.inject_unstable)->group("");

  cli::StreamOptions stream;
  auto* stream_cmd = app.add_subcommand(
      "stream", "Read time,rpm,torque lines on stdin, write float32 audio blocks to stdout");
  stream_cmd->add_option("--params,-p", stream.params, "Parameter JSON");
  common.add(stream_cmd, true);

  std::string init_out;
  std::size_t init_frames = 1;
  auto* init_cmd = app.add_subcommand("init-params", "Write the default parameter set");
  init_cmd->add_option("--out,-o", init_out, "Output JSON")->required();
  init_cmd->add_option("--frames", init_frames, "Frames per track")->check(CLI::PositiveNumber);
  common.add(init_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitInput;
  }

  try {
    if (*verify_cmd) return cli::cmd_verify(verify, std::cout);
    common.resolve();
    if (*render_cmd) {
      render.seed = common.seed;
      render.block_size = static_cast<std::size_t>(common.cfg.block_size);
      render.normalize = common.flag(render_cmd, "--normalize", render.normalize, "normalize");
      render.pcm16 = common.flag(render_cmd, "--pcm16", render.pcm16, "pcm16");
      return cli::cmd_render(render, common.cfg);
    }
    if (*fit_cmd) {
      fit.seed = common.seed;
      fit.iterations = static_cast<int>(common.number(fit_cmd, "--iters", fit.iterations, "fit.iterations"));
      fit.lr = common.number(fit_cmd, "--lr", fit.lr, "fit.lr");
      fit.harmonic_weight =
          common.number(fit_cmd, "--harmonic-weight", fit.harmonic_weight, "fit.harmonic_weight");
      fit.weight_decay = common.number(fit_cmd, "--weight-decay", fit.weight_decay, "fit.weight_decay");
      fit.tv_weight = common.number(fit_cmd, "--tv-weight", fit.tv_weight, "fit.tv_weight");
      return cli::cmd_fit(fit, common.cfg);
    }
    if (*plot_cmd) {
      if (plot.out.empty()) return cli::cmd_pulse_plot(plot, common.cfg, std::cout);
      std::ofstream f(plot.out);
      require(static_cast<bool>(f), ErrorKind::kInvalidInput, "cannot write " + plot.out);
      return cli::cmd_pulse_plot(plot, common.cfg, f);
    }
    if (*stream_cmd) {
      std::ios::sync_with_stdio(false);
      stream.seed = common.seed;
      stream.block_size = static_cast<std::size_t>(common.cfg.block_size);
      return cli::cmd_stream(stream, common.cfg, std::cin, std::cout, std::cerr);
    }
    return cli::cmd_init_params(init_out, init_frames, common.cfg);
  } catch (const Error& e) {
    std::cerr << "ptr: " << e.what() << "\n";
    return e.kind() == ErrorKind::kDivergence ? cli::kExitFailure : cli::kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "ptr: " << e.what() << "\n";
    return cli::kExitInput;
  }
}
