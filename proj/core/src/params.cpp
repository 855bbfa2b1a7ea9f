#include "ptr/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ptr/error.hpp"

namespace ptr {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 5> kPulseTracks{"lambda", "alpha", "beta", "nu", "gain"};

std::vector<double>* pulse_track(pulse::PulseParams& p, const std::string& name) {
  if (name == "lambda") return &p.lambda;
  if (name == "alpha") return &p.alpha;
  if (name == "beta") return &p.beta;
  if (name == "nu") return &p.nu;
  if (name == "gain") return &p.gain;
  return nullptr;
}

void expand(std::vector<double>& track, std::size_t frames) {
  if (track.size() == 1 && frames > 1) track.assign(frames, track[0]);
}

std::vector<double> read_track(const json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>()};
  require(j.is_array() && !j.empty(), ErrorKind::kInvalidInput,
          where + ": expected a number or a non-empty array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    require(v.is_number(), ErrorKind::kInvalidInput, where + ": non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

const json& member(const json& j, const char* key, const std::string& where) {
  require(j.is_object() && j.contains(key), ErrorKind::kInvalidInput,
          where + ": missing field '" + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  require(j.at(key).is_number(), ErrorKind::kInvalidInput,
          where + "." + key + " must be a number");
  return j.at(key).get<double>();
}

json resonator_json(const resonator::ResonatorParams& r) {
  return json{{"theta1", r.theta1},         {"theta2", r.theta2},
              {"gain_logit", r.gain_logit}, {"delay_min", r.delay_min},
              {"delay_max", r.delay_max},   {"temperature", r.temperature},
              {"delay", r.argmax_delay()},  {"delay_logits", r.delay_logits}};
}

resonator::ResonatorParams resonator_from(const json& j, const std::string& where) {
  resonator::ResonatorParams r;
  r.theta1 = number(j, "theta1", where, r.theta1);
  r.theta2 = number(j, "theta2", where, r.theta2);
  r.gain_logit = number(j, "gain_logit", where, r.gain_logit);
  r.delay_min = static_cast<int>(number(j, "delay_min", where, r.delay_min));
  r.delay_max = static_cast<int>(number(j, "delay_max", where, r.delay_max));
  r.temperature = number(j, "temperature", where, r.temperature);
  if (j.contains("delay_logits")) {
    r.delay_logits = read_track(j.at("delay_logits"), where + ".delay_logits");
  } else {
    const int delay = static_cast<int>(number(j, "delay", where, -1));
    require(delay > 0, ErrorKind::kInvalidInput, where + ": needs delay_logits or an integer delay");
    r.delay_logits = resonator::ResonatorParams::peaked_logits(delay, r.delay_min, r.delay_max);
  }
  return r;
}

double inverse_timing(double deg, double limit) {
  const double x = std::clamp(deg / limit, -1.0 + 1e-12, 1.0 - 1e-12);
  return std::atanh(x);
}

}  // namespace

std::size_t ParamSet::frames() const {
  std::size_t f = 1;
  for (const auto& c : cylinders) f = std::max(f, c.frames());
  for (const auto& g : noise.band_gains) f = std::max(f, g.size());
  return f;
}

void ParamSet::validate() const {
  require(sample_rate > 0.0 && model_rate > 0.0, ErrorKind::kConfig,
          "sample_rate and model_rate must be positive");
  engine.validate();
  const std::size_t f = frames();
  for (std::size_t i = 0; i < cylinders.size(); ++i) {
    const auto& c = cylinders[i];
    c.validate();
    require(c.frames() == 1 || c.frames() == f, ErrorKind::kInvalidInput,
            "cylinder " + std::to_string(i + 1) + " tracks disagree with the frame count");
    require(std::abs(c.timing_deg) <= engine.timing_limit_deg, ErrorKind::kParameterRange,
            "cylinder " + std::to_string(i + 1) + " timing exceeds the crank-angle limit");
  }
  noise.validate();
  resonators.left.validate();
  resonators.right.validate();
  resonators.shared.validate();
}

ParamSet default_params(const SynthConfig& cfg, std::size_t frames) {
  cfg.validate();
  ParamSet p;
  p.sample_rate = cfg.sample_rate;
  p.model_rate = cfg.model_rate;
  p.noise.band_gains.assign(static_cast<std::size_t>(cfg.noise_bands), std::vector<double>{0.05});
  auto make = [&](int delay) {
    resonator::ResonatorParams r;
    r.delay_min = cfg.delay_min;
    r.delay_max = cfg.delay_max;
    r.delay_logits = resonator::ResonatorParams::peaked_logits(
        std::clamp(delay, cfg.delay_min, cfg.delay_max), cfg.delay_min, cfg.delay_max);
    return r;
  };
  p.resonators.left = make(90);
  p.resonators.right = make(97);
  p.resonators.shared = make(160);
  expand_tracks(p, frames);
  return p;
}

void expand_tracks(ParamSet& params, std::size_t frames) {
  for (auto& c : params.cylinders) {
    for (const char* name : kPulseTracks) expand(*pulse_track(c, name), frames);
  }
  for (auto& g : params.noise.band_gains) expand(g, frames);
}

std::string params_to_json(const ParamSet& p) {
  json j;
  j["schema"] = kParamsSchema;
  j["sample_rate"] = p.sample_rate;
  j["model_rate"] = p.model_rate;
  j["units"] = {{"sample_rate", "Hz"},
                {"model_rate", "frames per second"},
                {"timing_deg", "crank-angle degrees"},
                {"cycle_degrees", "crank-angle degrees per engine cycle"},
                {"delay", "samples"}};
  json bank = json::array();
  for (auto b : p.engine.bank_map) bank.push_back(b == engine::Bank::kLeft ? "left" : "right");
  j["engine"] = {{"firing_order", p.engine.firing_order},
                 {"bank_map", bank},
                 {"cycle_degrees", p.engine.cycle_degrees},
                 {"timing_limit_deg", p.engine.timing_limit_deg}};
  json cyl = json::array();
  for (const auto& c : p.cylinders) {
    cyl.push_back({{"lambda", c.lambda},
                   {"alpha", c.alpha},
                   {"beta", c.beta},
                   {"nu", c.nu},
                   {"gain", c.gain},
                   {"timing_deg", c.timing_deg}});
  }
  j["cylinders"] = cyl;
  j["noise"] = {{"band_gains", p.noise.band_gains},
                {"turb_depth", p.noise.turb_depth},
                {"intake_alpha", p.noise.intake_alpha},
                {"intake_beta", p.noise.intake_beta},
                {"seed", p.noise.seed}};
  j["resonators"] = {{"left", resonator_json(p.resonators.left)},
                     {"right", resonator_json(p.resonators.right)},
                     {"shared", resonator_json(p.resonators.shared)}};
  return j.dump(2) + "\n";
}

ParamSet params_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("params JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::kInvalidInput, "params JSON must be an object");
  const auto schema = j.value("schema", std::string());
  require(schema == kParamsSchema, ErrorKind::kInvalidInput,
          "params JSON schema '" + schema + "' is not " + kParamsSchema);
  ParamSet p;
  p.sample_rate = number(j, "sample_rate", "params", p.sample_rate);
  p.model_rate = number(j, "model_rate", "params", p.model_rate);

  if (j.contains("engine")) {
    const auto& e = j.at("engine");
    if (e.contains("firing_order")) {
      const auto order = read_track(e.at("firing_order"), "engine.firing_order");
      require(order.size() == engine::kCylinders, ErrorKind::kInvalidInput,
              "engine.firing_order must list 8 cylinders");
      for (int i = 0; i < engine::kCylinders; ++i) p.engine.firing_order[i] = static_cast<int>(order[i]);
    }
    if (e.contains("bank_map")) {
      const auto& bm = e.at("bank_map");
      require(bm.is_array() && bm.size() == engine::kCylinders, ErrorKind::kInvalidInput,
              "engine.bank_map must list 8 banks");
      for (int i = 0; i < engine::kCylinders; ++i) {
        const auto s = bm[i].is_string() ? bm[i].get<std::string>() : std::string();
        require(s == "left" || s == "right", ErrorKind::kInvalidInput,
                "engine.bank_map entries must be \"left\" or \"right\"");
        p.engine.bank_map[i] = s == "left" ? engine::Bank::kLeft : engine::Bank::kRight;
      }
    }
    p.engine.cycle_degrees = number(e, "cycle_degrees", "engine", p.engine.cycle_degrees);
    p.engine.timing_limit_deg = number(e, "timing_limit_deg", "engine", p.engine.timing_limit_deg);
  }

  const auto& cyl = member(j, "cylinders", "params");
  require(cyl.is_array() && cyl.size() == engine::kCylinders, ErrorKind::kInvalidInput,
          "params.cylinders must hold 8 entries");
  for (int i = 0; i < engine::kCylinders; ++i) {
    const std::string where = "cylinders[" + std::to_string(i) + "]";
    auto& c = p.cylinders[i];
    for (const char* name : kPulseTracks) {
      *pulse_track(c, name) = read_track(member(cyl[i], name, where), where + "." + name);
    }
    c.timing_deg = number(cyl[i], "timing_deg", where, 0.0);
  }

  const auto& nz = member(j, "noise", "params");
  const auto& bg = member(nz, "band_gains", "noise");
  require(bg.is_array() && !bg.empty(), ErrorKind::kInvalidInput,
          "noise.band_gains must be an array of per-band tracks");
  p.noise.band_gains.clear();
  for (std::size_t b = 0; b < bg.size(); ++b) {
    p.noise.band_gains.push_back(read_track(bg[b], "noise.band_gains[" + std::to_string(b) + "]"));
  }
  p.noise.turb_depth = number(nz, "turb_depth", "noise", p.noise.turb_depth);
  p.noise.intake_alpha = number(nz, "intake_alpha", "noise", p.noise.intake_alpha);
  p.noise.intake_beta = number(nz, "intake_beta", "noise", p.noise.intake_beta);
  if (nz.contains("seed")) {
    require(nz.at("seed").is_number_integer(), ErrorKind::kInvalidInput,
            "noise.seed must be an integer");
    p.noise.seed = nz.at("seed").get<std::uint64_t>();
  }

  const auto& res = member(j, "resonators", "params");
  p.resonators.left = resonator_from(member(res, "left", "resonators"), "resonators.left");
  p.resonators.right = resonator_from(member(res, "right", "resonators"), "resonators.right");
  p.resonators.shared = resonator_from(member(res, "shared", "resonators"), "resonators.shared");
  p.validate();
  return p;
}

ParamSet load_params(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kInvalidInput, "cannot open params file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

void save_params(const std::string& path, const ParamSet& params) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kInvalidInput, "cannot write params file: " + path);
  out << params_to_json(params);
  require(static_cast<bool>(out), ErrorKind::kInvalidInput, "failed writing params file: " + path);
}

bool is_frame_track(const std::string& name) {
  if (name == "noise.band_gains") return true;
  if (name.rfind("cyl", 0) != 0) return false;
  const auto dot = name.find('.');
  if (dot == std::string::npos) return false;
  const auto field = name.substr(dot + 1);
  return std::find_if(kPulseTracks.begin(), kPulseTracks.end(),
                      [&](const char* t) { return field == t; }) != kPulseTracks.end();
}

RawParams to_raw(const ParamSet& p) {
  using pulse::softplus_inverse;
  RawParams raw;
  auto map = [](const std::vector<double>& v, auto fn) {
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), fn);
    return out;
  };
  for (int i = 0; i < engine::kCylinders; ++i) {
    const auto& c = p.cylinders[i];
    const std::string pre = "cyl" + std::to_string(i + 1) + ".";
    raw[pre + "lambda"] = map(c.lambda, [](double v) { return softplus_inverse(v); });
    raw[pre + "alpha"] = map(c.alpha, [](double v) { return softplus_inverse(v - pulse::kAlphaFloor); });
    raw[pre + "beta"] = map(c.beta, [](double v) { return softplus_inverse(v); });
    raw[pre + "nu"] = map(c.nu, [](double v) {
      return pulse::logit((v - pulse::kNuFloor) / (1.0 - pulse::kNuFloor));
    });
    raw[pre + "gain"] = map(c.gain, [](double v) { return softplus_inverse(v); });
    raw[pre + "timing"] = {inverse_timing(c.timing_deg, p.engine.timing_limit_deg)};
  }
  std::vector<double> gains;
  for (const auto& g : p.noise.band_gains) {
    for (double v : g) gains.push_back(softplus_inverse(v));
  }
  raw["noise.band_gains"] = gains;
  raw["noise.turb_depth"] = {softplus_inverse(p.noise.turb_depth)};
  raw["noise.intake_alpha"] = {softplus_inverse(p.noise.intake_alpha - pulse::kAlphaFloor)};
  raw["noise.intake_beta"] = {softplus_inverse(p.noise.intake_beta)};
  const std::pair<const char*, const resonator::ResonatorParams*> res[] = {
      {"left", &p.resonators.left}, {"right", &p.resonators.right}, {"shared", &p.resonators.shared}};
  for (const auto& [name, r] : res) {
    const std::string pre = std::string("res.") + name + ".";
    raw[pre + "theta1"] = {r->theta1};
    raw[pre + "theta2"] = {r->theta2};
    raw[pre + "gain_logit"] = {r->gain_logit};
    raw[pre + "delay_logits"] = r->delay_logits;
  }
  return raw;
}

ParamSet from_raw(const RawParams& raw, const ParamSet& shape) {
  using pulse::softplus;
  ParamSet p = shape;
  auto get = [&](const std::string& name, std::size_t expected) -> const std::vector<double>& {
    auto it = raw.find(name);
    require(it != raw.end(), ErrorKind::kInvalidInput, "raw parameter '" + name + "' missing");
    require(it->second.size() == expected, ErrorKind::kInvalidInput,
            "raw parameter '" + name + "' has " + std::to_string(it->second.size()) +
                " values, expected " + std::to_string(expected));
    return it->second;
  };
  for (int i = 0; i < engine::kCylinders; ++i) {
    auto& c = p.cylinders[i];
    const std::string pre = "cyl" + std::to_string(i + 1) + ".";
    const auto& l = get(pre + "lambda", c.lambda.size());
    const auto& a = get(pre + "alpha", c.alpha.size());
    const auto& b = get(pre + "beta", c.beta.size());
    const auto& n = get(pre + "nu", c.nu.size());
    const auto& g = get(pre + "gain", c.gain.size());
    for (std::size_t f = 0; f < l.size(); ++f) c.lambda[f] = softplus(l[f]);
    for (std::size_t f = 0; f < a.size(); ++f) c.alpha[f] = softplus(a[f]) + pulse::kAlphaFloor;
    for (std::size_t f = 0; f < b.size(); ++f) c.beta[f] = softplus(b[f]);
    for (std::size_t f = 0; f < n.size(); ++f) {
      c.nu[f] = pulse::kNuFloor + (1.0 - pulse::kNuFloor) * pulse::sigmoid(n[f]);
    }
    for (std::size_t f = 0; f < g.size(); ++f) c.gain[f] = softplus(g[f]);
    c.timing_deg = p.engine.timing_limit_deg * std::tanh(get(pre + "timing", 1)[0]);
  }
  std::size_t total = 0;
  for (const auto& g : p.noise.band_gains) total += g.size();
  const auto& gains = get("noise.band_gains", total);
  std::size_t k = 0;
  for (auto& g : p.noise.band_gains) {
    for (double& v : g) v = softplus(gains[k++]);
  }
  p.noise.turb_depth = softplus(get("noise.turb_depth", 1)[0]);
  p.noise.intake_alpha = softplus(get("noise.intake_alpha", 1)[0]) + pulse::kAlphaFloor;
  p.noise.intake_beta = softplus(get("noise.intake_beta", 1)[0]);
  const std::pair<const char*, resonator::ResonatorParams*> res[] = {
      {"left", &p.resonators.left}, {"right", &p.resonators.right}, {"shared", &p.resonators.shared}};
  for (const auto& [name, r] : res) {
    const std::string pre = std::string("res.") + name + ".";
    r->theta1 = get(pre + "theta1", 1)[0];
    r->theta2 = get(pre + "theta2", 1)[0];
    r->gain_logit = get(pre + "gain_logit", 1)[0];
    r->delay_logits = get(pre + "delay_logits", r->delay_logits.size());
  }
  return p;
}

}  // namespace ptr
