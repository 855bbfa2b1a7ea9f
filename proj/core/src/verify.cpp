#include "ptr/verify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "ptr/control.hpp"
#include "ptr/diff/gradcheck.hpp"
#include "ptr/error.hpp"
#include "ptr/resonator.hpp"

namespace ptr {

namespace {

std::string format(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific << v;
  return os.str();
}

SuiteResult equivalence_suite(const VerifyOptions& opts) {
  SuiteResult r{"equivalence", true, "", 0.0};
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> theta(-3.0, 3.0), gain(-4.0, 4.0), unit(-1.0, 1.0);
  std::uniform_int_distribution<int> delay(16, 400);
  int failures = 0;
  for (int trial = 0; trial < opts.equivalence_trials; ++trial) {
    const auto d = resonator::reflection_to_direct(theta(rng), theta(rng));
    const auto e = resonator::integrate_gain(d.a1, d.a2, gain(rng));
    const auto coeffs = resonator::build_coeff_vector(delay(rng), e.alpha, e.beta, 16, 400);
    if (coeffs.loop_gain() >= resonator::kMaxLoopGain) {
      --trial;  // outside the accepted parameter range, draw again
      continue;
    }
    std::vector<double> x(4096);
    double peak = 0.0;
    for (double& v : x) {
      v = unit(rng);
      peak = std::max(peak, std::abs(v));
    }
    for (double& v : x) v /= peak;
    const auto fast = resonator::allpole_apply(x, coeffs);
    const auto ref = resonator::ks_recursive(x, coeffs);
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(fast[i] - ref[i]));
    if (!(err < opts.tolerance)) ++failures;
    r.worst = std::max(r.worst, err);
  }
  r.passed = failures == 0;
  r.detail = std::to_string(opts.equivalence_trials) + " configurations, max |error| " +
             format(r.worst) + " (tolerance " + format(opts.tolerance) + ")";
  if (failures > 0) r.detail += ", " + std::to_string(failures) + " over tolerance";
  return r;
}

// Membership in the open stability triangle of 1 + a1 z^-1 + a2 z^-2.
bool in_triangle(double a1, double a2) { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }

SuiteResult stability_suite(const VerifyOptions& opts) {
  SuiteResult r{"stability", true, "", 0.0};
  std::mt19937_64 rng(opts.seed + 1);
  std::uniform_real_distribution<double> theta(-8.0, 8.0), gain(-12.0, 12.0);
  std::uniform_int_distribution<int> delay(16, 400);
  int failures = 0;
  double worst_radius = 0.0, worst_loop = 0.0;
  for (int trial = 0; trial < opts.stability_trials; ++trial) {
    auto d = resonator::reflection_to_direct(theta(rng), theta(rng));
    if (opts.inject_unstable && trial == 0) d.a2 = 1.01;
    const auto e = resonator::integrate_gain(d.a1, d.a2, gain(rng));
    const double radius = std::max(quadratic_pole_radius(d.a1, d.a2), quadratic_pole_radius(e.alpha, e.beta));
    const auto coeffs = resonator::build_coeff_vector(delay(rng), e.alpha, e.beta, 16, 400);
    const double loop = coeffs.loop_gain();
    const bool ok = in_triangle(d.a1, d.a2) && in_triangle(e.alpha, e.beta) && radius < 1.0 &&
                    loop < 1.0 && coeffs.pole_radius_bound() < 1.0;
    if (!ok) ++failures;
    worst_radius = std::max(worst_radius, radius);
    worst_loop = std::max(worst_loop, loop);
  }
  r.worst = worst_radius;
  r.passed = failures == 0;
  r.detail = std::to_string(opts.stability_trials) + " draws, max pole radius " + format(worst_radius) +
             ", max loop gain " + format(worst_loop);
  if (failures > 0) r.detail += ", " + std::to_string(failures) + " unstable";
  return r;
}

SuiteResult gradient_suite(const VerifyOptions& opts) {
  SuiteResult r{"gradients", true, "", 0.0};
  std::string detail;
  for (const auto& scope : diff::grad_check_scopes()) {
    // The end-to-end check renders the whole graph per probe; one trial suffices.
    const int trials = scope == "full" ? 1 : opts.gradient_trials;
    const auto rep = diff::grad_check(scope, trials, opts.seed, {});
    r.passed = r.passed && rep.passed;
    r.worst = std::max(r.worst, rep.max_rel_error);
    if (!detail.empty()) detail += ", ";
    detail += scope + " " + format(rep.max_rel_error) + (rep.passed ? "" : " FAIL");
  }
  r.detail = "max relative error: " + detail;
  return r;
}

SuiteResult gates_suite(const VerifyOptions&) {
  SuiteResult r{"gates", true, "", 0.0};
  constexpr double eps = 0.02;
  const double thr_floor = std::pow(eps, 0.7);
  std::vector<double> tq(20001);
  for (std::size_t i = 0; i < tq.size(); ++i) tq[i] = -1.5 + 3.0 * static_cast<double>(i) / (tq.size() - 1);
  const auto thr = control::throttle_gate(tq, eps);
  const auto dfco = control::dfco_gate(tq, eps);
  int failures = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < tq.size(); ++i) {
    bool ok = thr[i] >= thr_floor - 1e-15 && dfco[i] >= eps - 1e-15;
    // Never both above their floors: drive and overrun are exclusive.
    ok = ok && (thr[i] <= thr_floor + 1e-15 || dfco[i] <= eps + 1e-15);
    if (i > 0) ok = ok && thr[i] >= thr[i - 1] && dfco[i] <= dfco[i - 1];
    if (tq[i] >= 0.0 && tq[i] <= 1.0) ok = ok && thr[i] <= 1.0 + 1e-15;
    const double expect = std::pow(std::max(tq[i], eps), 0.7);
    worst = std::max(worst, std::abs(thr[i] - expect));
    if (!ok) ++failures;
  }
  r.worst = worst;
  r.passed = failures == 0 && worst < 1e-12;
  r.detail = std::to_string(tq.size()) + " torque values, " + std::to_string(failures) +
             " property violations, max closed-form deviation " + format(worst);
  return r;
}

}  // namespace

double quadratic_pole_radius(double a1, double a2) {
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
  const auto z1 = (-a1 + disc) / 2.0;
  const auto z2 = (-a1 - disc) / 2.0;
  return std::max(std::abs(z1), std::abs(z2));
}

std::vector<std::string> verify_suite_names() { return {"equivalence", "stability", "gradients", "gates"}; }

std::vector<SuiteResult> run_verify(const std::string& selector, const VerifyOptions& opts) {
  const auto names = verify_suite_names();
  require(selector == "all" || std::find(names.begin(), names.end(), selector) != names.end(),
          ErrorKind::kInvalidInput, "unknown verify suite '" + selector + "'");
  std::vector<SuiteResult> out;
  for (const auto& name : names) {
    if (selector != "all" && selector != name) continue;
    if (name == "equivalence") out.push_back(equivalence_suite(opts));
    else if (name == "stability") out.push_back(stability_suite(opts));
    else if (name == "gradients") out.push_back(gradient_suite(opts));
    else out.push_back(gates_suite(opts));
  }
  return out;
}

}  // namespace ptr
