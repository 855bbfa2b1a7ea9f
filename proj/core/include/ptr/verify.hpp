#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ptr {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::string detail;    // worst-case numbers
  double worst = 0.0;
};

struct VerifyOptions {
  double tolerance = 1e-5;       // equivalence tolerance
  int equivalence_trials = 100;
  int stability_trials = 10000;
  int gradient_trials = 4;
  std::uint64_t seed = 7;
  bool inject_unstable = false;  // test hook: feeds a2 = 1.01 into the stability suite
};

std::vector<std::string> verify_suite_names();

/// Runs one suite ("equivalence", "stability", "gradients", "gates") or "all".
std::vector<SuiteResult> run_verify(const std::string& selector, const VerifyOptions& opts);

/// Largest root magnitude of z^2 + a1 z + a2.
double quadratic_pole_radius(double a1, double a2);

}  // namespace ptr
