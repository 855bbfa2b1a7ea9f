#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ptr::diff {

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double step = 0.0;  // finite-difference step that produced `numeric`
  bool ok = false;
};

struct GradCheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-3;
  double abs_tol = 1e-6;
  double duration = 0.0;  // seconds; 0 picks the scope default
};

struct GradCheckReport {
  std::string scope;
  std::vector<GradCheckEntry> entries;
  std::vector<std::string> excluded;  // documented non-differentiable points
  double max_rel_error = 0.0;
  bool passed = true;

  /// Entries sorted by decreasing relative error, at most n.
  std::vector<GradCheckEntry> worst(std::size_t n) const;
};

/// Compares tape gradients with central finite differences.
/// Scopes: "pulse", "noise", "allpole", "resonator", "loss", "full".
GradCheckReport grad_check(const std::string& scope, int trials, std::uint64_t seed,
                           const GradCheckOptions& opts = {});

std::vector<std::string> grad_check_scopes();

}  // namespace ptr::diff
