#pragma once

// Central finite-difference verification of backward() in double precision.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polymodal/projection.hpp"

namespace polymodal {

struct GradcheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  Index max_d_enc = 8;
  Index max_d_llm = 8;
  Index max_rank = 3;
  Index max_tokens = 2;
  /// Test hook: scales the analytic LoRA gradients by 1.01 so the check must
  /// fail.
  bool inject_fault = false;
};

struct ArrayCheck {
  std::string name;
  Index size = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<ArrayCheck> arrays;
  double max_rel_error = 0.0;
  Index checked = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

GradcheckReport gradcheck(const ProjectionStack<double>& stack,
                          std::span<const AlignmentSample<double>> batch,
                          const GradcheckOptions& options = {});

struct GradcheckInstance {
  ProjectionStack<double> stack;
  std::vector<AlignmentSample<double>> batch;
};

/// Random dims within the option bounds, random parameters (including a
/// non-zero LoRA B so every path carries gradient) and a batch touching all
/// three modalities.
GradcheckInstance random_gradcheck_instance(std::uint64_t seed,
                                            const GradcheckOptions& options = {});

}  // namespace polymodal
