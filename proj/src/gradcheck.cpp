#include "polymodal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace polymodal {
namespace {

Eigen::MatrixXd random_matrix(SplitMix64& rng, Index rows, Index cols, double sd) {
  Eigen::MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = sd * rng.gaussian();
  return m;
}

Index random_dim(SplitMix64& rng, Index max) {
  return 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::max<Index>(max, 1))));
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const ProjectionStack<double>& stack,
                          std::span<const AlignmentSample<double>> batch,
                          const GradcheckOptions& options) {
  auto analytic = backward(stack, batch);
  if (options.inject_fault) {
    analytic.down *= 1.01;
    analytic.up *= 1.01;
  }

  ProjectionStack<double> probe = stack;
  const double eps = options.epsilon;
  GradcheckReport report;

  // Perturbs every entry of `param` (a member of `probe`) in turn.
  auto check = [&](const std::string& name, auto& param, const auto& grad) {
    ArrayCheck entry{name, param.size(), 0.0};
    for (Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + eps;
      const double plus = batch_loss(probe, batch);
      param.data()[i] = saved - eps;
      const double minus = batch_loss(probe, batch);
      param.data()[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      entry.max_rel_error =
          std::max(entry.max_rel_error, relative_error(grad.data()[i], numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.checked += entry.size;
    report.arrays.push_back(std::move(entry));
  };

  for (std::size_t m = 0; m < 3; ++m) {
    const std::string tag(to_string(kInputModalities[m]));
    check(tag + ".weight", probe.projections[m].weight, analytic.weight[m]);
    if (probe.projections[m].has_bias())
      check(tag + ".bias", probe.projections[m].bias, analytic.bias[m]);
  }
  check("lora.A", probe.lora.down, analytic.down);
  check("lora.B", probe.lora.up, analytic.up);
  return report;
}

GradcheckInstance random_gradcheck_instance(std::uint64_t seed,
                                            const GradcheckOptions& options) {
  SplitMix64 rng(mix64(seed, 0x6c8dULL));
  const Index d = random_dim(rng, options.max_d_llm);
  const Index rank = random_dim(rng, std::min(options.max_rank, d));
  const Index k = random_dim(rng, options.max_tokens);
  const bool bias = rng.below(2) == 1;

  GradcheckInstance inst;
  for (std::size_t m = 0; m < 3; ++m) {
    const Index d_enc = random_dim(rng, options.max_d_enc);
    auto& p = inst.stack.projections[m];
    p.modality = kInputModalities[m];
    p.token_count = k;
    p.weight = random_matrix(rng, k * d, d_enc, 1.0 / std::sqrt(double(d_enc)));
    if (bias) p.bias = random_matrix(rng, k * d, 1, 0.1);
  }
  inst.stack.lora.base = random_matrix(rng, d, d, 1.0);
  inst.stack.lora.down = random_matrix(rng, rank, d, 0.5);
  inst.stack.lora.up = random_matrix(rng, d, rank, 0.5);
  inst.stack.lora.alpha = 0.5 + 3.5 * rng.uniform();

  for (std::size_t m = 0; m < 3; ++m) {
    const Index count = random_dim(rng, 3);
    const Index d_enc = inst.stack.projections[m].d_enc();
    for (Index i = 0; i < count; ++i) {
      Eigen::VectorXd v = random_matrix(rng, d_enc, 1, 1.0);
      if (v.norm() == 0.0) v.setOnes();
      v.normalize();
      inst.batch.push_back({{kInputModalities[m], std::move(v)}, random_matrix(rng, k, d, 1.0)});
    }
  }
  return inst;
}

}  // namespace polymodal
