#pragma once

// Trainable components: one linear input projection per modality and a LoRA
// adaptor on the (frozen) language-model map, with exact gradients of a
// mean-squared alignment loss.
//
// Shapes, with d = d_llm and k = tokens per modality:
//   projection weight  (k*d) x d_enc, optional bias (k*d)
//   token j            = weight.rows(j*d .. j*d+d) * v + bias.segment(j*d, d)
//   adapted map        y = W0 x + (alpha / r) * up * (down * x)
//   down (LoRA A)      r x d,   up (LoRA B)   d x r,   W0 d x d (frozen)

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "polymodal/common.hpp"
#include "polymodal/embedding.hpp"

namespace polymodal {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr std::array<Modality, 3> kInputModalities{
    Modality::image, Modality::audio, Modality::video};

/// Position of an input modality in per-modality arrays.
inline std::size_t modality_slot(Modality m) {
  switch (m) {
    case Modality::image: return 0;
    case Modality::audio: return 1;
    case Modality::video: return 2;
    case Modality::text: break;
  }
  throw Error(ErrorCode::modality_mismatch, "text has no input projection");
}

enum class LossKind { mse };

struct TrainConfig {
  std::array<Index, 3> d_enc{1024, 1024, 1024};
  Index d_llm = 4096;
  Index tokens_per_modality = 1;
  bool bias = false;
  Index rank = 32;
  double alpha = 32.0;
  double learning_rate = 0.05;
  int steps = 200;
  std::uint64_t seed = 7;
  LossKind loss = LossKind::mse;

  /// Throws invalid_argument naming the first offending field.
  void validate() const;
};

/// Small dimensions used by the toy training loop and the tests.
TrainConfig toy_train_config();

template <typename Scalar>
struct LinearProjection {
  Modality modality = Modality::image;
  Index token_count = 1;
  Matrix<Scalar> weight;
  Vector<Scalar> bias;  // empty when the projection has no bias

  bool has_bias() const noexcept { return bias.size() != 0; }
  Index d_enc() const noexcept { return weight.cols(); }
  Index d_llm() const noexcept { return token_count > 0 ? weight.rows() / token_count : 0; }
};

template <typename Scalar>
struct LoraAdaptor {
  Matrix<Scalar> base;  // frozen
  Matrix<Scalar> down;  // A
  Matrix<Scalar> up;    // B
  Scalar alpha = Scalar(1);

  Index rank() const noexcept { return down.rows(); }
  Index dim() const noexcept { return base.rows(); }
  Scalar scale() const noexcept { return alpha / static_cast<Scalar>(rank()); }
};

template <typename Scalar>
struct ProjectionStack {
  std::array<LinearProjection<Scalar>, 3> projections;
  LoraAdaptor<Scalar> lora;

  const LinearProjection<Scalar>& projection_for(Modality m) const {
    return projections[modality_slot(m)];
  }
};

template <typename Scalar>
struct AlignmentSample {
  EmbeddingVector embedding;
  Matrix<Scalar> target;  // k x d_llm
};

template <typename Scalar>
struct Gradients {
  std::array<Matrix<Scalar>, 3> weight;
  std::array<Vector<Scalar>, 3> bias;
  Matrix<Scalar> down;
  Matrix<Scalar> up;
  Scalar loss = Scalar(0);

  /// Number of scalars that receive a gradient.
  Index size() const {
    Index n = down.size() + up.size();
    for (std::size_t m = 0; m < 3; ++m) n += weight[m].size() + bias[m].size();
    return n;
  }
};

struct ParamBreakdown {
  std::array<std::int64_t, 3> projection{};
  std::int64_t lora = 0;
  std::int64_t total = 0;
};

// ---------------------------------------------------------------------------

template <typename Scalar>
void check_shapes(const LinearProjection<Scalar>& p) {
  if (p.token_count < 1 || p.weight.rows() % p.token_count != 0)
    throw Error(ErrorCode::shape_mismatch, "weight rows not divisible by token count");
  if (p.has_bias() && p.bias.size() != p.weight.rows())
    throw Error(ErrorCode::shape_mismatch, "bias length differs from weight rows");
}

template <typename Scalar>
void check_shapes(const LoraAdaptor<Scalar>& l) {
  const Index d = l.base.rows();
  if (l.base.cols() != d) throw Error(ErrorCode::shape_mismatch, "base must be square");
  if (l.rank() < 1 || l.rank() > d)
    throw Error(ErrorCode::shape_mismatch, "rank must lie in [1, d]");
  if (l.down.cols() != d || l.up.rows() != d || l.up.cols() != l.rank())
    throw Error(ErrorCode::shape_mismatch, "LoRA factors do not match base");
}

/// Token matrix (k x d_llm) for embedding values `v`.
template <typename Scalar, typename Derived>
Matrix<Scalar> project_values(const LinearProjection<Scalar>& p,
                              const Eigen::MatrixBase<Derived>& v) {
  check_shapes(p);
  if (v.size() != p.d_enc())
    throw Error(ErrorCode::shape_mismatch,
                "embedding dim " + std::to_string(v.size()) + " vs projection input " +
                    std::to_string(p.d_enc()));
  Vector<Scalar> flat = p.weight * v.template cast<Scalar>();
  if (p.has_bias()) flat += p.bias;
  const Index d = p.d_llm();
  Matrix<Scalar> tokens(p.token_count, d);
  for (Index j = 0; j < p.token_count; ++j)
    tokens.row(j) = flat.segment(j * d, d).transpose();
  return tokens;
}

template <typename Scalar>
Matrix<Scalar> project(const LinearProjection<Scalar>& p, const EmbeddingVector& v) {
  if (v.modality != p.modality)
    throw Error(ErrorCode::modality_mismatch,
                std::string(to_string(v.modality)) + " embedding fed to " +
                    std::string(to_string(p.modality)) + " projection");
  return project_values(p, v.values);
}

template <typename Scalar, typename Derived>
Vector<Scalar> lora_forward(const LoraAdaptor<Scalar>& l,
                            const Eigen::MatrixBase<Derived>& x) {
  check_shapes(l);
  if (x.size() != l.dim())
    throw Error(ErrorCode::shape_mismatch, "input length differs from adaptor dim");
  const Vector<Scalar> xs = x.template cast<Scalar>();
  Vector<Scalar> y = l.base * xs;
  y += l.scale() * (l.up * (l.down * xs));
  return y;
}

/// Applies the adapted map to every row of a token matrix.
template <typename Scalar>
Matrix<Scalar> lora_forward_rows(const LoraAdaptor<Scalar>& l, const Matrix<Scalar>& tokens) {
  check_shapes(l);
  if (tokens.cols() != l.dim())
    throw Error(ErrorCode::shape_mismatch, "token width differs from adaptor dim");
  Matrix<Scalar> y = tokens * l.base.transpose();
  y += l.scale() * ((tokens * l.down.transpose()) * l.up.transpose());
  return y;
}

/// Mean squared error over all entries.
template <typename Scalar>
Scalar alignment_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorCode::shape_mismatch, "prediction and target shapes differ");
  if (pred.size() == 0) throw Error(ErrorCode::shape_mismatch, "empty token matrix");
  return (pred - target).squaredNorm() / static_cast<Scalar>(pred.size());
}

template <typename Scalar>
Matrix<Scalar> stack_forward(const ProjectionStack<Scalar>& stack, const EmbeddingVector& v) {
  return lora_forward_rows(stack.lora, project(stack.projection_for(v.modality), v));
}

/// Mean alignment loss over the batch.
template <typename Scalar>
Scalar batch_loss(const ProjectionStack<Scalar>& stack,
                  std::span<const AlignmentSample<Scalar>> batch) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  Scalar total(0);
  for (const auto& s : batch) total += alignment_loss(stack_forward(stack, s.embedding), s.target);
  return total / static_cast<Scalar>(batch.size());
}

template <typename Scalar>
Gradients<Scalar> zero_gradients(const ProjectionStack<Scalar>& stack) {
  Gradients<Scalar> g;
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& p = stack.projections[m];
    g.weight[m] = Matrix<Scalar>::Zero(p.weight.rows(), p.weight.cols());
    g.bias[m] = Vector<Scalar>::Zero(p.bias.size());
  }
  g.down = Matrix<Scalar>::Zero(stack.lora.down.rows(), stack.lora.down.cols());
  g.up = Matrix<Scalar>::Zero(stack.lora.up.rows(), stack.lora.up.cols());
  return g;
}

/// Exact gradients of batch_loss with respect to every projection weight and
/// bias and both LoRA factors. The frozen base receives none.
template <typename Scalar>
Gradients<Scalar> backward(const ProjectionStack<Scalar>& stack,
                           std::span<const AlignmentSample<Scalar>> batch) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  const auto& lora = stack.lora;
  check_shapes(lora);
  Gradients<Scalar> g = zero_gradients(stack);
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch.size());
  const Scalar s = lora.scale();

  for (const auto& sample : batch) {
    const std::size_t slot = modality_slot(sample.embedding.modality);
    const auto& proj = stack.projections[slot];
    const Matrix<Scalar> tokens = project(proj, sample.embedding);  // k x d
    if (tokens.cols() != lora.dim())
      throw Error(ErrorCode::shape_mismatch, "projection width differs from adaptor dim");
    const Matrix<Scalar> hidden = tokens * lora.down.transpose();  // k x r
    Matrix<Scalar> out = tokens * lora.base.transpose();
    out += s * (hidden * lora.up.transpose());

    g.loss += alignment_loss(out, sample.target) * inv_batch;

    // d(loss)/d(out)
    const Matrix<Scalar> d_out =
        (out - sample.target) * (Scalar(2) * inv_batch / static_cast<Scalar>(out.size()));
    g.up.noalias() += s * d_out.transpose() * hidden;                 // d x r
    const Matrix<Scalar> d_hidden = s * (d_out * lora.up);             // k x r
    g.down.noalias() += d_hidden.transpose() * tokens;                 // r x d
    Matrix<Scalar> d_tokens = d_out * lora.base;                       // k x d
    d_tokens.noalias() += d_hidden * lora.down;

    const Vector<Scalar> v = sample.embedding.values.template cast<Scalar>();
    const Index d = proj.d_llm();
    for (Index j = 0; j < proj.token_count; ++j) {
      g.weight[slot].middleRows(j * d, d).noalias() += d_tokens.row(j).transpose() * v.transpose();
      if (proj.has_bias()) g.bias[slot].segment(j * d, d) += d_tokens.row(j).transpose();
    }
  }
  return g;
}

/// Trainable-parameter accounting for a configuration.
ParamBreakdown param_count(const TrainConfig& cfg);

/// Fresh parameters: projection weights ~ N(0, 1/d_enc), zero biases,
/// A ~ N(0, 0.02^2), B = 0, and a frozen base sqrt(d) * Q with Q a random
/// orthogonal matrix (well conditioned, unit-variance entries).
template <typename Scalar>
ProjectionStack<Scalar> init_stack(const TrainConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(mix64(cfg.seed, 0x1217ULL));
  auto gaussian = [&](Index rows, Index cols, double sd) {
    Matrix<Scalar> m(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(sd * rng.gaussian());
    return m;
  };

  ProjectionStack<Scalar> stack;
  const Index k = cfg.tokens_per_modality;
  for (std::size_t m = 0; m < 3; ++m) {
    auto& p = stack.projections[m];
    p.modality = kInputModalities[m];
    p.token_count = k;
    p.weight = gaussian(k * cfg.d_llm, cfg.d_enc[m], 1.0 / std::sqrt(double(cfg.d_enc[m])));
    if (cfg.bias) p.bias = Vector<Scalar>::Zero(k * cfg.d_llm);
  }

  const Index d = cfg.d_llm;
  Eigen::MatrixXd raw(d, d);
  for (Index c = 0; c < d; ++c)
    for (Index r = 0; r < d; ++r) raw(r, c) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  stack.lora.base = (std::sqrt(double(d)) * q).cast<Scalar>();
  stack.lora.down = gaussian(cfg.rank, d, 0.02);
  stack.lora.up = Matrix<Scalar>::Zero(d, cfg.rank);
  stack.lora.alpha = static_cast<Scalar>(cfg.alpha);
  return stack;
}

/// Learnable synthetic data: for each modality, unit embeddings mapped
/// through a hidden random projection and the frozen base of
/// init_stack(cfg). An exact solution therefore exists.
template <typename Scalar>
std::vector<AlignmentSample<Scalar>> make_toy_dataset(const TrainConfig& cfg,
                                                      Index samples_per_modality,
                                                      std::uint64_t seed) {
  const auto stack = init_stack<Scalar>(cfg);
  SplitMix64 rng(mix64(seed, 0xda7aULL));
  std::vector<AlignmentSample<Scalar>> data;
  for (std::size_t m = 0; m < 3; ++m) {
    const Index d_enc = cfg.d_enc[m];
    const Index rows = cfg.tokens_per_modality * cfg.d_llm;
    Matrix<Scalar> hidden(rows, d_enc);
    for (Index c = 0; c < d_enc; ++c)
      for (Index r = 0; r < rows; ++r)
        hidden(r, c) = static_cast<Scalar>(rng.gaussian() / std::sqrt(double(d_enc)));
    LinearProjection<Scalar> teacher{kInputModalities[m], cfg.tokens_per_modality, hidden, {}};

    for (Index i = 0; i < samples_per_modality; ++i) {
      Eigen::VectorXd v(d_enc);
      for (Index c = 0; c < d_enc; ++c) v[c] = rng.gaussian();
      v.normalize();
      EmbeddingVector e{kInputModalities[m], std::move(v)};
      Matrix<Scalar> target = project(teacher, e) * stack.lora.base.transpose();
      data.push_back({std::move(e), std::move(target)});
    }
  }
  return data;
}

template <typename Scalar>
void apply_gradients(ProjectionStack<Scalar>& stack, const Gradients<Scalar>& g, Scalar lr) {
  for (std::size_t m = 0; m < 3; ++m) {
    stack.projections[m].weight -= lr * g.weight[m];
    if (stack.projections[m].has_bias()) stack.projections[m].bias -= lr * g.bias[m];
  }
  stack.lora.down -= lr * g.down;
  stack.lora.up -= lr * g.up;
}

struct LossTrace {
  std::vector<double> loss;  // loss before step i; the last entry follows the final update

  double initial() const { return loss.front(); }
  double last() const { return loss.back(); }
};

/// Plain full-batch gradient descent for cfg.steps steps, starting from
/// `stack`. Throws divergence_detected when the loss stops being finite.
template <typename Scalar>
LossTrace train(ProjectionStack<Scalar>& stack, const TrainConfig& cfg,
                std::span<const AlignmentSample<Scalar>> dataset) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorCode::invalid_argument, "empty training set");
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  LossTrace trace;
  trace.loss.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  for (int step = 0; step <= cfg.steps; ++step) {
    Gradients<Scalar> g;
    if (step < cfg.steps) {
      g = backward(stack, dataset);
    } else {
      g.loss = batch_loss(stack, dataset);
    }
    if (!std::isfinite(static_cast<double>(g.loss)))
      throw Error(ErrorCode::divergence_detected,
                  "loss is not finite at step " + std::to_string(step));
    trace.loss.push_back(static_cast<double>(g.loss));
    if (step < cfg.steps) apply_gradients(stack, g, lr);
  }
  return trace;
}

/// init_stack(cfg) followed by train().
template <typename Scalar>
LossTrace train_toy(const TrainConfig& cfg, std::span<const AlignmentSample<Scalar>> dataset) {
  auto stack = init_stack<Scalar>(cfg);
  return train(stack, cfg, dataset);
}

/// "step,loss" CSV with a header line.
std::string loss_trace_csv(const LossTrace& trace);

}  // namespace polymodal
