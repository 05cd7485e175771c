#include "polymodal/projection.hpp"

#include <iomanip>
#include <sstream>

namespace polymodal {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::invalid_argument, what);
  };
  for (std::size_t m = 0; m < d_enc.size(); ++m)
    if (d_enc[m] < 1) fail("d_enc for " + std::string(to_string(kInputModalities[m])) + " must be >= 1");
  if (d_llm < 1) fail("d_llm must be >= 1");
  if (tokens_per_modality < 1) fail("tokens_per_modality must be >= 1");
  if (rank < 1) fail("LoRA rank must be >= 1");
  if (rank > d_llm) fail("LoRA rank must not exceed d_llm");
  if (!(alpha > 0.0)) fail("LoRA alpha must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail("learning rate must be finite and >= 0");
  if (steps < 0) fail("steps must be >= 0");
}

TrainConfig toy_train_config() {
  TrainConfig cfg;
  cfg.d_enc = {4, 4, 4};
  cfg.d_llm = 4;
  cfg.tokens_per_modality = 1;
  cfg.bias = true;
  cfg.rank = 2;
  cfg.alpha = 4.0;
  cfg.learning_rate = 0.05;
  cfg.steps = 200;
  cfg.seed = 7;
  return cfg;
}

ParamBreakdown param_count(const TrainConfig& cfg) {
  cfg.validate();
  ParamBreakdown out;
  const std::int64_t rows = std::int64_t{cfg.tokens_per_modality} * cfg.d_llm;
  for (std::size_t m = 0; m < 3; ++m) {
    out.projection[m] = rows * cfg.d_enc[m] + (cfg.bias ? rows : 0);
    out.total += out.projection[m];
  }
  out.lora = 2 * std::int64_t{cfg.rank} * cfg.d_llm;
  out.total += out.lora;
  return out;
}

std::string loss_trace_csv(const LossTrace& trace) {
  std::ostringstream out;
  out << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.loss.size(); ++i) out << i << ',' << trace.loss[i] << '\n';
  return out.str();
}

}  // namespace polymodal
