#pragma once

// End-to-end request handling: encode -> project -> language backend ->
// parse -> validate -> route -> execute, with a per-stage trace.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polymodal/chat_client.hpp"
#include "polymodal/embedding.hpp"
#include "polymodal/instruct_gen.hpp"
#include "polymodal/meta_protocol.hpp"
#include "polymodal/model_zoo.hpp"
#include "polymodal/projection.hpp"

namespace polymodal {

struct UserRequest {
  std::string instruction;
  std::vector<Attachment> attachments;
};

/// Throws instruction_required, attachment_missing or modality_mismatch.
/// `.mvec` files are exempt from the extension check; their header is
/// checked when loaded.
void validate_request(const UserRequest& req);

struct InputSummary {
  Modality modality = Modality::image;
  Index dim = 0;
  double norm = 0.0;
  std::filesystem::path source;
  EmbeddingVector embedding;
};

struct PipelineConfig {
  /// Projection dimensions; d_enc doubles as the stub encoder width.
  TrainConfig projection = toy_train_config();
  /// Identity of the frozen encoder stub, independent of the run seed.
  std::uint64_t encoder_seed = 0x1b1dULL;
  ExecuteOptions execute;
  bool record_timing = false;
  /// Built from `projection` on first use when null.
  std::shared_ptr<const ProjectionStack<double>> stack;
};

/// One record per attachment, in input order. Throws attachment_missing and
/// modality_mismatch.
std::vector<InputSummary> describe_inputs(const UserRequest& req, const PipelineConfig& cfg);

struct BackendQuery {
  std::string_view instruction;
  std::span<const InputSummary> inputs;
  std::span<const Matrix<double>> tokens;  // projected, one k x d block per input
};

class LanguageBackend {
 public:
  virtual ~LanguageBackend() = default;
  /// Raw meta-response text.
  virtual std::string respond(const BackendQuery& query) const = 0;
};

struct ScriptedRule {
  std::string instruction_contains;  // case-insensitive; empty matches anything
  std::vector<Modality> attachment_modalities;  // each must be present
  std::string meta;

  bool catch_all() const noexcept {
    return instruction_contains.empty() && attachment_modalities.empty();
  }
  bool matches(std::string_view instruction, std::span<const InputSummary> inputs) const;
};

/// First matching rule wins. The last rule must be a catch-all
/// (config_error otherwise).
class ScriptedBackend final : public LanguageBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedRule> rules);
  /// `{"rules": [{"instruction_contains", "attachment_modalities", "meta"}]}`
  static ScriptedBackend from_file(const std::filesystem::path& path);

  std::string respond(const BackendQuery& query) const override;
  std::span<const ScriptedRule> rules() const noexcept { return rules_; }

 private:
  std::vector<ScriptedRule> rules_;
};

/// Sends the instruction and an input summary to a chat-completion endpoint.
class ExternalBackend final : public LanguageBackend {
 public:
  explicit ExternalBackend(std::shared_ptr<ChatClient> client);
  std::string respond(const BackendQuery& query) const override;

  static std::vector<ChatMessage> messages_for(const BackendQuery& query);

 private:
  std::shared_ptr<ChatClient> client_;
};

struct StageRecord {
  std::string stage;
  std::optional<double> elapsed_ms;
};

struct PlannedCall {
  std::string model;
  std::string kind;
  std::string prompt;
};

struct PipelineTrace {
  std::vector<StageRecord> stages;
  std::vector<InputSummary> inputs;
  std::vector<std::pair<Index, Index>> token_shapes;
  std::string backend_text;
  MetaResponse meta;
  ParseDiagnostics parse;
  std::vector<ValidationError> validation;
  std::vector<PlannedCall> plan;

  std::vector<std::string> stage_names() const;
  std::string to_json() const;
};

struct PipelineResult {
  FinalResponse response;
  PipelineTrace trace;
  /// Non-empty exactly when invocation validation failed and the response
  /// was degraded to text only.
  std::vector<ValidationError> diagnostics;

  bool degraded() const noexcept { return !diagnostics.empty(); }
};

/// Writes artifacts, manifest.json and trace.json under `workspace`.
/// Throws instruction_required, attachment_missing, modality_mismatch,
/// empty_meta, registry_not_finalized.
PipelineResult run(const UserRequest& req, const PipelineConfig& cfg,
                   const ModelRegistry& registry, const LanguageBackend& backend,
                   const std::filesystem::path& workspace, std::uint64_t seed);

}  // namespace polymodal
