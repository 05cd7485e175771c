#pragma once

// Registry of pluggable text-to-x generators, the router that binds parsed
// invocations to them, and the executor that materializes artifacts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polymodal/common.hpp"
#include "polymodal/meta_protocol.hpp"

namespace polymodal {

struct ModelDescriptor {
  std::string name;
  std::string kind;
  Modality output_modality = Modality::image;
  int priority = 0;

  friend bool operator==(const ModelDescriptor&, const ModelDescriptor&) = default;
};

struct GenerationRequest {
  std::string_view kind;
  std::string_view prompt;
  std::uint64_t seed = 0;
  std::filesystem::path output;
};

/// Writes one artifact to `request.output`; throws on failure. Must be
/// reentrant: plan items may run concurrently.
using Executor = std::function<void(const GenerationRequest&)>;

/// Executor backed by render_placeholder.
Executor mock_executor();

/// Executor that spawns `program prompt seed output_path` (no shell) and
/// expects a zero exit status and an existing output file.
Executor command_executor(std::string program);

class ModelRegistry {
 public:
  struct Entry {
    ModelDescriptor descriptor;
    Executor executor;
  };

  /// Throws duplicate_name, registry_finalized, or invalid_argument when the
  /// kind is malformed or disagrees with the output modality.
  ModelRegistry& register_model(ModelDescriptor descriptor, Executor executor);

  void finalize() noexcept { finalized_ = true; }
  bool finalized() const noexcept { return finalized_; }

  /// Highest priority backend for `kind`; ties go to the lexicographically
  /// smallest name. nullptr when nothing serves the kind.
  const Entry* resolve(std::string_view kind) const;

  std::span<const Entry> entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
  bool finalized_ = false;
};

/// Finalized registry with one mock backend per output modality.
ModelRegistry make_default_registry();

struct PlanItem {
  Invocation invocation;
  ModelDescriptor model;
  Executor executor;
};

struct InvocationPlan {
  std::string text;  // carried from the meta-response
  std::vector<PlanItem> items;
};

/// Throws registry_not_finalized, or unknown_model_kind when an invocation
/// cannot be resolved.
InvocationPlan route(const MetaResponse& meta, const ModelRegistry& registry);

struct Artifact {
  std::size_t index = 0;
  Modality modality = Modality::image;
  std::filesystem::path path;
  std::string model;
  std::string kind;
  std::string prompt;

  friend bool operator==(const Artifact&, const Artifact&) = default;
};

struct BackendFailure {
  std::size_t index = 0;
  std::string model;
  std::string cause;

  friend bool operator==(const BackendFailure&, const BackendFailure&) = default;
};

struct FinalResponse {
  std::string text;
  std::vector<Artifact> artifacts;       // successful items, plan order
  std::vector<BackendFailure> failures;  // failed items, plan order

  bool ok() const noexcept { return failures.empty(); }
};

struct ExecuteOptions {
  std::size_t max_parallel = 1;
};

/// `artifact_<index>_<kind>.<ext>`
std::string artifact_file_name(std::size_t index, std::string_view kind);

/// Runs each plan item once with seed `seed ^ index`, writing artifacts and
/// `manifest.json` under `workspace`. A failing item is recorded and does
/// not stop the others. Throws io_error if the workspace is unusable.
FinalResponse execute_plan(const InvocationPlan& plan,
                           const std::filesystem::path& workspace,
                           std::uint64_t seed, ExecuteOptions options = {});

/// Manifest JSON; artifact paths are relative to `workspace`.
std::string manifest_json(const FinalResponse& response,
                          const std::filesystem::path& workspace);

}  // namespace polymodal
