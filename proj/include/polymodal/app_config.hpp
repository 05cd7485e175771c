#pragma once

// Structured application config. Relative paths resolve against the config
// file's directory; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polymodal/chat_client.hpp"
#include "polymodal/gradcheck.hpp"
#include "polymodal/instruct_gen.hpp"
#include "polymodal/model_zoo.hpp"
#include "polymodal/projection.hpp"

namespace polymodal {

struct RegistryEntrySpec {
  ModelDescriptor descriptor;
  std::string backend = "mock";  // mock | command
  std::filesystem::path program;  // command backends only
};

struct InstructDefaults {
  TypeMix type_mix = default_type_mix();
  std::filesystem::path seeds;
  std::filesystem::path candidates;
  std::filesystem::path references;
  BundleSizes bundle;
};

struct LanguageBackendSpec {
  std::string kind = "scripted";  // scripted | external
  std::filesystem::path rules;
};

struct GradcheckDefaults {
  int trials = 20;
  GradcheckOptions options;
};

struct AppConfig {
  std::uint64_t seed = 7;
  std::filesystem::path workspace = "workspace";
  std::vector<RegistryEntrySpec> registry;  // empty: the three mock generators
  TrainConfig projection = toy_train_config();
  LanguageBackendSpec language_backend;
  InstructDefaults instruct;
  ChatClientConfig chat;
  GradcheckDefaults gradcheck;

  /// Cross-field checks, run before any command does work. Throws
  /// config_error.
  void validate() const;
};

/// Parse then validate.
AppConfig load_app_config(const std::filesystem::path& path);
AppConfig parse_app_config(std::string_view json_text, const std::filesystem::path& base_dir);

/// Finalized registry built from the config.
ModelRegistry build_registry(const AppConfig& cfg);

}  // namespace polymodal
