#include "polymodal/model_zoo.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "polymodal/placeholder_media.hpp"

extern char** environ;

namespace polymodal {
namespace {

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path.string());
}

}  // namespace

Executor mock_executor() {
  return [](const GenerationRequest& req) {
    write_file(req.output, render_placeholder(req.kind, req.prompt, req.seed));
  };
}

Executor command_executor(std::string program) {
  return [program = std::move(program)](const GenerationRequest& req) {
    std::string prompt(req.prompt);
    std::string seed = std::to_string(req.seed);
    std::string output = req.output.string();
    std::vector<char*> argv{const_cast<char*>(program.c_str()), prompt.data(),
                            seed.data(), output.data(), nullptr};
    pid_t pid = 0;
    int rc = posix_spawnp(&pid, program.c_str(), nullptr, nullptr, argv.data(),
                          environ);
    if (rc != 0)
      throw Error(ErrorCode::backend_failure,
                  "cannot spawn " + program + ": " + std::strerror(rc));
    int status = 0;
    while (waitpid(pid, &status, 0) < 0) {
      if (errno != EINTR)
        throw Error(ErrorCode::backend_failure, "waitpid failed for " + program);
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw Error(ErrorCode::backend_failure,
                  program + " exited with status " +
                      std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
  };
}

ModelRegistry& ModelRegistry::register_model(ModelDescriptor descriptor,
                                             Executor executor) {
  if (finalized_)
    throw Error(ErrorCode::registry_finalized,
                "cannot register \"" + descriptor.name + "\" after finalize()");
  if (descriptor.name.empty())
    throw Error(ErrorCode::invalid_argument, "model name must not be empty");
  if (!executor)
    throw Error(ErrorCode::invalid_argument,
                "model \"" + descriptor.name + "\" has no executor");
  auto kind_modality = modality_of_kind(descriptor.kind);
  if (!kind_modality)
    throw Error(ErrorCode::invalid_argument,
                "malformed model kind \"" + descriptor.kind + "\"");
  if (*kind_modality != descriptor.output_modality)
    throw Error(ErrorCode::invalid_argument,
                "kind \"" + descriptor.kind + "\" does not produce " +
                    std::string(to_string(descriptor.output_modality)));
  for (const auto& e : entries_)
    if (e.descriptor.name == descriptor.name)
      throw Error(ErrorCode::duplicate_name,
                  "model \"" + descriptor.name + "\" already registered");
  entries_.push_back({std::move(descriptor), std::move(executor)});
  return *this;
}

const ModelRegistry::Entry* ModelRegistry::resolve(std::string_view kind) const {
  const Entry* best = nullptr;
  for (const auto& e : entries_) {
    if (e.descriptor.kind != kind) continue;
    if (best == nullptr || e.descriptor.priority > best->descriptor.priority ||
        (e.descriptor.priority == best->descriptor.priority &&
         e.descriptor.name < best->descriptor.name))
      best = &e;
  }
  return best;
}

ModelRegistry make_default_registry() {
  ModelRegistry registry;
  registry.register_model({"mock-image", "text-to-image", Modality::image, 0},
                          mock_executor());
  registry.register_model({"mock-audio", "text-to-audio", Modality::audio, 0},
                          mock_executor());
  registry.register_model({"mock-video", "text-to-video", Modality::video, 0},
                          mock_executor());
  registry.finalize();
  return registry;
}

InvocationPlan route(const MetaResponse& meta, const ModelRegistry& registry) {
  if (!registry.finalized())
    throw Error(ErrorCode::registry_not_finalized, "route requires a finalized registry");
  InvocationPlan plan;
  plan.text = meta.text;
  plan.items.reserve(meta.invocations.size());
  for (std::size_t i = 0; i < meta.invocations.size(); ++i) {
    const auto& inv = meta.invocations[i];
    const auto* entry = registry.resolve(inv.model);
    if (entry == nullptr)
      throw Error(ErrorCode::unknown_model_kind,
                  "invocation " + std::to_string(i) + ": \"" + inv.model + "\"");
    plan.items.push_back({inv, entry->descriptor, entry->executor});
  }
  return plan;
}

std::string artifact_file_name(std::size_t index, std::string_view kind) {
  return "artifact_" + std::to_string(index) + "_" + std::string(kind) + "." +
         std::string(artifact_extension(kind));
}

FinalResponse execute_plan(const InvocationPlan& plan,
                           const std::filesystem::path& workspace,
                           std::uint64_t seed, ExecuteOptions options) {
  std::error_code ec;
  std::filesystem::create_directories(workspace, ec);
  if (ec || !std::filesystem::is_directory(workspace))
    throw Error(ErrorCode::io_error, "workspace " + workspace.string() +
                                         " is not a writable directory");

  struct Outcome {
    std::optional<Artifact> artifact;
    std::optional<BackendFailure> failure;
  };
  const std::size_t n = plan.items.size();
  std::vector<Outcome> outcomes(n);

  auto run_item = [&](std::size_t i) {
    const auto& item = plan.items[i];
    auto& out = outcomes[i];
    try {
      const auto path = workspace / artifact_file_name(i, item.model.kind);
      item.executor({item.model.kind, item.invocation.prompt, seed ^ i, path});
      if (!std::filesystem::is_regular_file(path))
        throw Error(ErrorCode::backend_failure, "executor produced no file");
      out.artifact = Artifact{i, item.model.output_modality, path, item.model.name,
                              item.model.kind, item.invocation.prompt};
    } catch (const std::exception& e) {
      out.failure = BackendFailure{i, item.model.name, e.what()};
    } catch (...) {
      out.failure = BackendFailure{i, item.model.name, "unknown exception"};
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(options.max_parallel, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_item(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_item(i);
      });
  }

  FinalResponse response;
  response.text = plan.text;
  for (auto& o : outcomes) {
    if (o.artifact) response.artifacts.push_back(std::move(*o.artifact));
    if (o.failure) response.failures.push_back(std::move(*o.failure));
  }

  std::ofstream manifest(workspace / "manifest.json", std::ios::trunc);
  manifest << manifest_json(response, workspace) << '\n';
  if (!manifest) throw Error(ErrorCode::io_error, "cannot write manifest.json");
  return response;
}

std::string manifest_json(const FinalResponse& response,
                          const std::filesystem::path& workspace) {
  nlohmann::ordered_json j;
  j["text"] = response.text;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : response.artifacts) {
    j["artifacts"].push_back({
        {"index", a.index},
        {"modality", to_string(a.modality)},
        {"path", a.path.lexically_relative(workspace).generic_string()},
        {"model", a.model},
        {"kind", a.kind},
        {"prompt", a.prompt},
    });
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : response.failures)
    j["failures"].push_back({{"index", f.index}, {"model", f.model}, {"cause", f.cause}});
  return j.dump(2);
}

}  // namespace polymodal
