#include "polymodal/app_config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace polymodal {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::config_error, what); }

void only_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) fail(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) fail(where + ": unknown key \"" + k + "\"");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(where + "." + key + " has the wrong type");
  }
}

void read_path(const json& j, const char* key, std::filesystem::path& out,
               const std::filesystem::path& base, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_string()) fail(where + "." + key + " must be a string path");
  std::filesystem::path p = j[key].get<std::string>();
  out = p.is_absolute() || p.empty() ? p : (base / p).lexically_normal();
}

Modality read_modality(const json& j, const std::string& where) {
  auto m = j.is_string() ? modality_from_string(j.get<std::string>()) : std::nullopt;
  if (!m) fail(where + " is not a modality name");
  return *m;
}

void parse_projection(const json& j, TrainConfig& t) {
  const std::string w = "projection";
  only_keys(j, w, {"d_enc", "d_llm", "tokens_per_modality", "bias", "rank", "alpha",
                   "learning_rate", "steps", "seed"});
  if (j.contains("d_enc")) {
    const auto& d = j["d_enc"];
    if (d.is_number_integer()) {
      t.d_enc.fill(d.get<Index>());
    } else if (d.is_array() && d.size() == 3) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (!d[i].is_number_integer()) fail("projection.d_enc entries must be integers");
        t.d_enc[i] = d[i].get<Index>();
      }
    } else {
      fail("projection.d_enc must be an integer or a list of 3 integers");
    }
  }
  read(j, "d_llm", t.d_llm, w);
  read(j, "tokens_per_modality", t.tokens_per_modality, w);
  read(j, "bias", t.bias, w);
  read(j, "rank", t.rank, w);
  read(j, "alpha", t.alpha, w);
  read(j, "learning_rate", t.learning_rate, w);
  read(j, "steps", t.steps, w);
  read(j, "seed", t.seed, w);
}

void parse_chat(const json& j, ChatClientConfig& c, const std::filesystem::path& base) {
  const std::string w = "chat";
  only_keys(j, w, {"mode", "fixture", "endpoint", "model", "token_env", "timeout_ms", "max_retries",
                   "initial_backoff_ms", "backoff_factor", "temperature", "parallelism"});
  if (j.contains("mode")) {
    auto mode = j["mode"].is_string() ? chat_mode_from_string(j["mode"].get<std::string>())
                                      : std::nullopt;
    if (!mode) fail("chat.mode must be live, record or replay");
    c.mode = *mode;
  }
  read_path(j, "fixture", c.fixture, base, w);
  read(j, "endpoint", c.endpoint, w);
  read(j, "model", c.model, w);
  read(j, "token_env", c.token_env, w);
  std::int64_t ms = c.timeout.count();
  read(j, "timeout_ms", ms, w);
  c.timeout = std::chrono::milliseconds(ms);
  ms = c.initial_backoff.count();
  read(j, "initial_backoff_ms", ms, w);
  c.initial_backoff = std::chrono::milliseconds(ms);
  read(j, "max_retries", c.max_retries, w);
  read(j, "backoff_factor", c.backoff_factor, w);
  read(j, "temperature", c.temperature, w);
  read(j, "parallelism", c.parallelism, w);
}

void parse_instruct(const json& j, InstructDefaults& d, const std::filesystem::path& base) {
  const std::string w = "instruct";
  only_keys(j, w, {"type_mix", "seeds", "candidates", "references", "bundle"});
  if (j.contains("type_mix")) {
    only_keys(j["type_mix"], "instruct.type_mix", {"input_align", "output_align", "reasoning"});
    d.type_mix.clear();
    for (const auto& [k, v] : j["type_mix"].items()) {
      if (!v.is_number()) fail("instruct.type_mix." + k + " must be a number");
      d.type_mix[*instruction_type_from_string(k)] = v.get<double>();
    }
  }
  read_path(j, "seeds", d.seeds, base, w);
  read_path(j, "candidates", d.candidates, base, w);
  read_path(j, "references", d.references, base, w);
  if (j.contains("bundle")) {
    const auto& b = j["bundle"];
    only_keys(b, "instruct.bundle", {"seeds", "candidates", "references"});
    read(b, "seeds", d.bundle.seeds, "instruct.bundle");
    read(b, "candidates", d.bundle.candidates, "instruct.bundle");
    read(b, "references", d.bundle.references, "instruct.bundle");
  }
}

void parse_gradcheck(const json& j, GradcheckDefaults& g) {
  const std::string w = "gradcheck";
  only_keys(j, w, {"trials", "epsilon", "tolerance", "max_d_enc", "max_d_llm", "max_rank",
                   "max_tokens"});
  read(j, "trials", g.trials, w);
  read(j, "epsilon", g.options.epsilon, w);
  read(j, "tolerance", g.options.tolerance, w);
  read(j, "max_d_enc", g.options.max_d_enc, w);
  read(j, "max_d_llm", g.options.max_d_llm, w);
  read(j, "max_rank", g.options.max_rank, w);
  read(j, "max_tokens", g.options.max_tokens, w);
}

}  // namespace

void AppConfig::validate() const {
  try {
    projection.validate();
  } catch (const Error& e) {
    fail(std::string("projection: ") + e.what());
  }

  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto& r = registry[i];
    const std::string at = "registry[" + std::to_string(i) + "]";
    if (r.backend != "mock" && r.backend != "command")
      fail(at + ".backend must be mock or command");
    if (r.backend == "command" && r.program.empty()) fail(at + ": command backend needs a program");
  }

  if (language_backend.kind == "scripted") {
    if (language_backend.rules.empty()) fail("language_backend.rules is required for scripted");
    if (!std::filesystem::is_regular_file(language_backend.rules))
      fail("rule file not found: " + language_backend.rules.string());
  } else if (language_backend.kind != "external") {
    fail("language_backend.kind must be scripted or external");
  }

  for (const auto& [type, w] : instruct.type_mix)
    if (!(w >= 0.0)) fail("instruct.type_mix." + std::string(to_string(type)) + " must be >= 0");
  for (const auto* p : {&instruct.seeds, &instruct.candidates, &instruct.references})
    if (!p->empty() && !std::filesystem::is_regular_file(*p))
      fail("instruct data file not found: " + p->string());

  if (chat.mode == ChatMode::replay && !chat.fixture.empty() &&
      !std::filesystem::is_regular_file(chat.fixture))
    fail("replay fixture not found: " + chat.fixture.string());
  if (language_backend.kind == "external") {
    try {
      chat.validate();
    } catch (const Error& e) {
      fail(std::string("chat: ") + e.what());
    }
  }

  if (gradcheck.trials < 0) fail("gradcheck.trials must be >= 0");
  const auto& g = gradcheck.options;
  if (!(g.epsilon > 0.0) || !(g.tolerance > 0.0)) fail("gradcheck epsilon and tolerance must be > 0");
  if (g.max_d_enc < 1 || g.max_d_llm < 1 || g.max_rank < 1 || g.max_tokens < 1)
    fail("gradcheck dimension bounds must be >= 1");
}

AppConfig parse_app_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) fail("config is not valid JSON");
  only_keys(j, "config", {"seed", "workspace", "registry", "projection", "language_backend",
                          "instruct", "chat", "gradcheck"});

  AppConfig cfg;
  read(j, "seed", cfg.seed, "config");
  read_path(j, "workspace", cfg.workspace, base_dir, "config");
  if (cfg.workspace.is_relative()) cfg.workspace = (base_dir / cfg.workspace).lexically_normal();

  if (j.contains("registry")) {
    if (!j["registry"].is_array()) fail("registry must be a list");
    for (const auto& r : j["registry"]) {
      const std::string at = "registry[" + std::to_string(cfg.registry.size()) + "]";
      only_keys(r, at, {"name", "kind", "output_modality", "priority", "backend", "program"});
      RegistryEntrySpec spec;
      read(r, "name", spec.descriptor.name, at);
      read(r, "kind", spec.descriptor.kind, at);
      read(r, "priority", spec.descriptor.priority, at);
      read(r, "backend", spec.backend, at);
      if (!r.contains("output_modality")) fail(at + ".output_modality is required");
      spec.descriptor.output_modality = read_modality(r["output_modality"], at + ".output_modality");
      if (r.contains("program")) {
        if (!r["program"].is_string()) fail(at + ".program must be a string");
        std::filesystem::path p = r["program"].get<std::string>();
        // Bare names go through PATH; anything with a directory part is a path.
        spec.program = p.has_parent_path() && p.is_relative() ? (base_dir / p).lexically_normal() : p;
      }
      cfg.registry.push_back(std::move(spec));
    }
  }
  if (j.contains("projection")) parse_projection(j["projection"], cfg.projection);
  if (j.contains("language_backend")) {
    const auto& b = j["language_backend"];
    only_keys(b, "language_backend", {"kind", "rules"});
    read(b, "kind", cfg.language_backend.kind, "language_backend");
    read_path(b, "rules", cfg.language_backend.rules, base_dir, "language_backend");
  }
  if (j.contains("instruct")) parse_instruct(j["instruct"], cfg.instruct, base_dir);
  if (j.contains("chat")) parse_chat(j["chat"], cfg.chat, base_dir);
  if (j.contains("gradcheck")) parse_gradcheck(j["gradcheck"], cfg.gradcheck);

  cfg.validate();
  return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto base = std::filesystem::absolute(path).parent_path();
  return parse_app_config(buf.str(), base);
}

ModelRegistry build_registry(const AppConfig& cfg) {
  if (cfg.registry.empty()) return make_default_registry();
  ModelRegistry registry;
  for (const auto& spec : cfg.registry) {
    try {
      registry.register_model(spec.descriptor, spec.backend == "command"
                                                   ? command_executor(spec.program.string())
                                                   : mock_executor());
    } catch (const Error& e) {
      fail(std::string("registry: ") + e.what());
    }
  }
  registry.finalize();
  return registry;
}

}  // namespace polymodal
