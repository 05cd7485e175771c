#include "polymodal/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace polymodal {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_mvec(const std::filesystem::path& p) { return lower(p.extension().string()) == ".mvec"; }

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::attachment_missing, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text << '\n';
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

class StageClock {
 public:
  StageClock(PipelineTrace& trace, bool enabled) : trace_(trace), enabled_(enabled) {}

  void begin(std::string name) {
    trace_.stages.push_back({std::move(name), std::nullopt});
    start_ = std::chrono::steady_clock::now();
  }
  void end() {
    if (!enabled_) return;
    const auto dt = std::chrono::steady_clock::now() - start_;
    trace_.stages.back().elapsed_ms = std::chrono::duration<double, std::milli>(dt).count();
  }

 private:
  PipelineTrace& trace_;
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

void validate_request(const UserRequest& req) {
  if (req.instruction.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorCode::instruction_required, "instruction is empty");
  for (const auto& a : req.attachments) {
    if (a.modality == Modality::text)
      throw Error(ErrorCode::modality_mismatch, a.path + ": text is not an attachment modality");
    if (!std::filesystem::is_regular_file(a.path))
      throw Error(ErrorCode::attachment_missing, "attachment not found: " + a.path);
    if (is_mvec(a.path)) continue;
    auto by_ext = modality_from_extension(a.path);
    if (!by_ext || *by_ext != a.modality)
      throw Error(ErrorCode::modality_mismatch,
                  a.path + ": extension does not match declared modality " +
                      std::string(to_string(a.modality)));
  }
}

std::vector<InputSummary> describe_inputs(const UserRequest& req, const PipelineConfig& cfg) {
  std::vector<InputSummary> out;
  out.reserve(req.attachments.size());
  for (const auto& a : req.attachments) {
    if (!std::filesystem::is_regular_file(a.path))
      throw Error(ErrorCode::attachment_missing, "attachment not found: " + a.path);
    const Index dim = cfg.projection.d_enc[modality_slot(a.modality)];
    EmbeddingVector e;
    if (is_mvec(a.path)) {
      e = load_embedding(a.path, dim);
      if (e.modality != a.modality)
        throw Error(ErrorCode::modality_mismatch,
                    a.path + " holds a " + std::string(to_string(e.modality)) + " embedding");
    } else {
      e = encode_stub(read_bytes(a.path), a.modality, dim, cfg.encoder_seed);
    }
    out.push_back({a.modality, e.dim(), e.values.norm(), a.path, std::move(e)});
  }
  return out;
}

bool ScriptedRule::matches(std::string_view instruction,
                           std::span<const InputSummary> inputs) const {
  if (!instruction_contains.empty() &&
      lower(instruction).find(lower(instruction_contains)) == std::string::npos)
    return false;
  // Multiset containment: two required images need two image inputs.
  std::array<int, 4> have{};
  for (const auto& in : inputs) ++have[static_cast<std::size_t>(in.modality)];
  for (auto m : attachment_modalities)
    if (--have[static_cast<std::size_t>(m)] < 0) return false;
  return true;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules) : rules_(std::move(rules)) {
  if (rules_.empty() || !rules_.back().catch_all())
    throw Error(ErrorCode::config_error, "scripted rules must end with a catch-all rule");
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_error, "cannot open rule file " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || !j.contains("rules") || !j["rules"].is_array())
    throw Error(ErrorCode::config_error, path.string() + ": expected {\"rules\": [...]}");

  std::vector<ScriptedRule> rules;
  for (const auto& r : j["rules"]) {
    const std::string at = path.string() + ": rule " + std::to_string(rules.size());
    if (!r.is_object() || !r.contains("meta") || !r["meta"].is_string())
      throw Error(ErrorCode::config_error, at + " needs a string \"meta\"");
    ScriptedRule rule;
    rule.meta = r["meta"].get<std::string>();
    if (r.contains("instruction_contains")) {
      if (!r["instruction_contains"].is_string())
        throw Error(ErrorCode::config_error, at + ": instruction_contains must be a string");
      rule.instruction_contains = r["instruction_contains"].get<std::string>();
    }
    if (r.contains("attachment_modalities")) {
      if (!r["attachment_modalities"].is_array())
        throw Error(ErrorCode::config_error, at + ": attachment_modalities must be a list");
      for (const auto& m : r["attachment_modalities"]) {
        auto mod = m.is_string() ? modality_from_string(m.get<std::string>()) : std::nullopt;
        if (!mod || *mod == Modality::text)
          throw Error(ErrorCode::config_error, at + ": bad attachment modality");
        rule.attachment_modalities.push_back(*mod);
      }
    }
    rules.push_back(std::move(rule));
  }
  return ScriptedBackend(std::move(rules));
}

std::string ScriptedBackend::respond(const BackendQuery& query) const {
  for (const auto& r : rules_)
    if (r.matches(query.instruction, query.inputs)) return r.meta;
  return rules_.back().meta;  // unreachable: the last rule is a catch-all
}

ExternalBackend::ExternalBackend(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {
  if (!client_) throw Error(ErrorCode::config_error, "external backend needs a chat client");
}

std::vector<ChatMessage> ExternalBackend::messages_for(const BackendQuery& query) {
  std::string system =
      "You are a multi-modal assistant. Answer with one JSON object "
      "{\"text\": string, \"invocations\": [{\"model\": \"text-to-image\"|\"text-to-audio\"|"
      "\"text-to-video\", \"prompt\": string}]}. Use invocations only when the user asks for "
      "generated media.";
  std::string user = query.instruction.empty() ? std::string() : std::string(query.instruction);
  if (!query.inputs.empty()) {
    user += "\n\nAttached inputs:";
    for (const auto& in : query.inputs)
      user += "\n- [" + std::string(to_string(in.modality)) + "] " +
              in.source.filename().string();
  }
  return {{"system", std::move(system)}, {"user", std::move(user)}};
}

std::string ExternalBackend::respond(const BackendQuery& query) const {
  auto messages = messages_for(query);
  return client_->complete(messages);
}

std::vector<std::string> PipelineTrace::stage_names() const {
  std::vector<std::string> out;
  for (const auto& s : stages) out.push_back(s.stage);
  return out;
}

std::string PipelineTrace::to_json() const {
  ordered_json j;
  j["stages"] = ordered_json::array();
  for (const auto& s : stages) {
    ordered_json rec{{"stage", s.stage}};
    if (s.elapsed_ms) rec["elapsed_ms"] = *s.elapsed_ms;
    j["stages"].push_back(std::move(rec));
  }
  j["inputs"] = ordered_json::array();
  for (const auto& in : inputs)
    j["inputs"].push_back({{"modality", std::string(to_string(in.modality))},
                           {"dim", in.dim},
                           {"norm", in.norm},
                           {"source", in.source.generic_string()}});
  j["tokens"] = ordered_json::array();
  for (const auto& [rows, cols] : token_shapes) j["tokens"].push_back({rows, cols});
  j["backend_text"] = backend_text;
  j["meta"] = ordered_json::parse(serialize_meta_response(meta));
  j["parse_warnings"] = ordered_json::array();
  for (const auto& w : parse.warnings)
    j["parse_warnings"].push_back({{"offset", w.offset}, {"message", w.message}});
  j["validation"] = ordered_json::array();
  for (const auto& v : validation)
    j["validation"].push_back({{"index", v.index},
                               {"code", std::string(to_string(v.code))},
                               {"message", v.message}});
  j["plan"] = ordered_json::array();
  for (const auto& p : plan)
    j["plan"].push_back({{"model", p.model}, {"kind", p.kind}, {"prompt", p.prompt}});
  return j.dump(2);
}

PipelineResult run(const UserRequest& req, const PipelineConfig& cfg,
                   const ModelRegistry& registry, const LanguageBackend& backend,
                   const std::filesystem::path& workspace, std::uint64_t seed) {
  validate_request(req);
  if (!registry.finalized())
    throw Error(ErrorCode::registry_not_finalized, "pipeline needs a finalized registry");

  PipelineResult result;
  auto& trace = result.trace;
  StageClock clock(trace, cfg.record_timing);

  clock.begin("encode");
  trace.inputs = describe_inputs(req, cfg);
  clock.end();

  clock.begin("project");
  auto stack = cfg.stack;
  if (!stack && !trace.inputs.empty())
    stack = std::make_shared<const ProjectionStack<double>>(init_stack<double>(cfg.projection));
  std::vector<Matrix<double>> tokens;
  for (const auto& in : trace.inputs) {
    tokens.push_back(stack_forward(*stack, in.embedding));
    trace.token_shapes.emplace_back(tokens.back().rows(), tokens.back().cols());
  }
  clock.end();

  clock.begin("backend");
  trace.backend_text = backend.respond({req.instruction, trace.inputs, tokens});
  clock.end();

  clock.begin("parse");
  auto parsed = parse_meta_response(trace.backend_text, ParseMode::lenient);
  trace.meta = std::move(parsed.meta);
  trace.parse = std::move(parsed.diagnostics);
  clock.end();

  clock.begin("validate");
  trace.validation = validate_invocations(trace.meta, registry);
  clock.end();

  std::filesystem::create_directories(workspace);
  if (!trace.validation.empty()) {
    // Degraded: text only, nothing routed or executed.
    result.diagnostics = trace.validation;
    result.response.text = trace.meta.text;
    write_text(workspace / "manifest.json", manifest_json(result.response, workspace));
    write_text(workspace / "trace.json", trace.to_json());
    return result;
  }

  clock.begin("route");
  auto plan = route(trace.meta, registry);
  for (const auto& item : plan.items)
    trace.plan.push_back({item.model.name, item.invocation.model, item.invocation.prompt});
  clock.end();

  clock.begin("execute");
  result.response = execute_plan(plan, workspace, seed, cfg.execute);
  clock.end();

  write_text(workspace / "trace.json", trace.to_json());
  return result;
}

}  // namespace polymodal
