#include "polymodal/meta_protocol.hpp"

#include <optional>
#include <utility>

#include <json.hpp>

#include "polymodal/model_zoo.hpp"
#include "polymodal/relaxed_literal.hpp"

namespace polymodal {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kWhitespace = " \t\r\n";

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

struct Problem {
  ErrorCode code;
  std::string message;
};

std::optional<Problem> structural_problem(const MetaResponse& m) {
  if (m.text.empty() && m.invocations.empty())
    return Problem{ErrorCode::empty_meta,
                   "meta-response has neither text nor invocations"};
  for (std::size_t i = 0; i < m.invocations.size(); ++i) {
    if (m.invocations[i].prompt.size() > kMaxPromptBytes)
      return Problem{ErrorCode::prompt_too_long,
                     "invocation " + std::to_string(i) + " prompt is " +
                         std::to_string(m.invocations[i].prompt.size()) +
                         " bytes (limit " + std::to_string(kMaxPromptBytes) +
                         ")"};
  }
  return std::nullopt;
}

void throw_if_structurally_invalid(const MetaResponse& m) {
  if (auto p = structural_problem(m)) throw Error(p->code, p->message);
}

// Exact-schema extraction used by strict mode: exactly the keys "text" and
// "invocations", and exactly "model" and "prompt" per invocation.
std::optional<MetaResponse> extract_exact(const ordered_json& j) {
  if (!j.is_object() || j.size() != 2) return std::nullopt;
  auto text = j.find("text");
  auto invs = j.find("invocations");
  if (text == j.end() || invs == j.end() || !text->is_string() ||
      !invs->is_array())
    return std::nullopt;
  MetaResponse m;
  m.text = text->get<std::string>();
  for (const auto& inv : *invs) {
    if (!inv.is_object() || inv.size() != 2) return std::nullopt;
    auto model = inv.find("model");
    auto prompt = inv.find("prompt");
    if (model == inv.end() || prompt == inv.end() || !model->is_string() ||
        !prompt->is_string())
      return std::nullopt;
    m.invocations.push_back({model->get<std::string>(), prompt->get<std::string>()});
  }
  return m;
}

// Tolerant extraction for lenient mode: either key may be missing, unknown
// keys are ignored, and "prompts" is accepted for "prompt".
std::optional<MetaResponse> extract_tolerant(const ordered_json& j,
                                             std::size_t offset,
                                             std::vector<ParseWarning>& warnings) {
  if (!j.is_object()) return std::nullopt;
  auto text = j.find("text");
  auto invs = j.find("invocations");
  if (text == j.end() && invs == j.end()) return std::nullopt;
  MetaResponse m;
  if (text != j.end()) {
    if (!text->is_string()) return std::nullopt;
    m.text = text->get<std::string>();
  }
  if (invs != j.end()) {
    if (!invs->is_array()) return std::nullopt;
    for (const auto& inv : *invs) {
      if (!inv.is_object()) return std::nullopt;
      auto model = inv.find("model");
      auto prompt = inv.find("prompt");
      if (prompt == inv.end()) {
        prompt = inv.find("prompts");
        if (prompt != inv.end())
          warnings.push_back({offset, "accepted key \"prompts\" as \"prompt\""});
      }
      if (model == inv.end() || prompt == inv.end() || !model->is_string() ||
          !prompt->is_string())
        return std::nullopt;
      m.invocations.push_back(
          {model->get<std::string>(), prompt->get<std::string>()});
    }
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "text" && key != "invocations")
      warnings.push_back({offset, "ignored unknown key \"" + key + "\""});
  }
  return m;
}

// Loose object notation such as the dataset's two-key form
// {"instruction": [...] "invocation": [("kind", "prompt"), ]}. Only the text
// and invocation members are meaningful here.
std::optional<MetaResponse> extract_literal(const relaxed::Literal& lit, std::size_t offset,
                                            std::vector<ParseWarning>& warnings) {
  using Kind = relaxed::Literal::Kind;
  if (lit.kind != Kind::object) return std::nullopt;
  const auto* text = lit.find("text");
  const auto* invs = lit.find("invocations");
  if (invs == nullptr) invs = lit.find("invocation");
  if (text == nullptr && invs == nullptr) return std::nullopt;

  MetaResponse m;
  if (text != nullptr) {
    if (!text->is_string()) return std::nullopt;
    m.text = text->text;
  }
  if (invs != nullptr) {
    if (!invs->is_sequence()) return std::nullopt;
    for (const auto& inv : invs->items) {
      if (inv.is_sequence() && inv.items.size() == 2 && inv.items[0].is_string() &&
          inv.items[1].is_string()) {
        m.invocations.push_back({inv.items[0].text, inv.items[1].text});
      } else if (inv.kind == Kind::object) {
        const auto* model = inv.find("model");
        const auto* prompt = inv.find("prompt");
        if (prompt == nullptr) prompt = inv.find("prompts");
        if (model == nullptr || prompt == nullptr || !model->is_string() || !prompt->is_string())
          return std::nullopt;
        m.invocations.push_back({model->text, prompt->text});
      } else {
        return std::nullopt;
      }
    }
  }
  warnings.push_back({offset, "accepted loose object notation"});
  for (const auto& [key, value] : lit.members)
    if (key != "text" && key != "invocations" && key != "invocation")
      warnings.push_back({offset, "ignored key \"" + key + "\""});
  return m;
}

void skip_ws(std::string_view s, std::size_t& p) {
  while (p < s.size() && kWhitespace.find(s[p]) != std::string_view::npos) ++p;
}

struct RecoveredList {
  std::vector<std::pair<std::size_t, Invocation>> records;
  std::size_t end = 0;
};

// Matches `[ ( q , q ) (, ( q , q ))* [,] ]` at `start`, where q is a single-
// or double-quoted string. Empty lists are not recovered.
std::optional<RecoveredList> match_tuple_list(std::string_view s,
                                              std::size_t start) {
  RecoveredList out;
  std::size_t p = start + 1;
  for (;;) {
    skip_ws(s, p);
    if (p >= s.size()) return std::nullopt;
    if (s[p] == ']') {
      if (out.records.empty()) return std::nullopt;
      out.end = p + 1;
      return out;
    }
    if (!out.records.empty()) {
      if (s[p] != ',') return std::nullopt;
      ++p;
      skip_ws(s, p);
      if (p < s.size() && s[p] == ']') {
        out.end = p + 1;
        return out;
      }
    }
    if (p >= s.size() || s[p] != '(') return std::nullopt;
    const std::size_t tuple_offset = p;
    ++p;
    skip_ws(s, p);
    auto model = relaxed::parse_quoted(s, p);
    if (!model) return std::nullopt;
    skip_ws(s, p);
    if (p >= s.size() || s[p] != ',') return std::nullopt;
    ++p;
    skip_ws(s, p);
    auto prompt = relaxed::parse_quoted(s, p);
    if (!prompt) return std::nullopt;
    skip_ws(s, p);
    if (p < s.size() && s[p] == ',') {
      ++p;
      skip_ws(s, p);
    }
    if (p >= s.size() || s[p] != ')') return std::nullopt;
    ++p;
    out.records.emplace_back(tuple_offset,
                             Invocation{std::move(*model), std::move(*prompt)});
  }
}

ParseResult parse_strict(std::string_view raw) {
  std::string_view body = raw;
  if (body.ends_with("\r\n")) body.remove_suffix(2);
  else if (body.ends_with('\n')) body.remove_suffix(1);

  auto j = ordered_json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded())
    throw Error(ErrorCode::malformed_meta, "not a JSON document");
  auto m = extract_exact(j);
  if (!m)
    throw Error(ErrorCode::malformed_meta,
                "JSON does not match the meta-response schema");
  throw_if_structurally_invalid(*m);
  if (serialize_meta_response(*m) != body)
    throw Error(ErrorCode::malformed_meta, "JSON is not in canonical form");

  ParseResult r{std::move(*m), {}};
  r.diagnostics.mode = ParseMode::strict;
  r.diagnostics.consumed_bytes = raw.size();
  return r;
}

ParseResult parse_lenient(std::string_view raw) {
  ParseResult r;
  r.diagnostics.mode = ParseMode::lenient;
  r.diagnostics.consumed_bytes = raw.size();
  auto& warnings = r.diagnostics.warnings;

  const std::string_view body = trim(raw);
  const std::size_t body_offset =
      body.empty() ? 0 : static_cast<std::size_t>(body.data() - raw.data());

  if (body.starts_with('{')) {
    auto j = ordered_json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (!j.is_discarded()) {
      std::vector<ParseWarning> json_warnings;
      if (auto m = extract_tolerant(j, body_offset, json_warnings)) {
        throw_if_structurally_invalid(*m);
        if (serialize_meta_response(*m) != body)
          warnings.push_back({body_offset, "accepted non-canonical JSON form"});
        warnings.insert(warnings.end(), json_warnings.begin(),
                        json_warnings.end());
        r.meta = std::move(*m);
        return r;
      }
    }
    if (auto lit = relaxed::parse_document(body)) {
      std::vector<ParseWarning> lit_warnings;
      if (auto m = extract_literal(*lit, body_offset, lit_warnings)) {
        throw_if_structurally_invalid(*m);
        warnings.insert(warnings.end(), lit_warnings.begin(), lit_warnings.end());
        r.meta = std::move(*m);
        return r;
      }
    }
    warnings.push_back(
        {body_offset, "input resembles JSON but is not a meta-response; "
                      "treating it as text"});
  }

  // Scan free text for tuple lists, left to right.
  std::vector<std::string_view> segments;
  std::size_t seg_start = 0;
  std::size_t p = 0;
  while (p < raw.size()) {
    if (raw[p] != '[') {
      ++p;
      continue;
    }
    auto list = match_tuple_list(raw, p);
    if (!list) {
      ++p;
      continue;
    }
    segments.push_back(raw.substr(seg_start, p - seg_start));
    for (auto& [offset, inv] : list->records) {
      warnings.push_back({offset, "recovered tuple-form invocation"});
      r.meta.invocations.push_back(std::move(inv));
    }
    p = seg_start = list->end;
  }
  segments.push_back(raw.substr(seg_start));

  for (auto seg : segments) {
    seg = trim(seg);
    if (seg.empty()) continue;
    if (!r.meta.text.empty()) r.meta.text += ' ';
    r.meta.text += seg;
  }
  throw_if_structurally_invalid(r.meta);
  return r;
}

}  // namespace

std::string_view to_string(ParseMode mode) {
  return mode == ParseMode::strict ? "strict" : "lenient";
}

ParseResult parse_meta_response(std::string_view raw, ParseMode mode) {
  if (!relaxed::is_valid_utf8(raw))
    throw Error(ErrorCode::malformed_meta, "input is not valid UTF-8");
  if (trim(raw).empty()) throw Error(ErrorCode::empty_meta, "input is empty");
  return mode == ParseMode::strict ? parse_strict(raw) : parse_lenient(raw);
}

std::string serialize_meta_response(const MetaResponse& m) {
  if (auto p = structural_problem(m))
    throw Error(ErrorCode::invariant_violation, p->message);
  bool utf8_ok = relaxed::is_valid_utf8(m.text);
  for (const auto& inv : m.invocations)
    utf8_ok = utf8_ok && relaxed::is_valid_utf8(inv.model) &&
              relaxed::is_valid_utf8(inv.prompt);
  if (!utf8_ok)
    throw Error(ErrorCode::invariant_violation,
                "meta-response contains invalid UTF-8");

  ordered_json j;
  j["text"] = m.text;
  j["invocations"] = ordered_json::array();
  for (const auto& inv : m.invocations)
    j["invocations"].push_back({{"model", inv.model}, {"prompt", inv.prompt}});
  return j.dump();
}

std::vector<ValidationError> validate_invocations(const MetaResponse& m,
                                                  const ModelRegistry& registry) {
  if (!registry.finalized())
    throw Error(ErrorCode::registry_not_finalized,
                "validate_invocations requires a finalized registry");
  std::vector<ValidationError> errors;
  for (std::size_t i = 0; i < m.invocations.size(); ++i) {
    const auto& inv = m.invocations[i];
    if (registry.resolve(inv.model) == nullptr)
      errors.push_back({ErrorCode::unknown_model_kind, i,
                        "no registered backend for model kind \"" + inv.model +
                            "\""});
    if (inv.prompt.empty())
      errors.push_back({ErrorCode::empty_prompt, i, "prompt is empty"});
    else if (inv.prompt.size() > kMaxPromptBytes)
      errors.push_back({ErrorCode::prompt_too_long, i,
                        "prompt exceeds " + std::to_string(kMaxPromptBytes) +
                            " bytes"});
  }
  return errors;
}

}  // namespace polymodal
