#include "polymodal/instruct_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "polymodal/model_zoo.hpp"
#include "polymodal/relaxed_literal.hpp"

namespace polymodal {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kWhitespace = " \t\r\n";
constexpr std::size_t kMaxDescriptionBytes = 1900;

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

bool is_input_modality(Modality m) { return m != Modality::text; }

// Cuts at a UTF-8 boundary no later than `max` bytes.
std::string truncate_utf8(std::string_view s, std::size_t max) {
  if (s.size() <= max) return std::string(s);
  std::size_t cut = max;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xc0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

std::string clean_description(std::string_view desc) {
  std::string d(trim(desc));
  while (!d.empty() && (d.back() == '.' || d.back() == ' ')) d.pop_back();
  return truncate_utf8(d, kMaxDescriptionBytes);
}

std::string noun_for(Modality m) { return std::string(to_string(m)); }

std::string target_phrase(Modality m) {
  switch (m) {
    case Modality::image: return "an image";
    case Modality::audio: return "an audio clip";
    case Modality::video: return "a video";
    case Modality::text: break;
  }
  return "a response";
}

std::string prompt_for(Modality target, const std::string& desc) {
  switch (target) {
    case Modality::image: return "A photo of " + desc;
    case Modality::audio: return "The sound of " + desc;
    case Modality::video: return "A video of " + desc;
    case Modality::text: break;
  }
  return desc;
}

std::string extension_for(Modality m) {
  switch (m) {
    case Modality::image: return "jpg";
    case Modality::audio: return "wav";
    case Modality::video: return "mp4";
    case Modality::text: break;
  }
  return "txt";
}

// "a cat meowing" -> "cat_meowing"
std::string slug(std::string_view desc) {
  std::vector<std::string> words;
  std::string word;
  for (char c : desc) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      word += static_cast<char>(std::tolower(u));
    } else if (!word.empty()) {
      words.push_back(std::move(word));
      word.clear();
    }
  }
  if (!word.empty()) words.push_back(std::move(word));
  if (words.size() > 1 && (words[0] == "a" || words[0] == "an" || words[0] == "the"))
    words.erase(words.begin());
  std::string out;
  for (const auto& w : words) {
    if (out.size() + w.size() + 1 > 48) break;
    if (!out.empty()) out += '_';
    out += w;
  }
  return out.empty() ? "candidate" : out;
}

Attachment attachment_for(const Candidate& c) {
  return {slug(c.description) + "." + extension_for(c.modality), c.modality};
}

std::string join_modalities(const std::vector<Attachment>& atts) {
  std::vector<std::string> nouns;
  for (const auto& a : atts) nouns.push_back(noun_for(a.modality));
  if (nouns.size() == 1) return nouns[0];
  if (nouns.size() == 2) return nouns[0] + " and " + nouns[1];
  std::string out;
  for (std::size_t i = 0; i < nouns.size(); ++i) {
    if (i + 1 == nouns.size()) out += "and ";
    out += nouns[i];
    if (i + 1 < nouns.size()) out += ", ";
  }
  return out;
}

std::string describe_sentence(const Candidate& c, const std::string& desc) {
  switch (c.modality) {
    case Modality::image: return "The image shows " + desc + ".";
    case Modality::audio: return "The audio contains " + desc + ".";
    case Modality::video: return "The video depicts " + desc + ".";
    case Modality::text: break;
  }
  return desc + ".";
}

std::string reasoning_question(Modality m, std::uint64_t pick) {
  static const std::vector<std::string> audio{
      "Where might this audio clip have been recorded?",
      "What could be producing the sound in this audio clip?",
  };
  static const std::vector<std::string> image{
      "What might have happened just before this image was taken?",
      "Where could this image have been taken?",
  };
  static const std::vector<std::string> video{
      "What is likely to happen next in this video?",
      "Why might the events in this video be taking place?",
  };
  const auto& pool = m == Modality::audio ? audio : m == Modality::image ? image : video;
  return pool[pick % pool.size()];
}

InstructionPair make_output_align(const Candidate& src, SplitMix64& rng) {
  static const std::vector<std::string> qualifiers{
      "", " of the same subject", " that conveys the same scene", " capturing its content"};
  std::vector<Modality> targets;
  for (auto m : {Modality::image, Modality::audio, Modality::video})
    if (m != src.modality) targets.push_back(m);
  const Modality target = targets[rng.below(targets.size())];
  const std::string desc = clean_description(src.description);

  InstructionPair p;
  p.type = InstructionType::output_align;
  p.instruction = "Generate " + target_phrase(target) + qualifiers[rng.below(qualifiers.size())] +
                  " based on the provided " + noun_for(src.modality) + ".";
  p.attachments.push_back(attachment_for(src));
  p.invocations.push_back({kind_for(target), prompt_for(target, desc)});
  return p;
}

InstructionPair make_input_align(std::span<const Candidate> pool, SplitMix64& rng) {
  const std::size_t count = 1 + rng.below(std::min<std::size_t>(3, pool.size()));
  InstructionPair p;
  p.type = InstructionType::input_align;
  std::string response;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = pool[rng.below(pool.size())];
    p.attachments.push_back(attachment_for(c));
    if (!response.empty()) response += ' ';
    response += describe_sentence(c, clean_description(c.description));
  }
  p.instruction = "Describe the given " + join_modalities(p.attachments) + ".";
  p.response_text = std::move(response);
  return p;
}

InstructionPair make_reasoning(const Candidate& c, SplitMix64& rng) {
  const std::string desc = clean_description(c.description);
  InstructionPair p;
  p.type = InstructionType::reasoning;
  p.instruction = reasoning_question(c.modality, rng.next());
  p.attachments.push_back(attachment_for(c));
  p.response_text = "The " + noun_for(c.modality) + " captures " + desc +
                    ". Reasoning from those cues, the most plausible answer is a setting where " +
                    desc + " would naturally occur.";
  return p;
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::malformed_line, why); }

InstructionPair pair_from_canonical(const nlohmann::json& j) {
  static const std::vector<std::string> keys{"id",          "type",        "instruction",
                                             "attachments", "invocations", "response_text"};
  if (!j.is_object()) malformed("line is not a JSON object");
  if (j.size() != keys.size()) malformed("expected exactly the keys id, type, instruction, attachments, invocations, response_text");
  for (const auto& k : keys)
    if (!j.contains(k)) malformed("missing key \"" + k + "\"");

  InstructionPair p;
  if (!j["id"].is_string()) malformed("\"id\" must be a string");
  p.id = j["id"].get<std::string>();
  if (!j["type"].is_string()) malformed("\"type\" must be a string");
  auto type = instruction_type_from_string(j["type"].get<std::string>());
  if (!type) malformed("unknown instruction type");
  p.type = *type;
  if (!j["instruction"].is_string()) malformed("\"instruction\" must be a string");
  p.instruction = j["instruction"].get<std::string>();

  if (!j["attachments"].is_array()) malformed("\"attachments\" must be an array");
  for (const auto& a : j["attachments"]) {
    if (!a.is_object() || a.size() != 2 || !a.contains("path") || !a.contains("modality") ||
        !a["path"].is_string() || !a["modality"].is_string())
      malformed("attachment must be {\"path\", \"modality\"}");
    auto m = modality_from_string(a["modality"].get<std::string>());
    if (!m) malformed("unknown attachment modality");
    p.attachments.push_back({a["path"].get<std::string>(), *m});
  }
  if (!j["invocations"].is_array()) malformed("\"invocations\" must be an array");
  for (const auto& inv : j["invocations"]) {
    if (!inv.is_object() || inv.size() != 2 || !inv.contains("model") ||
        !inv.contains("prompt") || !inv["model"].is_string() || !inv["prompt"].is_string())
      malformed("invocation must be {\"model\", \"prompt\"}");
    p.invocations.push_back({inv["model"].get<std::string>(), inv["prompt"].get<std::string>()});
  }
  const auto& rt = j["response_text"];
  if (rt.is_string()) p.response_text = rt.get<std::string>();
  else if (!rt.is_null()) malformed("\"response_text\" must be a string or null");
  return p;
}

// {"instruction": [text..., file...], "invocation": [(kind, prompt), ...]}
InstructionPair pair_from_two_key_form(const relaxed::Literal& lit, std::string_view fallback_id) {
  if (lit.kind != relaxed::Literal::Kind::object) malformed("line is not an object");
  const auto* instruction = lit.find("instruction");
  if (instruction == nullptr) malformed("missing \"instruction\"");

  InstructionPair p;
  p.id = std::string(fallback_id);
  std::vector<std::string> texts;
  auto take = [&](const relaxed::Literal& item) {
    if (!item.is_string()) malformed("instruction entries must be strings");
    auto m = modality_from_extension(item.text);
    if (m && is_input_modality(*m) && item.text.find(' ') == std::string::npos)
      p.attachments.push_back({item.text, *m});
    else
      texts.push_back(item.text);
  };
  if (instruction->is_sequence()) {
    for (const auto& item : instruction->items) take(item);
  } else {
    take(*instruction);
  }
  for (const auto& t : texts) {
    if (!p.instruction.empty()) p.instruction += ' ';
    p.instruction += t;
  }

  const auto* invocation = lit.find("invocation");
  if (invocation == nullptr) invocation = lit.find("invocations");
  if (invocation != nullptr) {
    if (!invocation->is_sequence()) malformed("\"invocation\" must be a list");
    for (const auto& inv : invocation->items) {
      if (inv.is_sequence() && inv.items.size() == 2 && inv.items[0].is_string() &&
          inv.items[1].is_string()) {
        p.invocations.push_back({inv.items[0].text, inv.items[1].text});
      } else if (inv.kind == relaxed::Literal::Kind::object) {
        const auto* model = inv.find("model");
        const auto* prompt = inv.find("prompt");
        if (prompt == nullptr) prompt = inv.find("prompts");
        if (model == nullptr || prompt == nullptr || !model->is_string() || !prompt->is_string())
          malformed("invocation object needs model and prompt strings");
        p.invocations.push_back({model->text, prompt->text});
      } else {
        malformed("invocation entries must be (model, prompt) pairs");
      }
    }
  }
  for (std::string_view key : {"response", "response_text", "output"}) {
    if (const auto* r = lit.find(key); r != nullptr && r->is_string()) {
      p.response_text = r->text;
      break;
    }
  }
  p.type = p.invocations.empty() ? InstructionType::input_align : InstructionType::output_align;
  return p;
}

bool valid_attachment_path(std::string_view path) {
  if (path.empty() || path.size() > 4096 || path.back() == '/') return false;
  for (char c : path)
    if (static_cast<unsigned char>(c) < 0x20) return false;
  return relaxed::is_valid_utf8(path);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

std::string_view to_string(InstructionType t) {
  switch (t) {
    case InstructionType::input_align: return "input_align";
    case InstructionType::output_align: return "output_align";
    case InstructionType::reasoning: return "reasoning";
  }
  return "unknown";
}

std::optional<InstructionType> instruction_type_from_string(std::string_view s) {
  for (auto t : kInstructionTypes)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::string assemble_query(const QueryBundle& bundle) {
  if (bundle.seeds.empty()) throw Error(ErrorCode::empty_bundle, "bundle has no seed examples");
  if (bundle.candidates.empty())
    throw Error(ErrorCode::empty_bundle, "bundle has no candidate descriptions");
  if (bundle.references.empty() && bundle.target == InstructionType::output_align)
    throw Error(ErrorCode::empty_bundle, "output_align bundles need language references");

  std::ostringstream out;
  out << "You write training pairs for a multi-modal assistant. Each pair holds an instruction, "
         "its attached inputs, and the generator invocations the assistant should emit.\n"
      << "Template: " << bundle.template_id << "\n"
      << "Target instruction type: " << to_string(bundle.target) << "\n\n";

  out << "### SEEDS\n";
  for (const auto& s : bundle.seeds) out << pair_to_json(s) << '\n';

  out << "\n### CANDIDATES\n";
  for (const auto& c : bundle.candidates)
    out << "- [" << to_string(c.modality) << "] " << c.description << '\n';

  out << "\n### REFERENCES\n";
  if (bundle.references.empty()) out << "(none)\n";
  for (const auto& r : bundle.references) out << "- " << r << '\n';

  out << "\nWrite new pairs that treat the candidates as the attached inputs. Phrase invocation "
         "prompts in the style of the references. Reply with JSON lines only, one pair per "
         "line, each exactly of the form "
         "{\"id\":string,\"type\":\"input_align\"|\"output_align\"|\"reasoning\","
         "\"instruction\":string,\"attachments\":[{\"path\":string,\"modality\":"
         "\"image\"|\"audio\"|\"video\"}],\"invocations\":[{\"model\":\"text-to-image\"|"
         "\"text-to-audio\"|\"text-to-video\",\"prompt\":string}],\"response_text\":string|null}"
         "\n";
  return out.str();
}

TypeMix default_type_mix() {
  return {{InstructionType::input_align, 0.4},
          {InstructionType::output_align, 0.4},
          {InstructionType::reasoning, 0.2}};
}

std::vector<InstructionPair> template_generate(std::span<const Candidate> candidates,
                                               const TypeMix& mix, std::uint64_t seed,
                                               std::size_t n) {
  double total = 0.0;
  for (const auto& [type, w] : mix) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::invalid_argument,
                  "weight for " + std::string(to_string(type)) + " must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::invalid_argument, "type mix weights sum to zero");
  if (n == 0) return {};

  std::vector<Candidate> pool;
  for (const auto& c : candidates)
    if (is_input_modality(c.modality) && !trim(c.description).empty()) pool.push_back(c);
  if (pool.empty())
    throw Error(ErrorCode::insufficient_candidates,
                "need at least one image, audio or video candidate");

  // Cumulative distribution in the fixed enum order.
  std::vector<std::pair<InstructionType, double>> cdf;
  double acc = 0.0;
  for (auto t : kInstructionTypes) {
    auto it = mix.find(t);
    if (it == mix.end() || it->second == 0.0) continue;
    acc += it->second / total;
    cdf.emplace_back(t, acc);
  }
  cdf.back().second = 1.0;

  SplitMix64 rng(mix64(seed, 0x7e57ULL));
  std::vector<InstructionPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    InstructionType type = cdf.back().first;
    for (const auto& [t, c] : cdf)
      if (u < c) {
        type = t;
        break;
      }

    InstructionPair p;
    switch (type) {
      case InstructionType::output_align:
        p = make_output_align(pool[rng.below(pool.size())], rng);
        break;
      case InstructionType::input_align:
        p = make_input_align(pool, rng);
        break;
      case InstructionType::reasoning:
        p = make_reasoning(pool[rng.below(pool.size())], rng);
        break;
    }
    p.id = "tpl-" + std::to_string(seed) + "-" + zero_pad(i, 6);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PairIssue> validate_pair(const InstructionPair& pair, const ModelRegistry& registry) {
  std::vector<PairIssue> issues;
  if (trim(pair.instruction).empty())
    issues.push_back({ErrorCode::instruction_required, "instruction is empty"});

  if (pair.type == InstructionType::output_align) {
    if (pair.invocations.empty())
      issues.push_back({ErrorCode::missing_invocation, "output_align pair has no invocation"});
  } else {
    if (!pair.invocations.empty())
      issues.push_back({ErrorCode::unexpected_invocation,
                        std::string(to_string(pair.type)) + " pair must not carry invocations"});
    if (!pair.response_text || trim(*pair.response_text).empty())
      issues.push_back({ErrorCode::missing_response,
                        std::string(to_string(pair.type)) + " pair needs response_text"});
  }

  for (std::size_t i = 0; i < pair.invocations.size(); ++i) {
    const auto& inv = pair.invocations[i];
    const std::string at = "invocation " + std::to_string(i) + ": ";
    if (registry.resolve(inv.model) == nullptr)
      issues.push_back({ErrorCode::unknown_model_kind, at + "unknown model kind \"" + inv.model + "\""});
    if (inv.prompt.empty())
      issues.push_back({ErrorCode::empty_prompt, at + "prompt is empty"});
    else if (inv.prompt.size() > kMaxPromptBytes)
      issues.push_back({ErrorCode::prompt_too_long, at + "prompt too long"});
  }

  for (std::size_t i = 0; i < pair.attachments.size(); ++i) {
    const auto& a = pair.attachments[i];
    const std::string at = "attachment " + std::to_string(i) + ": ";
    if (!valid_attachment_path(a.path))
      issues.push_back({ErrorCode::dangling_attachment, at + "path is not a valid file path"});
    if (!is_input_modality(a.modality))
      issues.push_back({ErrorCode::dangling_attachment, at + "modality must be image, audio or video"});
  }
  return issues;
}

std::string pair_to_json(const InstructionPair& pair) {
  ordered_json j;
  j["id"] = pair.id;
  j["type"] = std::string(to_string(pair.type));
  j["instruction"] = pair.instruction;
  j["attachments"] = ordered_json::array();
  for (const auto& a : pair.attachments)
    j["attachments"].push_back({{"path", a.path}, {"modality", std::string(to_string(a.modality))}});
  j["invocations"] = ordered_json::array();
  for (const auto& inv : pair.invocations)
    j["invocations"].push_back({{"model", inv.model}, {"prompt", inv.prompt}});
  j["response_text"] = pair.response_text ? ordered_json(*pair.response_text) : ordered_json(nullptr);
  return j.dump();
}

InstructionPair pair_from_line(std::string_view line, ParseMode mode, std::string_view fallback_id) {
  const std::string_view body = trim(line);
  if (!relaxed::is_valid_utf8(body)) malformed("line is not valid UTF-8");
  auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (!j.is_discarded() && j.is_object() && j.contains("id")) return pair_from_canonical(j);
  if (mode == ParseMode::strict) {
    if (j.is_discarded()) malformed("line is not valid JSON");
    return pair_from_canonical(j);
  }
  auto lit = relaxed::parse_document(body);
  if (!lit) malformed("line is neither canonical JSON nor the two-key form");
  return pair_from_two_key_form(*lit, fallback_id);
}

void write_dataset(std::span<const InstructionPair> pairs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  for (const auto& p : pairs) out << pair_to_json(p) << '\n';
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path.string());
}

std::vector<LineReport> scan_dataset(const std::filesystem::path& path, ParseMode mode) {
  std::vector<LineReport> reports;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    LineReport r;
    r.line = i + 1;
    try {
      r.pair = pair_from_line(lines[i], mode, "line-" + std::to_string(i + 1));
    } catch (const Error& e) {
      r.error = e.what();
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<InstructionPair> read_dataset(const std::filesystem::path& path, ParseMode mode) {
  std::vector<InstructionPair> pairs;
  for (auto& r : scan_dataset(path, mode)) {
    if (!r.pair) throw Error(ErrorCode::malformed_line, "line " + std::to_string(r.line) + ": " + r.error);
    pairs.push_back(std::move(*r.pair));
  }
  return pairs;
}

std::vector<Candidate> load_candidates(const std::filesystem::path& path) {
  std::vector<Candidate> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    auto m = tab == std::string_view::npos ? std::nullopt : modality_from_string(trim(line.substr(0, tab)));
    if (!m || !is_input_modality(*m))
      throw Error(ErrorCode::config_error, path.string() + ":" + std::to_string(i + 1) +
                                               ": expected image|audio|video<TAB>description");
    out.push_back({std::string(trim(line.substr(tab + 1))), *m});
  }
  return out;
}

std::vector<std::string> load_references(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const auto& line : read_lines(path)) {
    auto t = trim(line);
    if (!t.empty() && t.front() != '#') out.emplace_back(t);
  }
  return out;
}

QueryBundle sample_bundle(std::span<const InstructionPair> seed_pool,
                          std::span<const Candidate> candidate_pool,
                          std::span<const std::string> reference_pool, const BundleSizes& sizes,
                          std::uint64_t seed) {
  SplitMix64 rng(mix64(seed, 0xb0d1eULL));
  auto pick = [&rng](std::size_t pool, std::size_t want) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    want = std::min(want, pool);
    for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + rng.below(pool - i)]);
    idx.resize(want);
    return idx;
  };
  QueryBundle b;
  for (auto i : pick(seed_pool.size(), sizes.seeds)) b.seeds.push_back(seed_pool[i]);
  for (auto i : pick(candidate_pool.size(), sizes.candidates)) b.candidates.push_back(candidate_pool[i]);
  for (auto i : pick(reference_pool.size(), sizes.references)) b.references.push_back(reference_pool[i]);
  return b;
}

std::vector<ChatMessage> generation_messages(const QueryBundle& bundle, std::size_t request) {
  return {
      {"system", "You generate instruction-invocation training data as JSON lines."},
      {"user", assemble_query(bundle) + "\nBatch " + std::to_string(request) + "."},
  };
}

GenerationResult generate_pairs_llm(ChatClient& client, const QueryBundle& bundle, std::size_t n,
                                    const ModelRegistry& registry,
                                    const GenerationOptions& options) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "n must be >= 1");
  (void)assemble_query(bundle);  // surfaces empty_bundle before any request

  const std::size_t max_requests = options.max_requests ? options.max_requests : 2 * n + 2;
  const std::size_t parallelism = std::max<std::size_t>(client.config().parallelism, 1);
  GenerationResult result;

  auto consume = [&](std::size_t request, const std::string& completion) {
    std::istringstream lines(completion);
    std::string line;
    std::size_t line_no = 0;
    // Every line is checked so rejects are reported; valid pairs beyond n are dropped.
    while (std::getline(lines, line)) {
      ++line_no;
      auto body = trim(line);
      if (body.empty() || body.starts_with("```")) continue;
      const std::string id = "llm-" + std::to_string(request) + "-" + std::to_string(line_no);
      try {
        auto pair = pair_from_line(body, ParseMode::lenient, id);
        pair.id = id;
        auto issues = validate_pair(pair, registry);
        if (!issues.empty()) {
          std::string reason;
          for (const auto& is : issues) reason += (reason.empty() ? "" : "; ") + std::string(to_string(is.code)) + ": " + is.message;
          result.rejects.push_back({request, line_no, std::string(body), reason});
          continue;
        }
        if (result.pairs.size() < n) result.pairs.push_back(std::move(pair));
      } catch (const Error& e) {
        result.rejects.push_back({request, line_no, std::string(body), e.what()});
      }
    }
  };

  std::size_t next = 0;
  while (result.pairs.size() < n && next < max_requests && !result.exhausted) {
    const std::size_t wave = std::min(parallelism, max_requests - next);
    std::vector<std::future<std::string>> inflight;
    for (std::size_t w = 0; w < wave; ++w) {
      const std::size_t request = next + w;
      inflight.push_back(std::async(wave > 1 ? std::launch::async : std::launch::deferred,
                                    [&client, &bundle, request] {
                                      auto messages = generation_messages(bundle, request);
                                      return client.complete(messages);
                                    }));
    }
    for (std::size_t w = 0; w < wave; ++w) {
      const std::size_t request = next + w;
      std::string completion;
      try {
        completion = inflight[w].get();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::fixture_miss || request == 0) throw;
        result.exhausted = true;
        break;
      }
      ++result.requests;
      consume(request, completion);
    }
    next += wave;
  }
  return result;
}

}  // namespace polymodal
