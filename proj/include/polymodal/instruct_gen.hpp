#pragma once

// Instruction-invocation dataset construction: the three instruction
// categories, query assembly for a chat-completion API, an offline template
// generator, validation, and JSONL persistence.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polymodal/chat_client.hpp"
#include "polymodal/common.hpp"
#include "polymodal/meta_protocol.hpp"

namespace polymodal {

class ModelRegistry;

enum class InstructionType { input_align, output_align, reasoning };

inline constexpr InstructionType kInstructionTypes[] = {
    InstructionType::input_align, InstructionType::output_align, InstructionType::reasoning};

std::string_view to_string(InstructionType t);
std::optional<InstructionType> instruction_type_from_string(std::string_view s);

struct Attachment {
  std::string path;
  Modality modality = Modality::image;

  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct InstructionPair {
  std::string id;
  InstructionType type = InstructionType::output_align;
  std::string instruction;
  std::vector<Attachment> attachments;
  std::vector<Invocation> invocations;
  std::optional<std::string> response_text;

  friend bool operator==(const InstructionPair&, const InstructionPair&) = default;
};

/// Text description standing in for a real input of the given modality.
struct Candidate {
  std::string description;
  Modality modality = Modality::image;
};

struct QueryBundle {
  std::vector<InstructionPair> seeds;
  std::vector<Candidate> candidates;
  std::vector<std::string> references;
  std::string template_id = "output-align-v1";
  InstructionType target = InstructionType::output_align;
};

/// Prompt text with SEEDS, CANDIDATES and REFERENCES sections (in that
/// order) followed by an output-format directive. Throws empty_bundle.
std::string assemble_query(const QueryBundle& bundle);

using TypeMix = std::map<InstructionType, double>;

/// 0.4 input_align / 0.4 output_align / 0.2 reasoning.
TypeMix default_type_mix();

/// Deterministic offline generator. Throws invalid_argument for a bad mix
/// and insufficient_candidates when no usable candidate exists.
std::vector<InstructionPair> template_generate(std::span<const Candidate> candidates,
                                               const TypeMix& mix, std::uint64_t seed,
                                               std::size_t n);

struct PairIssue {
  ErrorCode code = ErrorCode::invalid_argument;
  std::string message;

  friend bool operator==(const PairIssue&, const PairIssue&) = default;
};

/// Empty when the pair is valid.
std::vector<PairIssue> validate_pair(const InstructionPair& pair, const ModelRegistry& registry);

// ---------------------------------------------------------------------------
// JSONL

/// Canonical single-line JSON for one pair.
std::string pair_to_json(const InstructionPair& pair);

/// Strict mode takes canonical lines only. Lenient mode also takes the
/// two-key form `{"instruction": [text, file...], "invocation": [(kind,
/// prompt), ...]}`, mapping file names to attachments. Throws
/// malformed_line (without a line number).
InstructionPair pair_from_line(std::string_view line, ParseMode mode,
                               std::string_view fallback_id = "");

void write_dataset(std::span<const InstructionPair> pairs, const std::filesystem::path& path);

struct LineReport {
  std::size_t line = 0;  // 1-based
  std::optional<InstructionPair> pair;
  std::string error;
};

/// Parses every non-blank line, collecting failures instead of throwing.
std::vector<LineReport> scan_dataset(const std::filesystem::path& path, ParseMode mode);

/// Throws malformed_line naming the first bad line.
std::vector<InstructionPair> read_dataset(const std::filesystem::path& path,
                                          ParseMode mode = ParseMode::strict);

/// `modality<TAB>description` per line; '#' starts a comment.
std::vector<Candidate> load_candidates(const std::filesystem::path& path);
/// One reference prompt per non-blank line.
std::vector<std::string> load_references(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// API-backed generation

struct BundleSizes {
  std::size_t seeds = 3;
  std::size_t candidates = 4;
  std::size_t references = 3;
};

/// Random draw (without replacement) from the pools.
QueryBundle sample_bundle(std::span<const InstructionPair> seed_pool,
                          std::span<const Candidate> candidate_pool,
                          std::span<const std::string> reference_pool, const BundleSizes& sizes,
                          std::uint64_t seed);

struct Reject {
  std::size_t request = 0;
  std::size_t line = 0;  // 1-based within the completion
  std::string text;
  std::string reason;
};

struct GenerationResult {
  std::vector<InstructionPair> pairs;
  std::vector<Reject> rejects;
  std::size_t requests = 0;
  bool exhausted = false;  // replay fixture ran out before n pairs
};

/// Messages for the `request`-th query built from `bundle`. The request
/// index is part of the prompt, so every query has its own fixture key.
std::vector<ChatMessage> generation_messages(const QueryBundle& bundle, std::size_t request);

struct GenerationOptions {
  /// 0 picks 2 * n + 2.
  std::size_t max_requests = 0;
};

/// Issues queries until `n` valid pairs are collected. Each completion is
/// split into lines; lines that fail to parse or validate become rejects.
/// Up to config().parallelism requests are in flight at once; results are
/// consumed in request order. Throws invalid_argument for n == 0 and
/// fixture_miss when a replay fixture lacks the very first request.
GenerationResult generate_pairs_llm(ChatClient& client, const QueryBundle& bundle, std::size_t n,
                                    const ModelRegistry& registry,
                                    const GenerationOptions& options = {});

}  // namespace polymodal
