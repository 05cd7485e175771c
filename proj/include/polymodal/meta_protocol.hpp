#pragma once

// Meta-response data model: the structured text a language backend emits,
// holding free text plus an ordered list of generator invocations.
//
// Canonical wire form (single line, no insignificant whitespace):
//   {"text":"...","invocations":[{"model":"text-to-image","prompt":"..."}]}

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "polymodal/common.hpp"

namespace polymodal {

class ModelRegistry;

struct Invocation {
  std::string model;
  std::string prompt;

  friend bool operator==(const Invocation&, const Invocation&) = default;
};

struct MetaResponse {
  std::string text;
  std::vector<Invocation> invocations;

  friend bool operator==(const MetaResponse&, const MetaResponse&) = default;
};

enum class ParseMode { strict, lenient };

std::string_view to_string(ParseMode mode);

struct ParseWarning {
  std::size_t offset = 0;
  std::string message;

  friend bool operator==(const ParseWarning&, const ParseWarning&) = default;
};

struct ParseDiagnostics {
  ParseMode mode = ParseMode::strict;
  std::vector<ParseWarning> warnings;
  std::size_t consumed_bytes = 0;

  friend bool operator==(const ParseDiagnostics&,
                         const ParseDiagnostics&) = default;
};

struct ParseResult {
  MetaResponse meta;
  ParseDiagnostics diagnostics;
};

/// Parses raw backend text.
///
/// Strict mode accepts only the canonical wire form (optionally followed by
/// one line terminator). Lenient mode also accepts non-canonical JSON with
/// the same schema, and recovers tuple lists such as
/// `[("text-to-image", "A photo of a cat")]` from anywhere in free text,
/// emitting one warning per recovered invocation. Text outside recovered
/// spans becomes the response text.
///
/// Throws Error with malformed_meta, empty_meta or prompt_too_long.
ParseResult parse_meta_response(std::string_view raw, ParseMode mode);

/// Canonical wire form. Throws Error(invariant_violation) when `m` is empty
/// or holds an over-long prompt. Model kinds and empty prompts are semantic
/// and left to validate_invocations, so anything the parser accepts can be
/// serialized.
std::string serialize_meta_response(const MetaResponse& m);

struct ValidationError {
  ErrorCode code = ErrorCode::invalid_argument;
  std::size_t index = 0;
  std::string message;

  friend bool operator==(const ValidationError&,
                         const ValidationError&) = default;
};

/// Checks every invocation is executable against `registry`. Returns an
/// empty list when the meta-response is fully routable. Never throws for
/// content problems; throws Error(registry_not_finalized) on misuse.
std::vector<ValidationError> validate_invocations(const MetaResponse& m,
                                                  const ModelRegistry& registry);

}  // namespace polymodal
