#include "polymodal/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <utility>

namespace polymodal {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::audio: return "audio";
    case Modality::video: return "video";
  }
  return "unknown";
}

std::optional<Modality> modality_from_string(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  if (s == "audio") return Modality::audio;
  if (s == "video") return Modality::video;
  return std::nullopt;
}

std::optional<Modality> modality_of_kind(std::string_view kind) {
  constexpr std::string_view prefix = "text-to-";
  if (!kind.starts_with(prefix)) return std::nullopt;
  auto m = modality_from_string(kind.substr(prefix.size()));
  if (!m || *m == Modality::text) return std::nullopt;
  return m;
}

std::string kind_for(Modality m) {
  return "text-to-" + std::string(to_string(m));
}

std::optional<Modality> modality_from_extension(std::string_view path) {
  auto dot = path.rfind('.');
  auto slash = path.find_last_of("/\\");
  if (dot == std::string_view::npos ||
      (slash != std::string_view::npos && dot < slash))
    return std::nullopt;
  std::string ext(path.substr(dot + 1));
  std::ranges::transform(ext, ext.begin(),
                         [](unsigned char c) { return std::tolower(c); });

  static const std::array<std::pair<std::string_view, Modality>, 20> table{{
      {"ppm", Modality::image},  {"png", Modality::image},
      {"jpg", Modality::image},  {"jpeg", Modality::image},
      {"bmp", Modality::image},  {"gif", Modality::image},
      {"webp", Modality::image}, {"wav", Modality::audio},
      {"mp3", Modality::audio},  {"flac", Modality::audio},
      {"ogg", Modality::audio},  {"m4a", Modality::audio},
      {"mp4", Modality::video},  {"y4m", Modality::video},
      {"avi", Modality::video},  {"mov", Modality::video},
      {"mkv", Modality::video},  {"webm", Modality::video},
      {"txt", Modality::text},   {"md", Modality::text},
  }};
  for (const auto& [e, m] : table)
    if (e == ext) return m;
  return std::nullopt;
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::malformed_meta: return "MalformedMeta";
    case ErrorCode::empty_meta: return "EmptyMeta";
    case ErrorCode::prompt_too_long: return "PromptTooLong";
    case ErrorCode::empty_prompt: return "EmptyPrompt";
    case ErrorCode::invariant_violation: return "InvariantViolation";
    case ErrorCode::unknown_model_kind: return "UnknownModelKind";
    case ErrorCode::duplicate_name: return "DuplicateName";
    case ErrorCode::registry_finalized: return "RegistryFinalized";
    case ErrorCode::registry_not_finalized: return "RegistryNotFinalized";
    case ErrorCode::backend_failure: return "BackendFailure";
    case ErrorCode::empty_bundle: return "EmptyBundle";
    case ErrorCode::transport_error: return "TransportError";
    case ErrorCode::fixture_miss: return "FixtureMiss";
    case ErrorCode::insufficient_candidates: return "InsufficientCandidates";
    case ErrorCode::instruction_required: return "InstructionRequired";
    case ErrorCode::missing_invocation: return "MissingInvocation";
    case ErrorCode::unexpected_invocation: return "UnexpectedInvocation";
    case ErrorCode::missing_response: return "MissingResponse";
    case ErrorCode::dangling_attachment: return "DanglingAttachment";
    case ErrorCode::malformed_line: return "MalformedLine";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::bad_magic: return "BadMagic";
    case ErrorCode::dim_mismatch: return "DimMismatch";
    case ErrorCode::not_normalized: return "NotNormalized";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::modality_mismatch: return "ModalityMismatch";
    case ErrorCode::divergence_detected: return "DivergenceDetected";
    case ErrorCode::attachment_missing: return "AttachmentMissing";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

double SplitMix64::gaussian() noexcept {
  // 1 - uniform() lies in (0, 1], keeping log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace polymodal
