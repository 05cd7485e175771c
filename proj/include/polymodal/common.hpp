#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace polymodal {

enum class Modality : std::uint8_t { text, image, audio, video };

std::string_view to_string(Modality m);
std::optional<Modality> modality_from_string(std::string_view s);

/// Modality produced by a "text-to-<modality>" model kind, if the kind is
/// well formed and names one of image, audio or video.
std::optional<Modality> modality_of_kind(std::string_view kind);
std::string kind_for(Modality m);

/// Best-effort modality from a file extension (case-insensitive).
std::optional<Modality> modality_from_extension(std::string_view path);

enum class ErrorCode {
  invalid_argument,
  config_error,
  malformed_meta,
  empty_meta,
  prompt_too_long,
  empty_prompt,
  invariant_violation,
  unknown_model_kind,
  duplicate_name,
  registry_finalized,
  registry_not_finalized,
  backend_failure,
  empty_bundle,
  transport_error,
  fixture_miss,
  insufficient_candidates,
  instruction_required,
  missing_invocation,
  unexpected_invocation,
  missing_response,
  dangling_attachment,
  malformed_line,
  empty_input,
  bad_magic,
  dim_mismatch,
  not_normalized,
  shape_mismatch,
  modality_mismatch,
  divergence_detected,
  attachment_missing,
  io_error,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr std::size_t kMaxPromptBytes = 2048;

// ---------------------------------------------------------------------------
// Hashing and pseudo-random streams. Both are fixed algorithms so that every
// derived byte (placeholder media, stub embeddings, template datasets) is
// stable across platforms and compilers.

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                                std::uint64_t h = kFnvOffset) noexcept {
  for (auto b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = kFnvOffset) noexcept {
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

/// FNV-1a over `kind || 0x00 || prompt`.
constexpr std::uint64_t invocation_hash(std::string_view kind,
                                        std::string_view prompt) noexcept {
  std::uint64_t h = fnv1a64(kind);
  h ^= 0x00;
  h *= kFnvPrime;
  return fnv1a64(prompt, h);
}

/// splitmix64 output function.
constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Order-sensitive combination of two 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix_finalize(a ^ splitmix_finalize(b + 0x9e3779b97f4a7c15ULL));
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix_finalize(state_);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept { return next() % bound; }

  /// Standard normal via Box-Muller. std::normal_distribution is
  /// implementation-defined, so it is not used for seeded streams.
  double gaussian() noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace polymodal
