#pragma once

// Deterministic stand-ins for text-to-x generators. Every byte is a pure
// function of (kind, prompt, seed).
//
//   image: PPM P6, 64x64 RGB
//   audio: WAV PCM16 mono 16 kHz, 1 s sine, f = 200 + (hash mod 1800) Hz
//   video: Y4M 4:2:0, 64x64, 8 frames

#include <cstdint>
#include <string_view>
#include <vector>

namespace polymodal {

inline constexpr int kPlaceholderImageSize = 64;
inline constexpr int kPlaceholderSampleRate = 16000;
inline constexpr int kPlaceholderVideoFrames = 8;

/// Throws Error(unknown_model_kind) for anything but text-to-{image,audio,video}.
std::vector<std::uint8_t> render_placeholder(std::string_view kind,
                                             std::string_view prompt,
                                             std::uint64_t seed);

/// Sine frequency used by the audio placeholder for `(kind, prompt)`.
double placeholder_tone_hz(std::string_view kind, std::string_view prompt);

/// File extension (without dot) for artifacts of a model kind.
std::string_view artifact_extension(std::string_view kind);

}  // namespace polymodal
