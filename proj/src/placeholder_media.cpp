#include "polymodal/placeholder_media.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "polymodal/common.hpp"

namespace polymodal {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_text(std::vector<std::uint8_t>& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

std::uint8_t byte_of(SplitMix64& rng) {
  return static_cast<std::uint8_t>(rng.next() >> 56);
}

std::vector<std::uint8_t> render_image(SplitMix64& rng) {
  constexpr int n = kPlaceholderImageSize;
  std::vector<std::uint8_t> out;
  put_text(out, "P6\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n");
  out.reserve(out.size() + n * n * 3);
  for (int i = 0; i < n * n * 3; ++i) out.push_back(byte_of(rng));
  return out;
}

std::vector<std::uint8_t> render_audio(double freq, SplitMix64& rng) {
  constexpr std::uint32_t rate = kPlaceholderSampleRate;
  constexpr std::uint32_t samples = rate;  // one second
  constexpr std::uint32_t data_bytes = samples * 2;
  const double phase = rng.uniform() * 2.0 * std::numbers::pi;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_text(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_text(out, "WAVE");
  put_text(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);         // PCM
  put_u16(out, 1);         // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);  // byte rate
  put_u16(out, 2);         // block align
  put_u16(out, 16);        // bits per sample
  put_text(out, "data");
  put_u32(out, data_bytes);
  for (std::uint32_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double v = 0.5 * std::sin(2.0 * std::numbers::pi * freq * t + phase);
    put_u16(out, static_cast<std::uint16_t>(
                     static_cast<std::int16_t>(std::lround(v * 32767.0))));
  }
  return out;
}

std::vector<std::uint8_t> render_video(SplitMix64& rng) {
  constexpr int n = kPlaceholderImageSize;
  constexpr int chroma = n / 2;
  std::vector<std::uint8_t> out;
  put_text(out, "YUV4MPEG2 W64 H64 F8:1 Ip A1:1 C420\n");

  const std::uint8_t base = byte_of(rng);
  const int dx = 1 + static_cast<int>(rng.below(4));
  const int dy = 1 + static_cast<int>(rng.below(4));
  for (int f = 0; f < kPlaceholderVideoFrames; ++f) {
    put_text(out, "FRAME\n");
    // Luma: a diagonal ramp drifting a few pixels per frame.
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        out.push_back(static_cast<std::uint8_t>(base + 2 * (x + f * dx) +
                                                2 * (y + f * dy)));
    const std::uint8_t u = byte_of(rng);
    const std::uint8_t v = byte_of(rng);
    out.insert(out.end(), chroma * chroma, u);
    out.insert(out.end(), chroma * chroma, v);
  }
  return out;
}

}  // namespace

double placeholder_tone_hz(std::string_view kind, std::string_view prompt) {
  return 200.0 + static_cast<double>(invocation_hash(kind, prompt) % 1800);
}

std::string_view artifact_extension(std::string_view kind) {
  auto m = modality_of_kind(kind);
  if (!m) throw Error(ErrorCode::unknown_model_kind, std::string(kind));
  switch (*m) {
    case Modality::image: return "ppm";
    case Modality::audio: return "wav";
    case Modality::video: return "y4m";
    case Modality::text: break;
  }
  throw Error(ErrorCode::unknown_model_kind, std::string(kind));
}

std::vector<std::uint8_t> render_placeholder(std::string_view kind,
                                             std::string_view prompt,
                                             std::uint64_t seed) {
  auto m = modality_of_kind(kind);
  if (!m) throw Error(ErrorCode::unknown_model_kind, std::string(kind));
  const std::uint64_t h = invocation_hash(kind, prompt);
  SplitMix64 rng(mix64(h, seed));
  switch (*m) {
    case Modality::image: return render_image(rng);
    case Modality::audio: return render_audio(placeholder_tone_hz(kind, prompt), rng);
    case Modality::video: return render_video(rng);
    case Modality::text: break;
  }
  throw Error(ErrorCode::unknown_model_kind, std::string(kind));
}

}  // namespace polymodal
