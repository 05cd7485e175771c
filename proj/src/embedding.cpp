#include "polymodal/embedding.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace polymodal {
namespace {

constexpr std::array<char, 4> kMagic{'M', 'V', 'E', 'C'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 1 + 1 + 4;

std::uint8_t modality_tag(Modality m) {
  switch (m) {
    case Modality::image: return 0;
    case Modality::audio: return 1;
    case Modality::video: return 2;
    case Modality::text: break;
  }
  throw Error(ErrorCode::invalid_argument, "text has no MVEC modality tag");
}

std::optional<Modality> modality_from_tag(std::uint8_t tag) {
  switch (tag) {
    case 0: return Modality::image;
    case 1: return Modality::audio;
    case 2: return Modality::video;
    default: return std::nullopt;
  }
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

EmbeddingVector make_embedding(Modality modality, Eigen::VectorXd values) {
  const double norm = values.norm();
  if (!(std::abs(norm - 1.0) <= kUnitNormTolerance))
    throw Error(ErrorCode::not_normalized,
                "embedding norm " + std::to_string(norm) + " is not 1");
  return {modality, std::move(values)};
}

EmbeddingVector encode_stub(std::span<const std::uint8_t> bytes, Modality modality,
                            Eigen::Index dim, std::uint64_t seed) {
  if (bytes.empty()) throw Error(ErrorCode::empty_input, "nothing to encode");
  if (dim < 1) throw Error(ErrorCode::invalid_argument, "embedding dim must be >= 1");

  SplitMix64 rng(mix64(mix64(fnv1a64(bytes), static_cast<std::uint64_t>(modality)), seed));
  Eigen::VectorXd v(dim);
  // A Gaussian vector has no preferred direction once normalized; redraw in
  // the (practically impossible) all-zero case.
  do {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.gaussian();
  } while (v.squaredNorm() == 0.0);
  v /= v.norm();
  return {modality, std::move(v)};
}

EmbeddingVector load_embedding(const std::filesystem::path& path,
                               std::optional<Eigen::Index> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  if (bytes.size() < kHeaderBytes ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw Error(ErrorCode::bad_magic, path.string() + " is not an MVEC file");
  if (bytes[4] != kVersion)
    throw Error(ErrorCode::bad_magic,
                "unsupported MVEC version " + std::to_string(bytes[4]));
  auto modality = modality_from_tag(bytes[5]);
  if (!modality)
    throw Error(ErrorCode::bad_magic,
                "unknown MVEC modality tag " + std::to_string(bytes[5]));

  const std::uint32_t dim = read_u32(bytes.data() + 6);
  if (dim == 0 || bytes.size() != kHeaderBytes + std::size_t{dim} * 4)
    throw Error(ErrorCode::dim_mismatch,
                "header declares " + std::to_string(dim) + " values but payload has " +
                    std::to_string((bytes.size() - kHeaderBytes) / 4));
  if (expected_dim && *expected_dim != static_cast<Eigen::Index>(dim))
    throw Error(ErrorCode::dim_mismatch, "expected dim " + std::to_string(*expected_dim) +
                                             ", file has " + std::to_string(dim));

  Eigen::VectorXd v(dim);
  for (std::uint32_t i = 0; i < dim; ++i)
    v[i] = std::bit_cast<float>(read_u32(bytes.data() + kHeaderBytes + 4 * i));

  const double norm = v.norm();
  if (!(std::abs(norm - 1.0) <= kLoadNormTolerance))
    throw Error(ErrorCode::not_normalized,
                path.string() + " has norm " + std::to_string(norm));
  if (std::abs(norm - 1.0) > kUnitNormTolerance) v /= norm;
  return {*modality, std::move(v)};
}

void write_embedding(const std::filesystem::path& path, const EmbeddingVector& v) {
  const std::uint8_t tag = modality_tag(v.modality);
  std::vector<std::uint8_t> bytes(kMagic.begin(), kMagic.end());
  bytes.push_back(kVersion);
  bytes.push_back(tag);
  auto put_u32 = [&](std::uint32_t x) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  };
  put_u32(static_cast<std::uint32_t>(v.dim()));
  for (Eigen::Index i = 0; i < v.dim(); ++i)
    put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(v.values[i])));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

}  // namespace polymodal
