#pragma once

// Unit-norm modality embeddings: a deterministic encoder stub and the MVEC
// file format for plugging in vectors from a real encoder.
//
// MVEC layout (little endian):
//   "MVEC" | version u8 = 1 | modality u8 (0 image, 1 audio, 2 video)
//   | dim u32 | dim x f32

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include <Eigen/Core>

#include "polymodal/common.hpp"

namespace polymodal {

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kLoadNormTolerance = 1e-3;

struct EmbeddingVector {
  Modality modality = Modality::image;
  Eigen::VectorXd values;

  Eigen::Index dim() const noexcept { return values.size(); }
};

/// Wraps `values` after checking the unit-norm invariant; throws
/// not_normalized otherwise.
EmbeddingVector make_embedding(Modality modality, Eigen::VectorXd values);

/// Pseudo-embedding: a Gaussian stream seeded from FNV-1a(bytes), the
/// modality tag and `seed`, normalized to unit length.
EmbeddingVector encode_stub(std::span<const std::uint8_t> bytes, Modality modality,
                            Eigen::Index dim, std::uint64_t seed);

/// Reads an MVEC file. Vectors within 1e-3 of unit norm are re-normalized
/// (left untouched when already within 1e-6). Throws bad_magic,
/// dim_mismatch (header vs payload, or vs `expected_dim`), not_normalized.
EmbeddingVector load_embedding(const std::filesystem::path& path,
                               std::optional<Eigen::Index> expected_dim = {});

/// Writes `v` as MVEC. Values are stored as f32.
void write_embedding(const std::filesystem::path& path, const EmbeddingVector& v);

}  // namespace polymodal
