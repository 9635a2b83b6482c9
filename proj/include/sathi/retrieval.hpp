#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "sathi/common.hpp"
#include "sathi/curation.hpp"

namespace sathi::retrieval {

inline constexpr std::size_t kDim = 768;
inline constexpr std::uint16_t kIndexFormatVersion = 1;

/// A unit-length 768-d embedding.
struct EmbeddingVector {
  std::array<float, kDim> values{};

  std::span<const float> span() const noexcept { return values; }
  bool operator==(const EmbeddingVector&) const = default;
};

class EmbedderError : public Error {
 public:
  using Error::Error;
};
class DuplicateId : public Error {
 public:
  using Error::Error;
};
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// Deterministic text -> vector map. Implementations are safe for
/// concurrent use.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
  virtual std::size_t dim() const noexcept { return kDim; }
  virtual std::string name() const = 0;
};

/// Signed feature hashing of character 3-grams into 768 buckets, followed by
/// L2 normalisation. Integer counting keeps it bit-identical everywhere.
class HashingEmbedder final : public Embedder {
 public:
  EmbeddingVector embed(std::string_view text) const override;
  std::string name() const override { return "hashing-3gram"; }
};

/// POST {texts: [...]} -> {vectors: [[768 floats], ...]}.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string endpoint, std::chrono::milliseconds timeout,
               std::size_t batch_size = 64);
  EmbeddingVector embed(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override;
  std::string name() const override { return "http:" + endpoint_; }

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  std::size_t batch_size_;
};

/// Scales to unit L2 norm (accumulated in double). Throws EmbedderError for
/// a zero or non-finite vector.
EmbeddingVector normalized(std::span<const float> values);

struct IndexedPassage {
  std::string passage_id;
  EmbeddingVector vector;
  std::string text;
  std::map<std::string, std::string> meta;

  bool operator==(const IndexedPassage&) const = default;
};

struct RetrievalResult {
  std::string passage_id;
  double score = 0.0;  // cosine similarity
  std::string text;
};

/// Immutable exact cosine index. Searches may run concurrently.
class VectorIndex {
 public:
  VectorIndex() = default;
  /// Throws DuplicateId.
  explicit VectorIndex(std::vector<IndexedPassage> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t dim() const noexcept { return kDim; }
  std::uint16_t version() const noexcept { return kIndexFormatVersion; }
  std::span<const IndexedPassage> entries() const noexcept { return entries_; }

  /// Top min(k, size) entries by cosine, ties broken by passage id.
  std::vector<RetrievalResult> search(std::span<const float> query, std::size_t k) const;

  bool operator==(const VectorIndex& other) const { return entries_ == other.entries_; }

 private:
  std::vector<IndexedPassage> entries_;
};

/// One entry per passage, in input order.
VectorIndex build_index(std::span<const curation::Passage> passages, const Embedder& embedder);

std::vector<RetrievalResult> search(const VectorIndex& index, std::span<const float> query,
                                    std::size_t k);

inline constexpr double kDefaultScoreFloor = 0.25;

/// Best match when it clears the floor; nullopt means "no context" and the
/// caller must not invent grounding.
std::optional<RetrievalResult> retrieve_context(const VectorIndex& index,
                                                std::string_view enriched_query,
                                                const Embedder& embedder,
                                                double score_floor = kDefaultScoreFloor);

// Binary format (little-endian):
//   "SATH" u16 version u16 dim u64 count
//   per entry: u32 len + id, u32 len + text, u32 meta count
//              + (u32 len + key, u32 len + value)*, dim x f32
//   u64 FNV-1a of all preceding bytes
std::string serialize_index(const VectorIndex& index);
VectorIndex deserialize_index(std::string_view bytes);
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace sathi::retrieval
