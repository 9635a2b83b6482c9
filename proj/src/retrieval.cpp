#include "sathi/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "sathi/http_client.hpp"

namespace sathi::retrieval {

static_assert(std::endian::native == std::endian::little,
              "index I/O assumes a little-endian host");

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

EmbeddingVector normalized(std::span<const float> values) {
  if (values.size() != kDim) {
    throw EmbedderError("embedding has " + std::to_string(values.size()) +
                        " dimensions, expected " + std::to_string(kDim));
  }
  double sq = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw EmbedderError("embedding has a non-finite value");
    sq += static_cast<double>(v) * static_cast<double>(v);
  }
  if (sq == 0.0) throw EmbedderError("embedding is the zero vector");
  const double norm = std::sqrt(sq);
  EmbeddingVector out;
  for (std::size_t i = 0; i < kDim; ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(values[i]) / norm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hashing stub

namespace {

constexpr std::uint64_t kHashSeed = 0x5A7E1D0C0FFEE123ULL;

}  // namespace

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
  std::u32string cps;
  try {
    cps = decode_utf8(text);
  } catch (const Error& e) {
    throw EmbedderError(e.what());
  }
  // Lowercase ASCII, collapse whitespace, pad with one space per side.
  std::u32string norm = U" ";
  for (char32_t c : cps) {
    if (is_space(c)) {
      if (norm.back() != U' ') norm.push_back(U' ');
      continue;
    }
    norm.push_back(c >= U'A' && c <= U'Z' ? c - U'A' + U'a' : c);
  }
  if (norm.back() != U' ') norm.push_back(U' ');
  if (norm.size() < 3) throw EmbedderError("cannot embed empty text");

  std::array<std::int64_t, kDim> counts{};
  std::string gram;
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
    gram.clear();
    for (std::size_t k = 0; k < 3; ++k) append_utf8(gram, norm[i + k]);
    const std::uint64_t h = fnv1a64(gram, kHashSeed);
    const std::size_t bucket = static_cast<std::size_t>(h % kDim);
    counts[bucket] += ((h >> 40) & 1U) ? -1 : 1;
  }
  if (std::all_of(counts.begin(), counts.end(), [](auto c) { return c == 0; })) {
    // Every 3-gram cancelled out; fall back to a whole-text feature.
    counts[fnv1a64(encode_utf8(norm), kHashSeed) % kDim] = 1;
  }
  std::int64_t sq = 0;
  for (auto c : counts) sq += c * c;
  const double norm_len = std::sqrt(static_cast<double>(sq));
  EmbeddingVector out;
  for (std::size_t i = 0; i < kDim; ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(counts[i]) / norm_len);
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP embedder

HttpEmbedder::HttpEmbedder(std::string endpoint, std::chrono::milliseconds timeout,
                           std::size_t batch_size)
    : endpoint_(std::move(endpoint)), timeout_(timeout), batch_size_(std::max<std::size_t>(1, batch_size)) {}

EmbeddingVector HttpEmbedder::embed(std::string_view text) const {
  const std::string t(text);
  return embed_batch(std::span(&t, 1)).front();
}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const auto chunk = texts.subspan(start, std::min(batch_size_, texts.size() - start));
    nlohmann::json body = {{"texts", nlohmann::json::array()}};
    for (const auto& t : chunk) body["texts"].push_back(t);
    nlohmann::json res;
    try {
      res = http::post_json(endpoint_, body, timeout_);
    } catch (const http::HttpError& e) {
      throw EmbedderError(e.what());
    }
    try {
      const auto& vecs = res.at("vectors");
      if (!vecs.is_array() || vecs.size() != chunk.size()) {
        throw EmbedderError("embedding service returned the wrong number of vectors");
      }
      for (const auto& v : vecs) out.push_back(normalized(v.get<std::vector<float>>()));
    } catch (const nlohmann::json::exception& e) {
      throw EmbedderError(std::string("malformed embedding response: ") + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index

VectorIndex::VectorIndex(std::vector<IndexedPassage> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!seen.insert(e.passage_id).second) {
      throw DuplicateId("duplicate passage id '" + e.passage_id + "'");
    }
  }
}

std::vector<RetrievalResult> VectorIndex::search(std::span<const float> query,
                                                 std::size_t k) const {
  if (query.size() != kDim) {
    throw DimensionMismatch("query has " + std::to_string(query.size()) +
                            " dimensions, index has " + std::to_string(kDim));
  }
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  struct Scored {
    double score;
    std::size_t idx;
  };
  std::vector<Scored> scored;
  scored.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& v = entries_[i].vector.values;
    double dot = 0.0;
    for (std::size_t d = 0; d < kDim; ++d) {
      dot += static_cast<double>(v[d]) * static_cast<double>(query[d]);
    }
    scored.push_back({dot, i});
  }
  const std::size_t n = std::min(k, scored.size());
  auto better = [this](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return entries_[a.idx].passage_id < entries_[b.idx].passage_id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                    scored.end(), better);
  std::vector<RetrievalResult> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = entries_[scored[i].idx];
    out.push_back({e.passage_id, scored[i].score, e.text});
  }
  return out;
}

VectorIndex build_index(std::span<const curation::Passage> passages, const Embedder& embedder) {
  if (embedder.dim() != kDim) {
    throw DimensionMismatch("embedder produces " + std::to_string(embedder.dim()) +
                            "-d vectors, index needs " + std::to_string(kDim));
  }
  std::vector<IndexedPassage> entries;
  entries.reserve(passages.size());
  std::unordered_set<std::string_view> seen;
  for (const auto& p : passages) {
    if (!seen.insert(p.id).second) throw DuplicateId("duplicate passage id '" + p.id + "'");
    IndexedPassage e;
    e.passage_id = p.id;
    e.text = p.text;
    e.meta = p.meta;
    try {
      e.vector = embedder.embed(p.text);
    } catch (const EmbedderError& err) {
      throw EmbedderError("passage '" + p.id + "': " + err.what());
    }
    entries.push_back(std::move(e));
  }
  return VectorIndex(std::move(entries));
}

std::vector<RetrievalResult> search(const VectorIndex& index, std::span<const float> query,
                                    std::size_t k) {
  return index.search(query, k);
}

std::optional<RetrievalResult> retrieve_context(const VectorIndex& index,
                                                std::string_view enriched_query,
                                                const Embedder& embedder,
                                                double score_floor) {
  if (trim(enriched_query).empty()) throw std::invalid_argument("enriched query is empty");
  if (index.empty()) return std::nullopt;
  const auto q = embedder.embed(enriched_query);
  auto top = index.search(q.span(), 1);
  if (top.empty() || top.front().score < score_floor) return std::nullopt;
  return std::move(top.front());
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[4] = {'S', 'A', 'T', 'H'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(bytes_.substr(pos_, len));
    pos_ += len;
    return s;
  }

  void read_floats(std::span<float> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) throw FormatError("index file is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// Smallest possible serialized entry: three u32 lengths and the vector.
constexpr std::size_t kMinEntryBytes = 3 * sizeof(std::uint32_t) + kDim * sizeof(float);

}  // namespace

std::string serialize_index(const VectorIndex& index) {
  std::string out;
  out.reserve(16 + index.size() * (kMinEntryBytes + 256) + 8);
  out.append(kMagic, 4);
  put<std::uint16_t>(out, kIndexFormatVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(kDim));
  put<std::uint64_t>(out, index.size());
  for (const auto& e : index.entries()) {
    put_str(out, e.passage_id);
    put_str(out, e.text);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.meta.size()));
    for (const auto& [k, v] : e.meta) {
      put_str(out, k);
      put_str(out, v);
    }
    out.append(reinterpret_cast<const char*>(e.vector.values.data()), kDim * sizeof(float));
  }
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

VectorIndex deserialize_index(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an index file (bad magic)");
  }
  Reader r(bytes.substr(4));
  const auto version = r.get<std::uint16_t>();
  if (version != kIndexFormatVersion) {
    throw FormatError("unsupported index format version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint16_t>();
  if (dim != kDim) throw FormatError("index dimension " + std::to_string(dim) + " != 768");
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining() / kMinEntryBytes) throw FormatError("index file is truncated");

  std::vector<IndexedPassage> entries;
  entries.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexedPassage e;
    e.passage_id = r.get_str();
    e.text = r.get_str();
    const auto meta_count = r.get<std::uint32_t>();
    for (std::uint32_t m = 0; m < meta_count; ++m) {
      auto k = r.get_str();
      e.meta[std::move(k)] = r.get_str();
    }
    r.read_floats(e.vector.values);
    entries.push_back(std::move(e));
  }
  if (r.remaining() < sizeof(std::uint64_t)) throw FormatError("index file is truncated");
  if (r.remaining() > sizeof(std::uint64_t)) throw FormatError("index file has trailing bytes");
  const std::size_t body_len = 4 + r.pos();
  const auto stored = r.get<std::uint64_t>();
  if (stored != fnv1a64(bytes.substr(0, body_len))) {
    throw ChecksumError("index checksum mismatch");
  }

  for (const auto& e : entries) {
    double sq = 0.0;
    for (float v : e.vector.values) {
      if (!std::isfinite(v)) throw FormatError("entry '" + e.passage_id + "' has a non-finite value");
      sq += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) {
      throw FormatError("entry '" + e.passage_id + "' is not unit length");
    }
  }
  try {
    return VectorIndex(std::move(entries));
  } catch (const DuplicateId& e) {
    throw FormatError(e.what());
  }
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_file(tmp, serialize_index(index));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move index into place at " + path.string() + ": " + ec.message());
}

VectorIndex load_index(const std::filesystem::path& path) {
  return deserialize_index(read_file(path));
}

}  // namespace sathi::retrieval
