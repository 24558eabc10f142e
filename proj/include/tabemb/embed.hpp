#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabemb/table.hpp"
#include "tabemb/types.hpp"

namespace tabemb {

// Joins sampled cell values into the text fed to the embedding backend.
// Values are trimmed and joined with " | "; the result is capped at
// kSerializedColumnCap characters, truncating at a value boundary. If even
// the first value exceeds the cap it is hard-truncated so the output is
// never empty.
std::string serialize_column(const std::vector<std::string>& values);

inline constexpr size_t kSerializedColumnCap = 4096;
inline constexpr const char* kColumnValueSeparator = " | ";

// A frozen embedding model: stateless, identical text -> identical vector
// for a given backend id. Backends count their own service invocations so
// tests and the CLI can observe cache effectiveness.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  const std::string& id() const { return id_; }
  int dim() const { return dim_; }
  int64_t calls() const { return calls_.load(); }

  Vector embed(const std::string& text);
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts);

 protected:
  EmbeddingBackend(std::string id, int dim);
  virtual std::vector<Vector> embed_batch_impl(const std::vector<std::string>& texts) = 0;

 private:
  std::string id_;
  int dim_;
  std::atomic<int64_t> calls_{0};
};

// Deterministic, dependency-free local embedder: character 3-gram counts
// hashed into dim-4 buckets, plus 4 reserved dimensions (mean value
// length, digit fraction, alpha fraction, value count), L2-normalized.
class LocalHashEmbedder : public EmbeddingBackend {
 public:
  explicit LocalHashEmbedder(int dim = 64);

 protected:
  std::vector<Vector> embed_batch_impl(const std::vector<std::string>& texts) override;
};

struct RemoteBackendConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string model;
  std::string api_key;  // empty: no Authorization header
  int dim = 0;          // expected width; mismatch is a hard error
  int max_attempts = 3;
  int backoff_ms = 250;  // doubled per retry
  int timeout_sec = 30;
};

// Client for the common embeddings-API shape:
//   POST {base_url}/embeddings {"input": [text,...], "model": str}
//   -> {"data": [{"embedding": [f64,...]}, ...]}   (order-preserving)
// Transport failures are retried with exponential backoff; a dimension
// mismatch from the service is a hard error.
class RemoteEmbedder : public EmbeddingBackend {
 public:
  explicit RemoteEmbedder(RemoteBackendConfig config);

 protected:
  std::vector<Vector> embed_batch_impl(const std::vector<std::string>& texts) override;

 private:
  RemoteBackendConfig config_;
  std::string host_origin_;
  std::string path_prefix_;
};

std::unique_ptr<EmbeddingBackend> make_backend_from_flags(const std::string& kind, int dim,
                                                          const std::string& base_url,
                                                          const std::string& model,
                                                          const std::string& api_key);

// Persistent per-backend embedding cache. Storage is an append-only binary
// file of (key hash, d, f32 vector) records with an in-memory index; f64
// vectors are rounded to f32 on insertion, so a hit is bit-identical to
// what the original computation stored. Pipeline code canonicalizes every
// embedding through round_to_f32() whether or not a cache is attached, so
// cached and fresh values agree exactly.
class EmbeddingCache {
 public:
  // In-memory only.
  EmbeddingCache() = default;
  // Backed by <dir>/cache_<sanitized backend_id>.bin.
  EmbeddingCache(const std::filesystem::path& dir, const std::string& backend_id);

  static uint64_t key_for(const std::string& text);

  std::optional<Vector> lookup(uint64_t key) const;
  void store(uint64_t key, const Vector& canonical_f32);
  size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<uint64_t, FloatVector> index_;
  std::filesystem::path file_;  // empty: memory-only
};

// Rounds every entry through f32 and back; the canonical form stored in
// caches and graph pools.
Vector round_to_f32(const Vector& v);

// ColumnEmbedding stage tag.
enum class EmbeddingStage { Initial, Refined };

// sample -> serialize -> embed for every column of a table, cache-first.
// Returns one canonical (f32-exact) initial embedding per column, in
// column order. Errors from the backend carry the column index.
std::vector<Vector> column_embeddings(const Table& table, EmbeddingBackend& backend, int m,
                                      uint64_t seed, EmbeddingCache* cache = nullptr);

}  // namespace tabemb
