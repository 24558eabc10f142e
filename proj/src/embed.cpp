#include "tabemb/embed.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "tabemb/util.hpp"

// httplib is header-only; keep it out of our headers.
#include <httplib.h>

namespace tabemb {

using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::string serialize_column(const std::vector<std::string>& values) {
  if (values.empty()) throw ValidationError("serialize_column: empty value list");
  const std::string sep = kColumnValueSeparator;
  std::string out;
  for (const auto& raw : values) {
    std::string v = trim(raw);
    size_t extra = (out.empty() ? 0 : sep.size()) + v.size();
    if (out.size() + extra > kSerializedColumnCap) break;
    if (!out.empty()) out += sep;
    out += v;
  }
  if (out.empty()) {
    // The first value alone exceeds the cap; keep a hard-truncated prefix so
    // the serialization is never empty.
    out = trim(values.front()).substr(0, kSerializedColumnCap);
  }
  return out;
}

EmbeddingBackend::EmbeddingBackend(std::string id, int dim) : id_(std::move(id)), dim_(dim) {
  if (dim_ < 8) throw ValidationError("embedding dimension must be >= 8");
}

Vector EmbeddingBackend::embed(const std::string& text) {
  return embed_batch({text}).front();
}

std::vector<Vector> EmbeddingBackend::embed_batch(const std::vector<std::string>& texts) {
  for (const auto& t : texts)
    if (t.empty()) throw ValidationError("embed: empty text");
  calls_ += static_cast<int64_t>(texts.size());
  auto out = embed_batch_impl(texts);
  if (out.size() != texts.size())
    throw std::runtime_error("backend '" + id() + "' returned " + std::to_string(out.size()) +
                             " vectors for " + std::to_string(texts.size()) + " inputs");
  for (const auto& v : out) {
    if (v.size() != dim_)
      throw std::runtime_error("backend '" + id() + "' returned dimension " +
                               std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    if (!v.allFinite())
      throw std::runtime_error("backend '" + id() + "' returned a non-finite embedding");
  }
  return out;
}

LocalHashEmbedder::LocalHashEmbedder(int dim)
    : EmbeddingBackend("local-ngram-" + std::to_string(dim), dim) {}

std::vector<Vector> LocalHashEmbedder::embed_batch_impl(const std::vector<std::string>& texts) {
  const int buckets = dim() - 4;
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    Vector v = Vector::Zero(dim());
    if (text.size() >= 3) {
      for (size_t i = 0; i + 3 <= text.size(); ++i)
        v[static_cast<int>(fnv1a64_bytes(text.data() + i, 3) % buckets)] += 1.0;
    } else {
      v[static_cast<int>(fnv1a64(text) % buckets)] += 1.0;
    }
    // Reserved statistics dimensions, derived from the serialized form.
    size_t value_count = 1, total_len = 0, digits = 0, alphas = 0;
    const std::string sep = kColumnValueSeparator;
    for (size_t pos = text.find(sep); pos != std::string::npos; pos = text.find(sep, pos + sep.size()))
      ++value_count;
    for (char c : text) {
      if (std::isdigit(static_cast<unsigned char>(c))) ++digits;
      if (std::isalpha(static_cast<unsigned char>(c))) ++alphas;
    }
    total_len = text.size() - (value_count - 1) * sep.size();
    double denom = std::max<size_t>(text.size(), 1);
    v[buckets + 0] = static_cast<double>(total_len) / static_cast<double>(value_count);
    v[buckets + 1] = static_cast<double>(digits) / denom;
    v[buckets + 2] = static_cast<double>(alphas) / denom;
    v[buckets + 3] = static_cast<double>(value_count);
    v /= v.norm();  // norm > 0: the value-count dimension is always >= 1
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

// Splits "http://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ValidationError("base URL must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  if (prefix == "/") prefix.clear();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

RemoteEmbedder::RemoteEmbedder(RemoteBackendConfig config)
    : EmbeddingBackend("remote:" + config.model + "@" + config.base_url, config.dim),
      config_(std::move(config)) {
  std::tie(host_origin_, path_prefix_) = split_url(config_.base_url);
  if (config_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
}

std::vector<Vector> RemoteEmbedder::embed_batch_impl(const std::vector<std::string>& texts) {
  json body;
  body["input"] = texts;
  body["model"] = config_.model;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) {
      auto delay = std::chrono::milliseconds(config_.backoff_ms << (attempt - 2));
      std::this_thread::sleep_for(delay);
    }
    httplib::Client client(host_origin_);
    client.set_connection_timeout(config_.timeout_sec);
    client.set_read_timeout(config_.timeout_sec);
    auto res = client.Post(path_prefix_ + "/embeddings", headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      continue;
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      last_error = std::string("invalid JSON reply: ") + e.what();
      continue;
    }
    if (!reply.contains("data") || !reply["data"].is_array() ||
        reply["data"].size() != texts.size()) {
      last_error = "reply 'data' missing or wrong length";
      continue;
    }
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& item : reply["data"]) {
      const auto& emb = item.at("embedding");
      if (static_cast<int>(emb.size()) != dim())
        throw std::runtime_error("embedding service returned dimension " +
                                 std::to_string(emb.size()) + ", expected " +
                                 std::to_string(dim()));
      Vector v(dim());
      for (int i = 0; i < dim(); ++i) v[i] = emb[static_cast<size_t>(i)].get<double>();
      out.push_back(std::move(v));
    }
    return out;
  }
  throw std::runtime_error("embedding request failed after " +
                           std::to_string(config_.max_attempts) + " attempts; last error: " +
                           last_error);
}

std::unique_ptr<EmbeddingBackend> make_backend_from_flags(const std::string& kind, int dim,
                                                          const std::string& base_url,
                                                          const std::string& model,
                                                          const std::string& api_key) {
  if (kind == "local") return std::make_unique<LocalHashEmbedder>(dim);
  if (kind == "remote") {
    if (base_url.empty()) throw ValidationError("remote backend requires --base-url");
    if (model.empty()) throw ValidationError("remote backend requires --model");
    RemoteBackendConfig cfg;
    cfg.base_url = base_url;
    cfg.model = model;
    cfg.api_key = api_key;
    cfg.dim = dim;
    return std::make_unique<RemoteEmbedder>(std::move(cfg));
  }
  throw ValidationError("unknown backend '" + kind + "' (expected local or remote)");
}

namespace {

std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

}  // namespace

EmbeddingCache::EmbeddingCache(const std::filesystem::path& dir, const std::string& backend_id) {
  std::filesystem::create_directories(dir);
  file_ = dir / ("cache_" + sanitize_id(backend_id) + ".bin");
  if (!std::filesystem::exists(file_)) return;
  // Load full records; tolerate a truncated tail from an interrupted append.
  std::ifstream in(file_, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file_.string());
  for (;;) {
    uint64_t key;
    uint32_t d;
    in.read(reinterpret_cast<char*>(&key), 8);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in) break;
    FloatVector v(static_cast<int>(d));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(d) * 4);
    if (!in) break;
    index_[key] = std::move(v);
  }
}

uint64_t EmbeddingCache::key_for(const std::string& text) { return fnv1a64(text); }

std::optional<Vector> EmbeddingCache::lookup(uint64_t key) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second.cast<double>();
}

void EmbeddingCache::store(uint64_t key, const Vector& canonical_f32) {
  FloatVector v = canonical_f32.cast<float>();
  std::lock_guard lock(mu_);
  auto [it, inserted] = index_.emplace(key, v);
  if (!inserted) return;  // values are identical by purity
  if (file_.empty()) return;
  std::ofstream out(file_, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + file_.string());
  uint32_t d = static_cast<uint32_t>(v.size());
  out.write(reinterpret_cast<const char*>(&key), 8);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(d) * 4);
  if (!out) throw std::runtime_error("append failed: " + file_.string());
}

size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

Vector round_to_f32(const Vector& v) {
  return v.cast<float>().cast<double>();
}

std::vector<Vector> column_embeddings(const Table& table, EmbeddingBackend& backend, int m,
                                      uint64_t seed, EmbeddingCache* cache) {
  validate_table(table);
  int n = table.num_columns();
  std::vector<std::string> texts(static_cast<size_t>(n));
  std::vector<uint64_t> keys(static_cast<size_t>(n));
  std::vector<Vector> out(static_cast<size_t>(n));
  std::vector<int> misses;
  for (int c = 0; c < n; ++c) {
    auto values = sample_column_values(table.columns[static_cast<size_t>(c)], m,
                                       hash_mix(seed, static_cast<uint64_t>(c)));
    texts[static_cast<size_t>(c)] = serialize_column(values);
    keys[static_cast<size_t>(c)] = EmbeddingCache::key_for(texts[static_cast<size_t>(c)]);
    std::optional<Vector> hit =
        cache ? cache->lookup(keys[static_cast<size_t>(c)]) : std::nullopt;
    if (hit.has_value()) {
      out[static_cast<size_t>(c)] = std::move(*hit);
    } else {
      misses.push_back(c);
    }
  }
  if (!misses.empty()) {
    std::vector<std::string> miss_texts;
    miss_texts.reserve(misses.size());
    for (int c : misses) miss_texts.push_back(texts[static_cast<size_t>(c)]);
    std::vector<Vector> fresh;
    try {
      fresh = backend.embed_batch(miss_texts);
    } catch (const std::exception& e) {
      throw std::runtime_error("table '" + table.table_id + "' column " +
                               std::to_string(misses.front()) + ": " + e.what());
    }
    for (size_t i = 0; i < misses.size(); ++i) {
      Vector canonical = round_to_f32(fresh[i]);
      if (cache) cache->store(keys[static_cast<size_t>(misses[i])], canonical);
      out[static_cast<size_t>(misses[i])] = std::move(canonical);
    }
  }
  return out;
}

}  // namespace tabemb
