#include "ppe/embedding_cache.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include "json.hpp"
#include "ppe/errors.hpp"
#include "ppe/hashing.hpp"

namespace ppe {

namespace fs = std::filesystem;

namespace {

std::mutex g_sink_mutex;
std::function<void(const std::string&)> g_sink;

void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const fs::path& target, const std::string& bytes) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache file '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, target);
}

}  // namespace

void set_warning_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(g_sink_mutex);
  g_sink = std::move(sink);
}

void warn(const std::string& message) {
  std::lock_guard lock(g_sink_mutex);
  if (g_sink) {
    g_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

std::vector<std::uint8_t> content_bytes(const Image& pixels) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(pixels.size()) * 8);
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    std::uint64_t bits;
    const double v = pixels[i];
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff));
  }
  return out;
}

std::string content_key(const Image& pixels, const std::string& model_id) {
  const auto bytes = content_bytes(pixels);
  Sha256 h;
  h.update(bytes);
  h.update(std::string_view("\0", 1));
  h.update(model_id);
  return h.hex_digest();
}

// ---------------------------------------------------------------------------

EmbeddedCorpus::EmbeddedCorpus(std::vector<std::string> item_ids, std::vector<EmbeddingVector> embeddings,
                               std::string model_id, std::vector<std::string> provenance)
    : item_ids_(std::move(item_ids)),
      embeddings_(std::move(embeddings)),
      model_id_(std::move(model_id)),
      provenance_(std::move(provenance)) {
  if (item_ids_.size() != embeddings_.size()) throw ValidationError("corpus ids and embeddings differ in count");
  if (provenance_.empty()) provenance_.resize(item_ids_.size());
  if (provenance_.size() != item_ids_.size()) throw ValidationError("corpus provenance count mismatch");
  std::unordered_map<std::string, std::size_t> seen;
  Sha256 h;
  h.update(model_id_);
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!seen.emplace(item_ids_[i], i).second) throw ValidationError("duplicate corpus item id '" + item_ids_[i] + "'");
    const auto& e = embeddings_[i];
    if (e.model_id() != model_id_) throw ValidationError("item '" + item_ids_[i] + "' embedded by another model");
    if (e.dim() != embeddings_.front().dim()) throw ValidationError("item '" + item_ids_[i] + "' has wrong dimension");
    h.update(std::string_view("\n", 1)).update(item_ids_[i]);
    h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(e.values().data()),
                                           e.values().size() * sizeof(float)));
  }
  fingerprint_ = h.hex_digest();
}

std::optional<std::size_t> EmbeddedCorpus::row_of(const std::string& id) const {
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (item_ids_[i] == id) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path EmbeddingCache::blob_path(const std::string& key) const { return root_ / key.substr(0, 2) / (key + ".f32"); }

fs::path EmbeddingCache::header_path(const std::string& key) const {
  return root_ / key.substr(0, 2) / (key + ".json");
}

std::optional<EmbeddingVector> EmbeddingCache::lookup(const std::string& key, const std::string& model_id,
                                                      std::size_t dim) {
  auto count = [this](std::size_t CacheStats::*field) {
    std::lock_guard lock(stats_mutex_);
    ++(stats_.*field);
  };
  std::shared_lock lock(mutex_);
  const fs::path blob = blob_path(key);
  const fs::path header = header_path(key);
  if (!fs::exists(blob) && !fs::exists(header)) {
    count(&CacheStats::misses);
    return std::nullopt;
  }
  auto corrupt = [&](const std::string& why) -> std::optional<EmbeddingVector> {
    warn("corrupt cache record " + key + " (" + why + "); recomputing");
    count(&CacheStats::corrupt);
    count(&CacheStats::misses);
    return std::nullopt;
  };
  nlohmann::json meta;
  {
    std::ifstream in(header);
    if (!in) return corrupt("missing header");
    try {
      meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      return corrupt("unparseable header");
    }
  }
  if (!meta.is_object() || meta.value("model_id", std::string{}) != model_id ||
      meta.value("dim", std::size_t{0}) != dim) {
    return corrupt("header mismatch");
  }
  std::ifstream in(blob, std::ios::binary);
  if (!in) return corrupt("missing values");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != dim * 4) return corrupt("truncated values");
  std::vector<float> values(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::uint32_t bits = get_le32(reinterpret_cast<const unsigned char*>(bytes.data()) + 4 * i);
    std::memcpy(&values[i], &bits, sizeof bits);
  }
  try {
    auto e = EmbeddingVector::from_unit(std::move(values), model_id);
    count(&CacheStats::hits);
    return e;
  } catch (const BackendError&) {
    return corrupt("values not unit-normalized");
  }
}

void EmbeddingCache::store(const std::string& key, const EmbeddingVector& embedding) {
  std::string bytes;
  bytes.reserve(embedding.dim() * 4);
  for (float v : embedding.values()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le32(bytes, bits);
  }
  const nlohmann::json meta{{"dim", embedding.dim()}, {"model_id", embedding.model_id()}, {"created_at", utc_now()}};
  std::unique_lock lock(mutex_);
  fs::create_directories(blob_path(key).parent_path());
  write_atomically(blob_path(key), bytes);
  write_atomically(header_path(key), meta.dump());
}

CacheStats EmbeddingCache::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

EmbeddedCorpus build_cache(EmbeddingBackend& backend, std::span<const CorpusItem> items, EmbeddingCache* cache) {
  std::vector<std::string> ids;
  std::vector<EmbeddingVector> rows;
  std::vector<std::string> provenance;
  ids.reserve(items.size());
  rows.reserve(items.size());
  for (const auto& item : items) {
    if (item.pixels.size() == 0) throw ValidationError("item '" + item.id + "' is unreadable: no content");
    if (!item.pixels.allFinite()) throw ValidationError("item '" + item.id + "' is unreadable: non-finite content");
    std::optional<EmbeddingVector> e;
    std::string key;
    if (cache != nullptr) {
      key = content_key(item.pixels, backend.model_id());
      e = cache->lookup(key, backend.model_id(), backend.dim());
    }
    if (!e) {
      e = backend.embed_image(item.pixels);
      if (cache != nullptr) cache->store(key, *e);
    }
    ids.push_back(item.id);
    rows.push_back(std::move(*e));
    provenance.push_back(item.provenance);
  }
  return EmbeddedCorpus(std::move(ids), std::move(rows), backend.model_id(), std::move(provenance));
}

fs::path resolve_cache_dir(const fs::path& fallback) {
  if (const char* env = std::getenv("PPE_CACHE_DIR"); env != nullptr && *env != '\0') return fs::path(env);
  return fallback;
}

}  // namespace ppe
