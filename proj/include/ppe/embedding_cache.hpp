#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "ppe/embedding.hpp"

namespace ppe {

/// One image of a corpus with a description of where it came from.
struct CorpusItem {
  std::string id;
  Image pixels;
  std::string provenance;
};

/// Bytes that identify an item's content (little-endian doubles).
std::vector<std::uint8_t> content_bytes(const Image& pixels);
/// SHA-256 over (content bytes, model_id).
std::string content_key(const Image& pixels, const std::string& model_id);

/// Image set with cached, unit-normalized embeddings (row i belongs to item_ids[i]).
class EmbeddedCorpus {
 public:
  EmbeddedCorpus(std::vector<std::string> item_ids, std::vector<EmbeddingVector> embeddings, std::string model_id,
                 std::vector<std::string> provenance = {});

  std::size_t size() const { return item_ids_.size(); }
  bool empty() const { return item_ids_.empty(); }
  std::size_t dim() const { return embeddings_.empty() ? 0 : embeddings_.front().dim(); }
  const std::string& model_id() const { return model_id_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<EmbeddingVector>& embeddings() const { return embeddings_; }
  const EmbeddingVector& embedding(std::size_t row) const { return embeddings_.at(row); }
  const std::vector<std::string>& provenance() const { return provenance_; }
  /// Row index of `id`, if present.
  std::optional<std::size_t> row_of(const std::string& id) const;

  /// Digest over model, ids and embedding bits.
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  std::vector<std::string> item_ids_;
  std::vector<EmbeddingVector> embeddings_;
  std::string model_id_;
  std::vector<std::string> provenance_;
  std::string fingerprint_;
};

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t corrupt = 0;  // records skipped and recomputed
};

/// Content-addressed on-disk embedding store.
///
/// Layout: <root>/<key[0:2]>/<key>.f32 holds dim little-endian float32 values;
/// <key>.json holds {dim, model_id, created_at}. Readers may run concurrently;
/// writes are serialized and land via rename.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// nullopt on a miss or a corrupt record (the latter counted and logged).
  std::optional<EmbeddingVector> lookup(const std::string& key, const std::string& model_id, std::size_t dim);
  void store(const std::string& key, const EmbeddingVector& embedding);

  CacheStats stats() const;

 private:
  std::filesystem::path blob_path(const std::string& key) const;
  std::filesystem::path header_path(const std::string& key) const;

  std::filesystem::path root_;
  mutable std::shared_mutex mutex_;
  CacheStats stats_;
  mutable std::mutex stats_mutex_;
};

/// Embeds every item exactly once per (content, model); `cache` may be null.
/// Throws ValidationError naming an item whose pixels are empty or non-finite.
EmbeddedCorpus build_cache(EmbeddingBackend& backend, std::span<const CorpusItem> items, EmbeddingCache* cache);

/// Cache directory from $PPE_CACHE_DIR if set, else `fallback`.
std::filesystem::path resolve_cache_dir(const std::filesystem::path& fallback);

/// Hook receiving warnings (defaults to stderr).
void set_warning_sink(std::function<void(const std::string&)> sink);
void warn(const std::string& message);

}  // namespace ppe
