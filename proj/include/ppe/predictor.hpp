#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ppe/attribute_schema.hpp"
#include "ppe/embedding.hpp"
#include "ppe/embedding_cache.hpp"

namespace ppe {

struct PredictorConfig {
  std::size_t n_entangled = 10;
  std::size_t rank_cap = 40;
  std::size_t top_images = 100;
  /// Fewer surviving images than min(min_relevant, top_images) is an error.
  std::size_t min_relevant = 5;
  /// Score "without X" attributes as entanglement candidates too.
  bool score_negations = false;
  /// Category for commands outside the hierarchy (id or name).
  std::optional<std::string> category_hint;

  void validate() const;
  nlohmann::json to_json() const;
  static PredictorConfig from_json(const nlohmann::json& doc);
};

struct RankedItem {
  std::string item_id;
  std::size_t row = 0;
  double score = 0.0;
};

/// Corpus images ordered by distance to the command, ascending; ties by item id.
struct ImageRanking {
  std::string command;
  std::vector<RankedItem> entries;
};

ImageRanking rank_images(const EmbeddedCorpus& corpus, std::string_view command, EmbeddingBackend& backend);

/// Ranking from precomputed scores (one per corpus row).
ImageRanking rank_by_scores(std::string_view command, const std::vector<std::string>& item_ids,
                            std::span<const double> scores);

/// Command-relevant images I': the leading survivors of the zero-shot filter.
struct RelevantImageSet {
  std::string command;
  std::vector<std::string> item_ids;
  std::vector<std::size_t> rows;
  std::vector<std::string> filter_labels;
  std::vector<std::string> predicted_labels;  // one per retained item
};

/// Index of the label closest to the item; ties go to the lexicographically smallest label.
std::size_t zero_shot_label(std::span<const double> label_distances, const std::vector<std::string>& labels);

RelevantImageSet aggregate_relevant(const ImageRanking& ranking, const EmbeddedCorpus& corpus,
                                    const AttributeHierarchy& hierarchy, EmbeddingBackend& backend,
                                    const PredictorConfig& config = {});

struct AttributeScore {
  std::string attribute;
  double sum_comd = 0.0;
  double sum_full = 0.0;
  std::size_t r_comd = 0;
  std::size_t r_full = 0;
  double score_final = 0.0;

  bool operator==(const AttributeScore&) const = default;
};

struct AttributeScores {
  std::vector<AttributeScore> rows;  // candidate order
  std::size_t rank_cap = 0;
  std::string excluded_category;

  const AttributeScore* find(std::string_view attribute) const;
};

/// 1-indexed rank positions: position 1 is the smallest sum; ties by text.
std::vector<std::size_t> rank_positions(std::span<const double> sums, const std::vector<std::string>& texts);

/// r_comd / min(r_full, rank_cap).
double final_score(std::size_t r_comd, std::size_t r_full, std::size_t rank_cap);

/// Rank both sums and combine them.
AttributeScores score_from_sums(const std::vector<std::string>& texts, std::span<const double> sum_comd,
                                std::span<const double> sum_full, std::size_t rank_cap);

/// Attribute texts eligible as entanglement candidates for `command`.
std::vector<std::string> candidate_attributes(const AttributeHierarchy& hierarchy, std::string_view command,
                                              const PredictorConfig& config);

/// Memo of full-corpus attribute sums keyed by (corpus, hierarchy, model).
class FullScoreCache {
 public:
  std::optional<std::vector<double>> get(const std::string& key) const;
  void put(const std::string& key, std::vector<double> sums);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<double>> entries_;
};

AttributeScores score_attributes(const RelevantImageSet& relevant, const EmbeddedCorpus& corpus,
                                 const AttributeHierarchy& hierarchy, std::string_view command,
                                 EmbeddingBackend& backend, const PredictorConfig& config = {},
                                 FullScoreCache* full_cache = nullptr);

struct EntanglementPrediction {
  std::string command;
  std::vector<std::string> entangled;
  AttributeScores scores;
  PredictorConfig config;
  std::vector<std::string> relevant_item_ids;

  /// Entangled rows in prediction order.
  std::vector<AttributeScore> entangled_rows() const;

  nlohmann::json to_json() const;
  static EntanglementPrediction from_json(const nlohmann::json& doc);
};

/// Sorted by score_final ascending, ties by text; at most `n` entries.
std::vector<std::string> top_entangled(const AttributeScores& scores, std::size_t n);

EntanglementPrediction predict_entangled(std::string_view command, const EmbeddedCorpus& corpus,
                                         const AttributeHierarchy& hierarchy, EmbeddingBackend& backend,
                                         const PredictorConfig& config = {}, FullScoreCache* full_cache = nullptr);

struct MultiPrediction {
  std::vector<EntanglementPrediction> per_command;
  /// Union of the per-command lists in order of first appearance, without any
  /// attribute from a command's own category.
  std::vector<std::string> grouped;

  nlohmann::json to_json() const;
};

/// Hints, when given, are per command (same length as `commands`).
MultiPrediction predict_multi(const std::vector<std::string>& commands, const EmbeddedCorpus& corpus,
                              const AttributeHierarchy& hierarchy, EmbeddingBackend& backend,
                              const PredictorConfig& config = {}, FullScoreCache* full_cache = nullptr,
                              const std::vector<std::optional<std::string>>& hints = {});

}  // namespace ppe
