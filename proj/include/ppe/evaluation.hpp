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
#include "ppe/embedding.hpp"
#include "ppe/embedding_cache.hpp"
#include "ppe/generator.hpp"
#include "ppe/mapper.hpp"

namespace ppe {

/// D(i, t) - D(i', t); positive means i' moved toward t.
double delta_distance(double before, double after);
double delta_command(const Image& original, const Image& edited, std::string_view command, EmbeddingBackend& backend);
double delta_entangled(const Image& original, const Image& edited, std::string_view attribute,
                       EmbeddingBackend& backend);

/// min and max of D(i, t) over a corpus.
struct AttributeRange {
  std::string attribute;
  double min = 0.0;
  double max = 0.0;

  double width() const { return max - min; }
  bool operator==(const AttributeRange&) const = default;
};

/// Memo of ranges keyed by (corpus, attribute, model).
class RangeCache {
 public:
  std::optional<AttributeRange> get(const std::string& key) const;
  void put(const std::string& key, const AttributeRange& range);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, AttributeRange> entries_;
};

/// Needs >= 2 items; a zero range throws ValidationError("zero normalization range ...").
AttributeRange attribute_range(const EmbeddedCorpus& corpus, std::string_view attribute, EmbeddingBackend& backend,
                               RangeCache* cache = nullptr);

double normalize_delta(double delta, const AttributeRange& range);

struct IndicatorResult {
  double value = 0.0;
  bool valid = true;
  std::string reason;
};

/// mean(|de|) / dc. dc <= 0 gives an invalid result with reason "no manipulation effect".
IndicatorResult indicator(double dc_normalized, std::span<const double> de_normalized);

struct EntangledRow {
  std::string attribute;
  double raw = 0.0;
  double normalized = 0.0;
  AttributeRange range;
};

struct EvaluationReport {
  std::string command;
  std::string label;  // e.g. "ppe" or "baseline"
  double strength = 1.0;
  std::size_t item_count = 0;
  double dc_raw = 0.0;
  double dc_normalized = 0.0;
  AttributeRange command_range;
  std::vector<EntangledRow> rows;
  IndicatorResult result;
  std::string config_hash;

  /// mean(|normalized entanglement delta|).
  double mean_abs_entangled() const;
  /// Recomputes the indicator from the rows.
  IndicatorResult recompute() const;

  nlohmann::json to_json() const;
  static EvaluationReport from_json(const nlohmann::json& doc);
  /// Row layout: manipulation row, one row per entangled attribute, indicator row.
  std::string to_csv() const;
};

struct EvaluationRequest {
  std::string command;
  std::vector<std::string> entangled;
  double strength = 1.0;
  std::string label;
  std::string config_hash;
};

/// Deltas are averaged over the test latents, then normalized once per attribute
/// with ranges taken over `corpus`.
EvaluationReport evaluate_run(const std::vector<LatentCode>& test_latents, const Generator& generator,
                              const MapperModel& mapper, const EvaluationRequest& request, EmbeddingBackend& backend,
                              const EmbeddedCorpus& corpus, RangeCache* ranges = nullptr);

std::vector<EvaluationReport> strength_sweep(const std::vector<LatentCode>& test_latents, const Generator& generator,
                                             const MapperModel& mapper, EvaluationRequest request,
                                             const std::vector<double>& strengths, EmbeddingBackend& backend,
                                             const EmbeddedCorpus& corpus, RangeCache* ranges = nullptr);

/// Side-by-side layout of two reports over the same command and rows.
std::string comparison_csv(const EvaluationReport& baseline, const EvaluationReport& ppe);
std::string comparison_table(const EvaluationReport& baseline, const EvaluationReport& ppe);

}  // namespace ppe
