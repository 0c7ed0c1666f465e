#include "ppe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "ppe/errors.hpp"
#include "ppe/training.hpp"

namespace ppe {

double delta_distance(double before, double after) { return before - after; }

double delta_command(const Image& original, const Image& edited, std::string_view command, EmbeddingBackend& backend) {
  const EmbeddingVector t = backend.embed_text(command);
  return delta_distance(clip_distance(backend.embed_image(original), t), clip_distance(backend.embed_image(edited), t));
}

double delta_entangled(const Image& original, const Image& edited, std::string_view attribute,
                       EmbeddingBackend& backend) {
  return delta_command(original, edited, attribute, backend);
}

std::optional<AttributeRange> RangeCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void RangeCache::put(const std::string& key, const AttributeRange& range) {
  std::lock_guard lock(mutex_);
  entries_[key] = range;
}

std::size_t RangeCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

AttributeRange attribute_range(const EmbeddedCorpus& corpus, std::string_view attribute, EmbeddingBackend& backend,
                               RangeCache* cache) {
  if (corpus.size() < 2) throw ValidationError("attribute range needs at least 2 corpus items");
  const std::string key = corpus.fingerprint() + "|" + std::string(attribute) + "|" + backend.model_id();
  if (cache) {
    if (auto hit = cache->get(key)) return *hit;
  }
  const std::vector<double> d = distances_to(corpus.embeddings(), backend.embed_text(attribute));
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  AttributeRange range{std::string(attribute), *lo, *hi};
  if (!(range.max > range.min)) {
    throw ValidationError("zero normalization range for '" + std::string(attribute) + "'");
  }
  if (cache) cache->put(key, range);
  return range;
}

double normalize_delta(double delta, const AttributeRange& range) {
  if (!(range.width() > 0.0)) throw ValidationError("zero normalization range for '" + range.attribute + "'");
  return delta / range.width();
}

IndicatorResult indicator(double dc_normalized, std::span<const double> de_normalized) {
  if (de_normalized.empty()) throw ValidationError("indicator needs at least one entangled attribute");
  double sum = 0.0;
  for (double d : de_normalized) sum += std::abs(d);
  const double mean = sum / static_cast<double>(de_normalized.size());
  if (!(dc_normalized > 0.0)) return {0.0, false, "no manipulation effect"};
  return {mean / dc_normalized, true, ""};
}

double EvaluationReport::mean_abs_entangled() const {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : rows) sum += std::abs(r.normalized);
  return sum / static_cast<double>(rows.size());
}

IndicatorResult EvaluationReport::recompute() const {
  std::vector<double> de;
  for (const auto& r : rows) de.push_back(r.normalized);
  return indicator(dc_normalized, de);
}

namespace {

nlohmann::json range_json(const AttributeRange& r) { return {{"attribute", r.attribute}, {"min", r.min}, {"max", r.max}}; }

AttributeRange range_from(const nlohmann::json& j) {
  return {j.at("attribute").get<std::string>(), j.at("min").get<double>(), j.at("max").get<double>()};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

}  // namespace

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json entangled = nlohmann::json::array();
  for (const auto& r : rows) {
    entangled.push_back(
        {{"attribute", r.attribute}, {"raw", r.raw}, {"normalized", r.normalized}, {"range", range_json(r.range)}});
  }
  nlohmann::json doc{{"command", command},
                     {"label", label},
                     {"strength", strength},
                     {"item_count", item_count},
                     {"manipulation", {{"raw", dc_raw}, {"normalized", dc_normalized}, {"range", range_json(command_range)}}},
                     {"entangled", std::move(entangled)},
                     {"indicator", result.valid ? nlohmann::json(result.value) : nlohmann::json(nullptr)},
                     {"valid", result.valid},
                     {"config_hash", config_hash}};
  if (!result.valid) doc["reason"] = result.reason;
  return doc;
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& doc) {
  EvaluationReport r;
  r.command = doc.at("command").get<std::string>();
  r.label = doc.value("label", std::string());
  r.strength = doc.value("strength", 1.0);
  r.item_count = doc.at("item_count").get<std::size_t>();
  const auto& m = doc.at("manipulation");
  r.dc_raw = m.at("raw").get<double>();
  r.dc_normalized = m.at("normalized").get<double>();
  r.command_range = range_from(m.at("range"));
  for (const auto& e : doc.at("entangled")) {
    r.rows.push_back({e.at("attribute").get<std::string>(), e.at("raw").get<double>(),
                      e.at("normalized").get<double>(), range_from(e.at("range"))});
  }
  r.result.valid = doc.at("valid").get<bool>();
  r.result.value = r.result.valid ? doc.at("indicator").get<double>() : 0.0;
  r.result.reason = doc.value("reason", std::string());
  r.config_hash = doc.value("config_hash", std::string());
  return r;
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "row,attribute,raw,normalized\n";
  out << "manipulation," << csv_field(command) << ',' << dc_raw << ',' << dc_normalized << '\n';
  for (const auto& r : rows) out << "entangled," << csv_field(r.attribute) << ',' << r.raw << ',' << r.normalized << '\n';
  out << "indicator,," << (result.valid ? std::to_string(result.value) : std::string("invalid")) << ','
      << csv_field(result.valid ? std::string() : result.reason) << '\n';
  return out.str();
}

EvaluationReport evaluate_run(const std::vector<LatentCode>& test_latents, const Generator& generator,
                              const MapperModel& mapper, const EvaluationRequest& request, EmbeddingBackend& backend,
                              const EmbeddedCorpus& corpus, RangeCache* ranges) {
  if (test_latents.empty()) throw ValidationError("evaluation needs at least one test latent");
  if (request.entangled.empty()) throw ValidationError("evaluation needs at least one entangled attribute");

  std::vector<std::string> texts{request.command};
  texts.insert(texts.end(), request.entangled.begin(), request.entangled.end());
  std::vector<EmbeddingVector> text_emb;
  for (const auto& t : texts) text_emb.push_back(backend.embed_text(t));

  std::vector<double> mean_delta(texts.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(test_latents.size());
  for (const auto& w : test_latents) {
    const EmbeddingVector before = backend.embed_image(generator.generate(w));
    const EmbeddingVector after = backend.embed_image(manipulate(generator, mapper, w, request.strength));
    for (std::size_t k = 0; k < texts.size(); ++k) {
      mean_delta[k] += inv * delta_distance(clip_distance(before, text_emb[k]), clip_distance(after, text_emb[k]));
    }
  }

  EvaluationReport report;
  report.command = request.command;
  report.label = request.label;
  report.strength = request.strength;
  report.item_count = test_latents.size();
  report.config_hash = request.config_hash;
  report.command_range = attribute_range(corpus, request.command, backend, ranges);
  report.dc_raw = mean_delta[0];
  report.dc_normalized = normalize_delta(report.dc_raw, report.command_range);
  for (std::size_t k = 1; k < texts.size(); ++k) {
    EntangledRow row;
    row.attribute = texts[k];
    row.range = attribute_range(corpus, texts[k], backend, ranges);
    row.raw = mean_delta[k];
    row.normalized = normalize_delta(row.raw, row.range);
    report.rows.push_back(std::move(row));
  }
  report.result = report.recompute();
  return report;
}

std::vector<EvaluationReport> strength_sweep(const std::vector<LatentCode>& test_latents, const Generator& generator,
                                             const MapperModel& mapper, EvaluationRequest request,
                                             const std::vector<double>& strengths, EmbeddingBackend& backend,
                                             const EmbeddedCorpus& corpus, RangeCache* ranges) {
  std::vector<EvaluationReport> out;
  for (double s : strengths) {
    request.strength = s;
    out.push_back(evaluate_run(test_latents, generator, mapper, request, backend, corpus, ranges));
  }
  return out;
}

namespace {

void check_comparable(const EvaluationReport& a, const EvaluationReport& b) {
  if (a.command != b.command || a.rows.size() != b.rows.size()) {
    throw ValidationError("reports cover different commands or attribute lists");
  }
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    if (a.rows[k].attribute != b.rows[k].attribute) throw ValidationError("reports list different attributes");
  }
}

std::string indicator_text(const IndicatorResult& r) { return r.valid ? fmt(r.value) : "invalid (" + r.reason + ")"; }

}  // namespace

std::string comparison_csv(const EvaluationReport& baseline, const EvaluationReport& ppe) {
  check_comparable(baseline, ppe);
  std::ostringstream out;
  out.precision(17);
  out << "row,attribute," << csv_field(baseline.label) << ',' << csv_field(ppe.label) << '\n';
  out << "manipulation," << csv_field(baseline.command) << ',' << baseline.dc_normalized << ',' << ppe.dc_normalized
      << '\n';
  for (std::size_t k = 0; k < baseline.rows.size(); ++k) {
    out << "entangled," << csv_field(baseline.rows[k].attribute) << ',' << baseline.rows[k].normalized << ','
        << ppe.rows[k].normalized << '\n';
  }
  out << "indicator,," << (baseline.result.valid ? std::to_string(baseline.result.value) : "invalid") << ','
      << (ppe.result.valid ? std::to_string(ppe.result.value) : "invalid") << '\n';
  return out.str();
}

std::string comparison_table(const EvaluationReport& baseline, const EvaluationReport& ppe) {
  check_comparable(baseline, ppe);
  std::size_t width = std::string("Manipulation: ").size() + baseline.command.size();
  for (const auto& r : baseline.rows) width = std::max(width, r.attribute.size());
  width += 2;
  std::ostringstream out;
  auto line = [&](const std::string& name, const std::string& a, const std::string& b) {
    out << std::left << std::setw(static_cast<int>(width)) << name << std::right << std::setw(22) << a
        << std::setw(22) << b << '\n';
  };
  line("", baseline.label, ppe.label);
  line("Manipulation: " + baseline.command, fmt(baseline.dc_normalized), fmt(ppe.dc_normalized));
  for (std::size_t k = 0; k < baseline.rows.size(); ++k) {
    line(baseline.rows[k].attribute, fmt(baseline.rows[k].normalized), fmt(ppe.rows[k].normalized));
  }
  line("Indicator", indicator_text(baseline.result), indicator_text(ppe.result));
  return out.str();
}

}  // namespace ppe
