#include "ppe/predictor.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "ppe/errors.hpp"

namespace ppe {

void PredictorConfig::validate() const {
  if (rank_cap < 1) throw ConfigError("rank cap R must be at least 1");
  if (n_entangled < 1) throw ConfigError("N (entangled attributes) must be at least 1");
  if (top_images < 1) throw ConfigError("top_images must be at least 1");
}

nlohmann::json PredictorConfig::to_json() const {
  nlohmann::json j{{"n_entangled", n_entangled},
                   {"rank_cap", rank_cap},
                   {"top_images", top_images},
                   {"min_relevant", min_relevant},
                   {"score_negations", score_negations}};
  if (category_hint) j["category_hint"] = *category_hint;
  return j;
}

PredictorConfig PredictorConfig::from_json(const nlohmann::json& doc) {
  PredictorConfig c;
  c.n_entangled = doc.value("n_entangled", c.n_entangled);
  c.rank_cap = doc.value("rank_cap", c.rank_cap);
  c.top_images = doc.value("top_images", c.top_images);
  c.min_relevant = doc.value("min_relevant", c.min_relevant);
  c.score_negations = doc.value("score_negations", c.score_negations);
  if (doc.contains("category_hint")) c.category_hint = doc["category_hint"].get<std::string>();
  return c;
}

// ---------------------------------------------------------------------------

ImageRanking rank_by_scores(std::string_view command, const std::vector<std::string>& item_ids,
                            std::span<const double> scores) {
  if (item_ids.empty()) throw ValidationError("cannot rank an empty corpus");
  if (item_ids.size() != scores.size()) throw ValidationError("one score per item is required");
  ImageRanking ranking{std::string(command), {}};
  ranking.entries.reserve(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) ranking.entries.push_back({item_ids[i], i, scores[i]});
  std::sort(ranking.entries.begin(), ranking.entries.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.item_id < b.item_id;
  });
  return ranking;
}

ImageRanking rank_images(const EmbeddedCorpus& corpus, std::string_view command, EmbeddingBackend& backend) {
  if (corpus.empty()) throw ValidationError("cannot rank an empty corpus");
  const EmbeddingVector text = backend.embed_text(command);
  const auto scores = distances_to(corpus.embeddings(), text);
  return rank_by_scores(command, corpus.item_ids(), scores);
}

std::size_t zero_shot_label(std::span<const double> label_distances, const std::vector<std::string>& labels) {
  if (labels.empty() || labels.size() != label_distances.size()) {
    throw ValidationError("zero-shot labelling needs one distance per label");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    const double d = label_distances[i];
    if (d < label_distances[best] || (d == label_distances[best] && labels[i] < labels[best])) best = i;
  }
  return best;
}

RelevantImageSet aggregate_relevant(const ImageRanking& ranking, const EmbeddedCorpus& corpus,
                                    const AttributeHierarchy& hierarchy, EmbeddingBackend& backend,
                                    const PredictorConfig& config) {
  config.validate();
  RelevantImageSet out;
  out.command = ranking.command;
  out.filter_labels = labels_for_command(hierarchy, ranking.command, config.category_hint);

  std::vector<EmbeddingVector> label_embeddings;
  for (const auto& label : out.filter_labels) label_embeddings.push_back(backend.embed_text(label));

  std::vector<double> dists(out.filter_labels.size());
  for (const auto& entry : ranking.entries) {
    if (out.item_ids.size() == config.top_images) break;
    const EmbeddingVector& image = corpus.embedding(entry.row);
    for (std::size_t l = 0; l < label_embeddings.size(); ++l) dists[l] = clip_distance(image, label_embeddings[l]);
    const std::string& label = out.filter_labels[zero_shot_label(dists, out.filter_labels)];
    if (label != ranking.command) continue;
    out.item_ids.push_back(entry.item_id);
    out.rows.push_back(entry.row);
    out.predicted_labels.push_back(label);
  }
  if (out.item_ids.empty()) {
    throw ValidationError("no relevant images for '" + ranking.command +
                          "': every image was classified as another label; inspect the label set");
  }
  const std::size_t required = std::min(config.min_relevant, config.top_images);
  if (out.item_ids.size() < required) {
    throw ValidationError("only " + std::to_string(out.item_ids.size()) + " relevant images for '" +
                          ranking.command + "' (minimum " + std::to_string(required) + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------

const AttributeScore* AttributeScores::find(std::string_view attribute) const {
  for (const auto& r : rows) {
    if (r.attribute == attribute) return &r;
  }
  return nullptr;
}

std::vector<std::size_t> rank_positions(std::span<const double> sums, const std::vector<std::string>& texts) {
  if (sums.size() != texts.size()) throw ValidationError("one sum per attribute is required");
  std::vector<std::size_t> order(sums.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sums[a] != sums[b]) return sums[a] < sums[b];
    return texts[a] < texts[b];
  });
  std::vector<std::size_t> rank(sums.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = pos + 1;
  return rank;
}

double final_score(std::size_t r_comd, std::size_t r_full, std::size_t rank_cap) {
  if (rank_cap < 1) throw ConfigError("rank cap R must be at least 1");
  if (r_comd < 1 || r_full < 1) throw ValidationError("rank positions are 1-indexed");
  return static_cast<double>(r_comd) / static_cast<double>(std::min(r_full, rank_cap));
}

AttributeScores score_from_sums(const std::vector<std::string>& texts, std::span<const double> sum_comd,
                                std::span<const double> sum_full, std::size_t rank_cap) {
  if (rank_cap < 1) throw ConfigError("rank cap R must be at least 1");
  const auto r_comd = rank_positions(sum_comd, texts);
  const auto r_full = rank_positions(sum_full, texts);
  AttributeScores out;
  out.rank_cap = rank_cap;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.rows.push_back(
        {texts[i], sum_comd[i], sum_full[i], r_comd[i], r_full[i], final_score(r_comd[i], r_full[i], rank_cap)});
  }
  return out;
}

std::vector<std::string> candidate_attributes(const AttributeHierarchy& hierarchy, std::string_view command,
                                              const PredictorConfig& config) {
  const Category& excluded = resolve_command_category(hierarchy, command, config.category_hint);
  std::vector<std::string> out;
  for (const Attribute* a : hierarchy.attributes()) {
    if (a->category_id == excluded.id || a->text == command) continue;
    if (a->is_negation && !config.score_negations) continue;
    out.push_back(a->text);
  }
  return out;
}

std::optional<std::vector<double>> FullScoreCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void FullScoreCache::put(const std::string& key, std::vector<double> sums) {
  std::lock_guard lock(mutex_);
  entries_[key] = std::move(sums);
}

std::size_t FullScoreCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

AttributeScores score_attributes(const RelevantImageSet& relevant, const EmbeddedCorpus& corpus,
                                 const AttributeHierarchy& hierarchy, std::string_view command,
                                 EmbeddingBackend& backend, const PredictorConfig& config,
                                 FullScoreCache* full_cache) {
  config.validate();
  if (relevant.rows.empty()) throw ValidationError("relevant image set is empty");
  const auto texts = candidate_attributes(hierarchy, command, config);
  std::vector<EmbeddingVector> text_embeddings;
  text_embeddings.reserve(texts.size());
  for (const auto& t : texts) text_embeddings.push_back(backend.embed_text(t));

  std::vector<double> sum_comd(texts.size(), 0.0);
  for (std::size_t t = 0; t < texts.size(); ++t) {
    for (std::size_t row : relevant.rows) sum_comd[t] += clip_distance(corpus.embedding(row), text_embeddings[t]);
  }

  // Every attribute of the hierarchy is summed once per corpus so the memo can
  // serve any command.
  const std::string key = corpus.fingerprint() + "|" + hierarchy.fingerprint() + "|" + backend.model_id();
  std::optional<std::vector<double>> all_sums = full_cache ? full_cache->get(key) : std::nullopt;
  const auto all_attrs = hierarchy.attributes();
  if (!all_sums) {
    all_sums.emplace(all_attrs.size(), 0.0);
    for (std::size_t a = 0; a < all_attrs.size(); ++a) {
      const EmbeddingVector e = backend.embed_text(all_attrs[a]->text);
      for (std::size_t row = 0; row < corpus.size(); ++row) (*all_sums)[a] += clip_distance(corpus.embedding(row), e);
    }
    if (full_cache) full_cache->put(key, *all_sums);
  }
  std::vector<double> sum_full(texts.size(), 0.0);
  for (std::size_t t = 0; t < texts.size(); ++t) {
    for (std::size_t a = 0; a < all_attrs.size(); ++a) {
      if (all_attrs[a]->text == texts[t]) sum_full[t] = (*all_sums)[a];
    }
  }

  auto scores = score_from_sums(texts, sum_comd, sum_full, config.rank_cap);
  scores.excluded_category = resolve_command_category(hierarchy, command, config.category_hint).name;
  return scores;
}

// ---------------------------------------------------------------------------

std::vector<std::string> top_entangled(const AttributeScores& scores, std::size_t n) {
  std::vector<const AttributeScore*> rows;
  for (const auto& r : scores.rows) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const AttributeScore* a, const AttributeScore* b) {
    if (a->score_final != b->score_final) return a->score_final < b->score_final;
    return a->attribute < b->attribute;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < rows.size() && i < n; ++i) out.push_back(rows[i]->attribute);
  return out;
}

std::vector<AttributeScore> EntanglementPrediction::entangled_rows() const {
  std::vector<AttributeScore> out;
  for (const auto& t : entangled) {
    if (const auto* r = scores.find(t)) out.push_back(*r);
  }
  return out;
}

namespace {

nlohmann::json score_to_json(const AttributeScore& s) {
  return {{"attribute", s.attribute}, {"sum_comd", s.sum_comd}, {"sum_full", s.sum_full},
          {"r_comd", s.r_comd},       {"r_full", s.r_full},     {"score_final", s.score_final}};
}

AttributeScore score_from_json(const nlohmann::json& j) {
  return {j.at("attribute").get<std::string>(), j.at("sum_comd").get<double>(), j.at("sum_full").get<double>(),
          j.at("r_comd").get<std::size_t>(),    j.at("r_full").get<std::size_t>(), j.at("score_final").get<double>()};
}

}  // namespace

nlohmann::json EntanglementPrediction::to_json() const {
  nlohmann::json entangled_json = nlohmann::json::array();
  for (const auto& r : entangled_rows()) entangled_json.push_back(score_to_json(r));
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : scores.rows) table.push_back(score_to_json(r));
  return {{"command", command},
          {"config", config.to_json()},
          {"excluded_category", scores.excluded_category},
          {"entangled", std::move(entangled_json)},
          {"scores", std::move(table)},
          {"relevant_item_ids", relevant_item_ids}};
}

EntanglementPrediction EntanglementPrediction::from_json(const nlohmann::json& doc) {
  try {
    EntanglementPrediction p;
    p.command = doc.at("command").get<std::string>();
    p.config = PredictorConfig::from_json(doc.at("config"));
    p.scores.rank_cap = p.config.rank_cap;
    p.scores.excluded_category = doc.value("excluded_category", std::string{});
    for (const auto& r : doc.value("scores", nlohmann::json::array())) p.scores.rows.push_back(score_from_json(r));
    for (const auto& r : doc.at("entangled")) {
      auto row = score_from_json(r);
      if (!p.scores.find(row.attribute)) p.scores.rows.push_back(row);
      p.entangled.push_back(row.attribute);
    }
    p.relevant_item_ids = doc.value("relevant_item_ids", std::vector<std::string>{});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed prediction artifact: ") + e.what());
  }
}

EntanglementPrediction predict_entangled(std::string_view command, const EmbeddedCorpus& corpus,
                                         const AttributeHierarchy& hierarchy, EmbeddingBackend& backend,
                                         const PredictorConfig& config, FullScoreCache* full_cache) {
  config.validate();
  const auto ranking = rank_images(corpus, command, backend);
  const auto relevant = aggregate_relevant(ranking, corpus, hierarchy, backend, config);
  EntanglementPrediction p;
  p.command = std::string(command);
  p.scores = score_attributes(relevant, corpus, hierarchy, command, backend, config, full_cache);
  p.entangled = top_entangled(p.scores, config.n_entangled);
  p.config = config;
  p.relevant_item_ids = relevant.item_ids;
  return p;
}

nlohmann::json MultiPrediction::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& p : per_command) per.push_back(p.to_json());
  return {{"predictions", std::move(per)}, {"grouped", grouped}};
}

MultiPrediction predict_multi(const std::vector<std::string>& commands, const EmbeddedCorpus& corpus,
                              const AttributeHierarchy& hierarchy, EmbeddingBackend& backend,
                              const PredictorConfig& config, FullScoreCache* full_cache,
                              const std::vector<std::optional<std::string>>& hints) {
  if (commands.empty()) throw ConfigError("at least one command is required");
  if (!hints.empty() && hints.size() != commands.size()) throw ConfigError("one category hint per command");
  MultiPrediction out;
  std::set<std::string> excluded_categories;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    PredictorConfig c = config;
    if (!hints.empty() && hints[i]) c.category_hint = hints[i];
    out.per_command.push_back(predict_entangled(commands[i], corpus, hierarchy, backend, c, full_cache));
    excluded_categories.insert(resolve_command_category(hierarchy, commands[i], c.category_hint).id);
  }
  std::set<std::string> seen;
  for (const auto& p : out.per_command) {
    for (const auto& t : p.entangled) {
      const Category* cat = hierarchy.category_of(t);
      if (cat != nullptr && excluded_categories.contains(cat->id)) continue;
      if (std::find(commands.begin(), commands.end(), t) != commands.end()) continue;
      if (seen.insert(t).second) out.grouped.push_back(t);
    }
  }
  return out;
}

}  // namespace ppe
