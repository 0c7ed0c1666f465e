#include "ppe/category_finder.hpp"

#include <cmath>

#include "ppe/errors.hpp"

namespace ppe {

namespace {

std::size_t occurrences(std::string_view s, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string_view::npos; pos = s.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

void CategoryQuery::validate() const {
  if (occurrences(template_text, kCommandSlot) != 1 || occurrences(template_text, kCategorySlot) != 1) {
    throw ValidationError("category template '" + template_text + "' must contain [Y] and [X] exactly once");
  }
  if (command.empty()) throw ValidationError("category query has an empty command");
  if (candidates.empty()) throw ValidationError("category query for '" + command + "' has no candidates");
}

std::string CategoryQuery::render(std::string_view candidate) const {
  std::string out = template_text;
  out.replace(out.find(kCommandSlot), kCommandSlot.size(), command);
  out.replace(out.find(kCategorySlot), kCategorySlot.size(), candidate);
  return out;
}

CategoryQuery CategoryQuery::from_hierarchy(std::string command, const AttributeHierarchy& hierarchy) {
  CategoryQuery q;
  q.command = std::move(command);
  for (const auto& c : hierarchy.categories()) q.candidates.push_back(c.name);
  return q;
}

double perplexity_from_log_probs(std::span<const double> token_log_probs) {
  if (token_log_probs.empty()) throw ValidationError("perplexity needs at least one token");
  double nll = 0.0;
  for (double lp : token_log_probs) nll -= lp;
  return std::exp(nll / static_cast<double>(token_log_probs.size()));
}

nlohmann::json CategoryResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table) rows.push_back({{"category", r.category}, {"sentence", r.sentence}, {"perplexity", r.perplexity}});
  return {{"command", command}, {"category", category}, {"tie", tie}, {"overridden", overridden}, {"scores", rows}};
}

CategoryResult find_category(const CategoryQuery& query, PerplexityScorer& scorer) {
  query.validate();
  if (!scorer.available()) throw BackendError("perplexity scorer is unavailable");
  CategoryResult result;
  result.command = query.command;
  const CategoryScore* best = nullptr;
  for (const auto& candidate : query.candidates) {
    const std::string sentence = query.render(candidate);
    const double ppl = scorer.perplexity(sentence);
    if (!std::isfinite(ppl)) throw BackendError("scorer returned a non-finite perplexity for '" + sentence + "'");
    result.table.push_back({candidate, sentence, ppl});
  }
  for (const auto& row : result.table) {
    if (best == nullptr || row.perplexity < best->perplexity) {
      best = &row;
    } else if (row.perplexity == best->perplexity && row.category < best->category) {
      best = &row;
    }
  }
  for (const auto& row : result.table) {
    if (&row != best && row.perplexity == best->perplexity) result.tie = true;
  }
  result.category = best->category;
  return result;
}

CategoryResult find_category(const CategoryQuery& query, PerplexityScorer* scorer,
                             const std::map<std::string, std::string>& overrides) {
  if (auto it = overrides.find(query.command); it != overrides.end()) {
    CategoryResult r;
    r.command = query.command;
    r.category = it->second;
    r.overridden = true;
    return r;
  }
  if (scorer == nullptr) throw BackendError("no perplexity scorer configured for '" + query.command + "'");
  return find_category(query, *scorer);
}

}  // namespace ppe
