#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ppe/attribute_schema.hpp"

namespace ppe {

inline constexpr std::string_view kDefaultCategoryTemplate = "[Y] is a kind of [X]";
inline constexpr std::string_view kCommandSlot = "[Y]";
inline constexpr std::string_view kCategorySlot = "[X]";

struct CategoryQuery {
  std::string command;
  std::vector<std::string> candidates;
  std::string template_text{kDefaultCategoryTemplate};

  /// Template holds [Y] and [X] exactly once each, and there is a candidate.
  void validate() const;
  std::string render(std::string_view candidate) const;

  /// Every category name of `hierarchy` as a candidate.
  static CategoryQuery from_hierarchy(std::string command, const AttributeHierarchy& hierarchy);
};

/// Sentence scorer backed by a language model.
class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  virtual bool available() const { return true; }
  virtual double perplexity(const std::string& sentence) = 0;
};

/// exp of the mean negative log-likelihood per token.
double perplexity_from_log_probs(std::span<const double> token_log_probs);

struct CategoryScore {
  std::string category;
  std::string sentence;
  double perplexity = 0.0;
};

struct CategoryResult {
  std::string command;
  std::string category;
  std::vector<CategoryScore> table;  // one row per candidate, candidate order
  bool tie = false;
  bool overridden = false;

  nlohmann::json to_json() const;
};

/// Lowest-perplexity candidate; ties resolve to the lexicographically first and are flagged.
CategoryResult find_category(const CategoryQuery& query, PerplexityScorer& scorer);

/// Pinned command -> category entries bypass the scorer entirely.
CategoryResult find_category(const CategoryQuery& query, PerplexityScorer* scorer,
                             const std::map<std::string, std::string>& overrides);

}  // namespace ppe
