#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ppe {

/// A short visual attribute phrase such as "grey hair" or "with earrings".
///
/// Binary attributes carry the text of their counterpart ("without earrings")
/// so that zero-shot filtering can use the with/without pair as labels.
struct Attribute {
  std::string text;
  std::string category_id;
  bool is_binary = false;
  std::optional<std::string> negation_text;
  /// True for the "without X" half of a binary pair.
  bool is_negation = false;

  bool operator==(const Attribute&) const = default;
};

struct Category {
  std::string id;
  std::string name;
  bool binary = false;
  std::vector<Attribute> attributes;

  bool operator==(const Category&) const = default;
};

enum class HierarchySource { bundled, mined, user };

std::string_view to_string(HierarchySource source);

/// Categories of face attributes; immutable once constructed.
class AttributeHierarchy {
 public:
  /// Validates every invariant and throws ValidationError naming the offending
  /// category or attribute.
  AttributeHierarchy(std::vector<Category> categories, std::string version, HierarchySource source);

  const std::vector<Category>& categories() const { return categories_; }
  const std::string& version() const { return version_; }
  HierarchySource source() const { return source_; }

  const Attribute* find(std::string_view text) const;
  const Category* category(std::string_view id) const;
  const Category* category_by_name(std::string_view name) const;
  /// The unique category containing `text`, or nullptr.
  const Category* category_of(std::string_view text) const;

  /// Every attribute in category order.
  std::vector<const Attribute*> attributes() const;
  std::size_t attribute_count() const { return index_.size(); }

  /// Stable digest of the hierarchy content, used in cache keys.
  std::string fingerprint() const;

  bool operator==(const AttributeHierarchy& other) const {
    return version_ == other.version_ && categories_ == other.categories_;
  }

 private:
  std::vector<Category> categories_;
  std::string version_;
  HierarchySource source_;
  std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> index_;
};

/// Attribute texts must be non-empty, lowercase and at most eight words.
void validate_attribute_text(std::string_view text);

AttributeHierarchy parse_hierarchy(const nlohmann::json& doc, HierarchySource source = HierarchySource::user);
nlohmann::json to_json(const AttributeHierarchy& hierarchy);

/// Accepts a bundled identifier ("celeba_face_v1") or a path to a hierarchy JSON file.
AttributeHierarchy load_hierarchy(const std::string& source);
void save_hierarchy(const AttributeHierarchy& hierarchy, const std::filesystem::path& path);

std::vector<std::string> bundled_hierarchy_ids();
std::optional<std::string_view> bundled_hierarchy_json(std::string_view id);

/// Zero-shot labels for a command: all texts of the command's category, or
/// exactly {text, negation} for binary attributes.
///
/// `category_hint` names a category (by id or name) for commands that are not
/// themselves part of the hierarchy, e.g. the output of find_category.
std::vector<std::string> labels_for_command(const AttributeHierarchy& hierarchy, std::string_view command,
                                            std::optional<std::string_view> category_hint = std::nullopt);

/// Resolves the category of `command`, honouring a hint for out-of-hierarchy commands.
const Category& resolve_command_category(const AttributeHierarchy& hierarchy, std::string_view command,
                                         std::optional<std::string_view> category_hint = std::nullopt);

// ---------------------------------------------------------------------------
// Prompt mining

inline constexpr std::string_view kMaskSlot = "[MASK]";
inline constexpr std::string_view kKeywordSlot = "[X]";

struct MiningPrompt {
  std::string template_text;  // e.g. "a face with [MASK] [X]"
  std::string keyword;        // e.g. "eyes"

  /// Substitutes the keyword; the result holds exactly one mask token.
  std::string render() const;
  void validate() const;
};

/// Masked-language-model infill backend.
class TextInfiller {
 public:
  virtual ~TextInfiller() = default;
  virtual bool available() const { return true; }
  /// Most likely fillers for the single [MASK] in `masked_sentence`, best first.
  virtual std::vector<std::string> infill(const std::string& masked_sentence, std::size_t top_k) = 0;
};

struct MiningRecord {
  std::string template_text;
  std::string keyword;
  std::string sentence;
  std::vector<std::string> candidates;  // infill tokens, lowercased, deduplicated
  std::vector<std::string> attributes;  // "<candidate> <keyword>"

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kDefaultMiningTopK = 10;

std::vector<MiningRecord> mine_attributes(const std::vector<MiningPrompt>& prompts, TextInfiller& infiller,
                                          std::size_t top_k = kDefaultMiningTopK);

/// One JSON object per line, one line per prompt record.
void write_mining_jsonl(const std::vector<MiningRecord>& records, std::ostream& out);

}  // namespace ppe
