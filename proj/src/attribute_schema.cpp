#include "ppe/attribute_schema.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "ppe/errors.hpp"
#include "ppe/hashing.hpp"

namespace ppe {

namespace {

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      out.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string trim_lower(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(begin, end - begin + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(HierarchySource source) {
  switch (source) {
    case HierarchySource::bundled:
      return "bundled";
    case HierarchySource::mined:
      return "mined";
    case HierarchySource::user:
      return "user";
  }
  return "user";
}

void validate_attribute_text(std::string_view text) {
  if (text.empty()) throw ValidationError("attribute text is empty");
  if (std::isspace(static_cast<unsigned char>(text.front())) || std::isspace(static_cast<unsigned char>(text.back()))) {
    throw ValidationError("attribute '" + std::string(text) + "' has surrounding whitespace");
  }
  for (char c : text) {
    if (std::isupper(static_cast<unsigned char>(c))) {
      throw ValidationError("attribute '" + std::string(text) + "' is not lowercase");
    }
  }
  std::istringstream words{std::string(text)};
  std::size_t count = 0;
  for (std::string w; words >> w;) ++count;
  if (count > 8) throw ValidationError("attribute '" + std::string(text) + "' exceeds 8 words");
}

AttributeHierarchy::AttributeHierarchy(std::vector<Category> categories, std::string version, HierarchySource source)
    : categories_(std::move(categories)), version_(std::move(version)), source_(source) {
  if (categories_.empty()) throw ValidationError("hierarchy has no categories");
  std::set<std::string, std::less<>> names;
  std::set<std::string, std::less<>> ids;
  for (std::size_t c = 0; c < categories_.size(); ++c) {
    const Category& cat = categories_[c];
    if (cat.name.empty()) throw ValidationError("category #" + std::to_string(c) + " has no name");
    if (!names.insert(cat.name).second) throw ValidationError("duplicate category name '" + cat.name + "'");
    if (!ids.insert(cat.id).second) throw ValidationError("duplicate category id '" + cat.id + "'");
    if (cat.attributes.size() < 2) {
      throw ValidationError("category '" + cat.name + "' needs at least 2 attributes");
    }
    if (cat.binary && cat.attributes.size() != 2) {
      throw ValidationError("binary category '" + cat.name + "' must hold exactly the with/without pair");
    }
    for (std::size_t a = 0; a < cat.attributes.size(); ++a) {
      const Attribute& attr = cat.attributes[a];
      try {
        validate_attribute_text(attr.text);
      } catch (const ValidationError& e) {
        throw ValidationError("category '" + cat.name + "': " + e.what());
      }
      if (attr.category_id != cat.id) {
        throw ValidationError("attribute '" + attr.text + "' does not reference category '" + cat.name + "'");
      }
      if (attr.is_binary != attr.negation_text.has_value() || attr.is_binary != cat.binary) {
        throw ValidationError("attribute '" + attr.text + "' in category '" + cat.name +
                              "': binary flag and negation text disagree");
      }
      auto [it, inserted] = index_.emplace(attr.text, std::make_pair(c, a));
      if (!inserted) {
        throw ValidationError("duplicate attribute '" + attr.text + "' in categories '" +
                              categories_[it->second.first].name + "' and '" + cat.name + "'");
      }
    }
  }
}

const Attribute* AttributeHierarchy::find(std::string_view text) const {
  auto it = index_.find(text);
  if (it == index_.end()) return nullptr;
  return &categories_[it->second.first].attributes[it->second.second];
}

const Category* AttributeHierarchy::category(std::string_view id) const {
  for (const auto& c : categories_) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const Category* AttributeHierarchy::category_by_name(std::string_view name) const {
  for (const auto& c : categories_) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const Category* AttributeHierarchy::category_of(std::string_view text) const {
  auto it = index_.find(text);
  if (it == index_.end()) return nullptr;
  return &categories_[it->second.first];
}

std::vector<const Attribute*> AttributeHierarchy::attributes() const {
  std::vector<const Attribute*> out;
  out.reserve(index_.size());
  for (const auto& c : categories_) {
    for (const auto& a : c.attributes) out.push_back(&a);
  }
  return out;
}

std::string AttributeHierarchy::fingerprint() const { return sha256_hex(to_json(*this).dump()); }

AttributeHierarchy parse_hierarchy(const nlohmann::json& doc, HierarchySource source) {
  if (!doc.is_object()) throw ValidationError("hierarchy document must be a JSON object");
  if (!doc.contains("categories") || !doc["categories"].is_array()) {
    throw ValidationError("hierarchy document lacks a 'categories' array");
  }
  std::string version = doc.value("version", std::string{});
  if (version.empty()) throw ValidationError("hierarchy document lacks a 'version'");

  std::vector<Category> categories;
  std::size_t index = 0;
  for (const auto& entry : doc["categories"]) {
    const std::string where = "category #" + std::to_string(index++);
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw ValidationError(where + " lacks a string 'name'");
    }
    Category cat;
    cat.name = entry["name"].get<std::string>();
    cat.id = entry.contains("id") ? entry["id"].get<std::string>() : slug(cat.name);
    cat.binary = entry.value("binary", false);
    if (!entry.contains("attributes") || !entry["attributes"].is_array()) {
      throw ValidationError("category '" + cat.name + "' lacks an 'attributes' array");
    }
    std::vector<std::string> texts;
    for (const auto& a : entry["attributes"]) {
      if (!a.is_string()) throw ValidationError("category '" + cat.name + "' has a non-string attribute");
      texts.push_back(a.get<std::string>());
    }
    if (cat.binary && texts.size() != 2) {
      throw ValidationError("binary category '" + cat.name + "' must list exactly the with/without pair");
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      Attribute attr{texts[i], cat.id, cat.binary, std::nullopt, false};
      if (cat.binary) {
        attr.negation_text = texts[1 - i];
        attr.is_negation = (i == 1);
      }
      cat.attributes.push_back(std::move(attr));
    }
    categories.push_back(std::move(cat));
  }
  return AttributeHierarchy(std::move(categories), std::move(version), source);
}

nlohmann::json to_json(const AttributeHierarchy& hierarchy) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : hierarchy.categories()) {
    nlohmann::json entry{{"name", c.name}, {"id", c.id}};
    if (c.binary) entry["binary"] = true;
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& a : c.attributes) attrs.push_back(a.text);
    entry["attributes"] = std::move(attrs);
    cats.push_back(std::move(entry));
  }
  return {{"version", hierarchy.version()}, {"categories", std::move(cats)}};
}

AttributeHierarchy load_hierarchy(const std::string& source) {
  if (auto bundled = bundled_hierarchy_json(source)) {
    return parse_hierarchy(nlohmann::json::parse(*bundled), HierarchySource::bundled);
  }
  std::ifstream in(source);
  if (!in) throw ValidationError("cannot open hierarchy '" + source + "' (not a file or bundled id)");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("hierarchy '" + source + "' is not valid JSON: " + e.what());
  }
  auto src = HierarchySource::user;
  if (doc.value("source", std::string{}) == "mined") src = HierarchySource::mined;
  return parse_hierarchy(doc, src);
}

void save_hierarchy(const AttributeHierarchy& hierarchy, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write hierarchy to '" + path.string() + "'");
  auto doc = to_json(hierarchy);
  doc["source"] = std::string(to_string(hierarchy.source()));
  out << doc.dump(2) << '\n';
}

const Category& resolve_command_category(const AttributeHierarchy& hierarchy, std::string_view command,
                                         std::optional<std::string_view> category_hint) {
  if (const Category* c = hierarchy.category_of(command)) return *c;
  if (category_hint) {
    if (const Category* c = hierarchy.category(*category_hint)) return *c;
    if (const Category* c = hierarchy.category_by_name(*category_hint)) return *c;
    throw ValidationError("category hint '" + std::string(*category_hint) + "' is not in the hierarchy");
  }
  throw ValidationError("command '" + std::string(command) +
                        "' is not in the hierarchy; resolve its category with find_category or pin it manually");
}

std::vector<std::string> labels_for_command(const AttributeHierarchy& hierarchy, std::string_view command,
                                            std::optional<std::string_view> category_hint) {
  if (const Attribute* attr = hierarchy.find(command); attr != nullptr && attr->is_binary) {
    return {attr->text, *attr->negation_text};
  }
  const Category& cat = resolve_command_category(hierarchy, command, category_hint);
  std::vector<std::string> labels;
  for (const auto& a : cat.attributes) labels.push_back(a.text);
  if (std::find(labels.begin(), labels.end(), command) == labels.end()) labels.emplace_back(command);
  return labels;
}

// ---------------------------------------------------------------------------

void MiningPrompt::validate() const {
  if (count_occurrences(template_text, kMaskSlot) != 1) {
    throw ValidationError("prompt '" + template_text + "' must contain exactly one [MASK] slot");
  }
  if (count_occurrences(template_text, kKeywordSlot) != 1) {
    throw ValidationError("prompt '" + template_text + "' must contain exactly one [X] slot");
  }
  if (keyword.empty()) throw ValidationError("prompt '" + template_text + "' has an empty keyword");
  if (keyword.find(kMaskSlot) != std::string::npos) {
    throw ValidationError("keyword '" + keyword + "' contains a mask token");
  }
}

std::string MiningPrompt::render() const {
  validate();
  std::string out = template_text;
  out.replace(out.find(kKeywordSlot), kKeywordSlot.size(), keyword);
  return out;
}

nlohmann::json MiningRecord::to_json() const {
  return {{"template", template_text}, {"keyword", keyword},      {"sentence", sentence},
          {"candidates", candidates},  {"attributes", attributes}};
}

std::vector<MiningRecord> mine_attributes(const std::vector<MiningPrompt>& prompts, TextInfiller& infiller,
                                          std::size_t top_k) {
  if (top_k < 1) throw ValidationError("top_k must be at least 1");
  for (const auto& p : prompts) p.validate();
  if (!infiller.available()) throw BackendError("text infill backend is unavailable");

  std::vector<MiningRecord> records;
  records.reserve(prompts.size());
  for (const auto& prompt : prompts) {
    MiningRecord rec{prompt.template_text, prompt.keyword, prompt.render(), {}, {}};
    std::set<std::string> seen;
    for (const auto& raw : infiller.infill(rec.sentence, top_k)) {
      std::string token = trim_lower(raw);
      if (token.empty() || !seen.insert(token).second) continue;
      rec.candidates.push_back(token);
      rec.attributes.push_back(token + " " + trim_lower(prompt.keyword));
      if (rec.candidates.size() == top_k) break;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_mining_jsonl(const std::vector<MiningRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

}  // namespace ppe
