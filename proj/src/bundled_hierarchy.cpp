#include <array>
#include <string>
#include <string_view>
#include <utility>

#include "ppe/attribute_schema.hpp"

namespace ppe {

namespace {

// Face attribute hierarchy: common-sense categories with attributes mined from a
// masked language model and curated by hand, plus CelebA-style binary pairs.
constexpr std::string_view kCelebaFaceV1 = R"json({
  "version": "celeba_face_v1",
  "categories": [
    {"name": "gender", "attributes": ["male", "female"]},
    {"name": "hair color", "attributes": ["black hair", "blond hair", "brown hair", "grey hair", "red hair"]},
    {"name": "hair length", "attributes": ["long hair", "short hair", "no hair"]},
    {"name": "hair style", "attributes": ["curly hair", "straight hair", "bald", "wavy hair", "receding hairline"]},
    {"name": "eye color", "attributes": ["blue eyes", "brown eyes", "black eyes", "grey eyes", "green eyes"]},
    {"name": "eye status", "attributes": ["open eyes", "closed eyes"]},
    {"name": "eye shape", "attributes": ["narrow eyes", "wide eyes", "big eyes", "small eyes", "round eyes"]},
    {"name": "nose shape", "attributes": ["big nose", "long nose", "pointed nose", "small nose", "hooked nose",
                                          "short nose", "thick nose", "thin nose", "pinched nose", "flat nose"]},
    {"name": "face shape", "attributes": ["pointy face", "round face", "square face", "oval face", "long face"]},
    {"name": "skin color", "attributes": ["white skin", "black skin", "yellow skin"]},
    {"name": "mouth status", "attributes": ["open mouth", "close mouth"]},
    {"name": "mouth size", "attributes": ["big mouth", "small mouth"]},
    {"name": "eyebrows", "attributes": ["round eyebrows", "high eyebrows", "arched eyebrows", "long eyebrows",
                                        "thick eyebrows", "dark eyebrows", "straight eyebrows", "thin eyebrows",
                                        "short eyebrows"]},
    {"name": "beard", "attributes": ["goatee", "mustache", "no beard", "sideburns", "5 o'clock shadow"]},
    {"name": "earrings", "binary": true, "attributes": ["with earrings", "without earrings"]},
    {"name": "makeup", "binary": true, "attributes": ["with makeup", "without makeup"]},
    {"name": "smile", "binary": true, "attributes": ["with smile", "without smile"]},
    {"name": "lipstick", "binary": true, "attributes": ["with lipstick", "without lipstick"]},
    {"name": "wrinkles", "binary": true, "attributes": ["with wrinkles", "without wrinkles"]},
    {"name": "glasses", "binary": true, "attributes": ["with glasses", "without glasses"]},
    {"name": "bangs", "binary": true, "attributes": ["with bangs", "without bangs"]},
    {"name": "rosy cheeks", "binary": true, "attributes": ["with rosy cheeks", "without rosy cheeks"]},
    {"name": "bags under eyes", "binary": true, "attributes": ["with bags under eyes", "without bags under eyes"]},
    {"name": "high cheekbones", "binary": true, "attributes": ["with high cheekbones", "without high cheekbones"]}
  ]
})json";

constexpr std::array<std::pair<std::string_view, std::string_view>, 1> kBundled{{
    {"celeba_face_v1", kCelebaFaceV1},
}};

}  // namespace

std::vector<std::string> bundled_hierarchy_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, _] : kBundled) ids.emplace_back(id);
  return ids;
}

std::optional<std::string_view> bundled_hierarchy_json(std::string_view id) {
  for (const auto& [name, json] : kBundled) {
    if (name == id) return json;
  }
  return std::nullopt;
}

}  // namespace ppe
