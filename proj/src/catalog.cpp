#include "dppp/catalog.hpp"

#include <json.hpp>

#include <set>

#include "default_catalog_data.hpp"

namespace dppp::forge {

using nlohmann::json;

const std::vector<std::string>& AttributeCatalog::view_directives() {
    static const std::vector<std::string> kDirectives = {
        "multiple views of the same character", "multiple views",
        "side view", "back view", "front view"};
    return kDirectives;
}

std::uint64_t AttributeCatalog::clothing_combination_capacity() const {
    const std::uint64_t nc = colors.size();
    return (nc * upper_styles.size()) * (nc * lower_styles.size()) *
           (nc * footwear_styles.size());
}

namespace {

void check_list(const std::string& field, const std::vector<std::string>& list) {
    if (list.empty()) {
        throw CatalogError(field);
    }
    std::set<std::string> seen;
    for (const auto& item : list) {
        if (item.empty() || !seen.insert(item).second) {
            throw CatalogError(field);
        }
        if (item.find('{') != std::string::npos || item.find('}') != std::string::npos) {
            throw CatalogError(field);
        }
    }
}

std::vector<std::string> get_list(const json& j, const std::string& field) {
    if (!j.contains(field) || !j.at(field).is_array()) {
        throw CatalogError(field);
    }
    std::vector<std::string> out;
    for (const auto& item : j.at(field)) {
        if (!item.is_string()) {
            throw CatalogError(field);
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

} // namespace

void AttributeCatalog::validate() const {
    check_list("colors", colors);
    check_list("patterns", patterns);
    check_list("clothing_styles.upper", upper_styles);
    check_list("clothing_styles.lower", lower_styles);
    check_list("clothing_styles.footwear", footwear_styles);
    check_list("body_shapes", body_shapes);
    check_list("hairstyles.colors", hair_colors);
    check_list("hairstyles.lengths", hair_lengths);
    check_list("hairstyles.textures", hair_textures);
    check_list("hairstyles.arrangements", hair_arrangements);
    check_list("hairstyles.bangs", hair_bangs);
    check_list("skin_tones", skin_tones);
    check_list("genders", genders);
    check_list("actions", actions);
}

AttributeCatalog parse_attribute_catalog(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw CatalogError(std::string("catalog is not valid JSON: ") + e.what());
    }
    AttributeCatalog cat;
    cat.version = j.value("version", 1);
    cat.colors = get_list(j, "colors");
    cat.patterns = get_list(j, "patterns");
    if (!j.contains("clothing_styles") || !j.at("clothing_styles").is_object()) {
        throw CatalogError("clothing_styles");
    }
    const auto& styles = j.at("clothing_styles");
    // Garment slots must cover exactly {upper, lower, footwear}.
    std::set<std::string> slots;
    for (auto it = styles.begin(); it != styles.end(); ++it) {
        slots.insert(it.key());
    }
    if (slots != std::set<std::string>{"upper", "lower", "footwear"}) {
        throw CatalogError("clothing_styles");
    }
    cat.upper_styles = get_list(styles, "upper");
    cat.lower_styles = get_list(styles, "lower");
    cat.footwear_styles = get_list(styles, "footwear");
    cat.body_shapes = get_list(j, "body_shapes");
    if (!j.contains("hairstyles") || !j.at("hairstyles").is_object()) {
        throw CatalogError("hairstyles");
    }
    const auto& hair = j.at("hairstyles");
    cat.hair_colors = get_list(hair, "colors");
    cat.hair_lengths = get_list(hair, "lengths");
    cat.hair_textures = get_list(hair, "textures");
    cat.hair_arrangements = get_list(hair, "arrangements");
    cat.hair_bangs = get_list(hair, "bangs");
    cat.skin_tones = get_list(j, "skin_tones");
    cat.genders = get_list(j, "genders");
    cat.actions = get_list(j, "actions");
    cat.validate();
    return cat;
}

AttributeCatalog load_attribute_catalog(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw CatalogError("catalog file not found: " + path.string());
    }
    return parse_attribute_catalog(read_text_file(path));
}

std::string default_catalog_json() {
    return detail::kDefaultCatalogJson;
}

const AttributeCatalog& default_catalog() {
    static const AttributeCatalog cat = parse_attribute_catalog(default_catalog_json());
    return cat;
}

} // namespace dppp::forge
