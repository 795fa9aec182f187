#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "dppp/common.hpp"

namespace dppp::forge {

class CatalogError : public Error {
public:
    using Error::Error;
};

// Static attribute vocabulary that drives prompt combinatorics. Shipped as a
// versioned JSON asset; every list must be non-empty with unique entries.
struct AttributeCatalog {
    int version = 1;
    std::vector<std::string> colors;
    std::vector<std::string> patterns;
    std::vector<std::string> upper_styles;
    std::vector<std::string> lower_styles;
    std::vector<std::string> footwear_styles;
    std::vector<std::string> body_shapes;
    std::vector<std::string> hair_colors;
    std::vector<std::string> hair_lengths;
    std::vector<std::string> hair_textures;
    std::vector<std::string> hair_arrangements;
    std::vector<std::string> hair_bangs;
    std::vector<std::string> skin_tones;
    std::vector<std::string> genders;
    std::vector<std::string> actions;

    // Appended verbatim to every character prompt.
    static const std::vector<std::string>& view_directives();

    // Number of distinct (color, style) x3 clothing combinations.
    std::uint64_t clothing_combination_capacity() const;

    void validate() const; // throws CatalogError naming the offending field
};

AttributeCatalog parse_attribute_catalog(const std::string& json_text);
AttributeCatalog load_attribute_catalog(const std::filesystem::path& path);

// The catalog embedded at build time from assets/default_catalog.json.
const AttributeCatalog& default_catalog();
std::string default_catalog_json();

} // namespace dppp::forge
