#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dppp/catalog.hpp"

namespace dppp::forge {

class CapacityError : public Error {
public:
    CapacityError(const std::string& msg, std::uint64_t max_feasible_count)
        : Error(msg), max_feasible(max_feasible_count) {}
    std::uint64_t max_feasible;
};

enum class LightingTag { day_sunshine, dusk, night_dark };
enum class SceneCategory { street, commercial, park, field, residential, indoor };

const char* to_string(LightingTag tag);
const char* to_string(SceneCategory cat);
LightingTag parse_lighting_tag(const std::string& s);   // throws EnumError
SceneCategory parse_scene_category(const std::string& s);

// "day, sunshine" / "dusk" / "night, dark"
const char* lighting_phrase(LightingTag tag);

struct GarmentChoice {
    std::string color;
    std::string pattern; // empty means plain
    std::string style;

    bool operator==(const GarmentChoice&) const = default;
};

struct HairChoice {
    std::string color;
    std::string length;
    std::string texture;
    std::string arrangement;
    std::string bangs;

    bool operator==(const HairChoice&) const = default;
};

struct IdentitySpec {
    int identity_id = 0;
    std::string gender;
    std::string action;
    GarmentChoice upper;
    GarmentChoice lower;
    GarmentChoice footwear;
    std::string body_shape;
    HairChoice hair;
    std::string skin_tone;
    LightingTag lighting = LightingTag::day_sunshine;

    // (upper.color, upper.style, lower.color, lower.style, footwear.color,
    // footwear.style) — unique across one dataset run.
    std::string clothing_key() const;

    bool operator==(const IdentitySpec&) const = default;
};

struct CharacterPrompt {
    int identity_id = 0;
    std::string text;
};

struct ScenePrompt {
    SceneCategory scene_category = SceneCategory::street;
    LightingTag lighting = LightingTag::day_sunshine;
    std::string text;
};

// Default character template; placeholders use {name} syntax so unfilled
// slots remain detectable by a brace scan.
const std::string& character_prompt_template();

std::vector<IdentitySpec> generate_identity_specs(const AttributeCatalog& catalog,
                                                  std::uint64_t count, std::uint64_t seed);

CharacterPrompt render_character_prompt(const IdentitySpec& spec);
ScenePrompt render_scene_prompt(SceneCategory category, LightingTag lighting);

std::string identity_specs_to_json(const std::vector<IdentitySpec>& specs);
std::vector<IdentitySpec> identity_specs_from_json(const std::string& text);

} // namespace dppp::forge
