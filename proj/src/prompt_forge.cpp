#include "dppp/prompt_forge.hpp"

#include <json.hpp>

#include <map>
#include <unordered_set>

#include "dppp/rng.hpp"

namespace dppp::forge {

using nlohmann::json;

const char* to_string(LightingTag tag) {
    switch (tag) {
        case LightingTag::day_sunshine: return "day_sunshine";
        case LightingTag::dusk: return "dusk";
        case LightingTag::night_dark: return "night_dark";
    }
    throw EnumError("invalid lighting tag value");
}

const char* to_string(SceneCategory cat) {
    switch (cat) {
        case SceneCategory::street: return "street";
        case SceneCategory::commercial: return "commercial";
        case SceneCategory::park: return "park";
        case SceneCategory::field: return "field";
        case SceneCategory::residential: return "residential";
        case SceneCategory::indoor: return "indoor";
    }
    throw EnumError("invalid scene category value");
}

LightingTag parse_lighting_tag(const std::string& s) {
    if (s == "day_sunshine") return LightingTag::day_sunshine;
    if (s == "dusk") return LightingTag::dusk;
    if (s == "night_dark") return LightingTag::night_dark;
    throw EnumError("unknown lighting tag: " + s);
}

SceneCategory parse_scene_category(const std::string& s) {
    if (s == "street") return SceneCategory::street;
    if (s == "commercial") return SceneCategory::commercial;
    if (s == "park") return SceneCategory::park;
    if (s == "field") return SceneCategory::field;
    if (s == "residential") return SceneCategory::residential;
    if (s == "indoor") return SceneCategory::indoor;
    throw EnumError("unknown scene category: " + s);
}

const char* lighting_phrase(LightingTag tag) {
    switch (tag) {
        case LightingTag::day_sunshine: return "day, sunshine";
        case LightingTag::dusk: return "dusk";
        case LightingTag::night_dark: return "night, dark";
    }
    throw EnumError("invalid lighting tag value");
}

std::string IdentitySpec::clothing_key() const {
    return upper.color + "|" + upper.style + "|" + lower.color + "|" + lower.style +
           "|" + footwear.color + "|" + footwear.style;
}

const std::string& character_prompt_template() {
    static const std::string kTemplate =
        "{gender}, {action}, {upper}, {lower}, {footwear}, {lighting}, "
        "{body_shape}, {hair_color} hair color, {hair_length} hair, "
        "{hair_texture} hair texture, {hair_arrangement}, {hair_bangs}, "
        "{skin_tone} skin, simple background, "
        "multiple views of the same character, multiple views, side view, "
        "back view, front view";
    return kTemplate;
}

namespace {

const std::string& pick(Rng& rng, const std::vector<std::string>& list) {
    return list[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(list.size()) - 1))];
}

GarmentChoice pick_garment(Rng& rng, const AttributeCatalog& cat,
                           const std::vector<std::string>& styles, bool allow_pattern) {
    GarmentChoice g;
    g.color = pick(rng, cat.colors);
    if (allow_pattern) {
        // Index 0 selects a plain garment, the rest map into the pattern list.
        const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(cat.patterns.size()));
        g.pattern = idx == 0 ? std::string() : cat.patterns[static_cast<std::size_t>(idx - 1)];
    }
    g.style = pick(rng, styles);
    return g;
}

std::string substitute(const std::string& templ,
                       const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(templ.size() * 2);
    std::size_t i = 0;
    while (i < templ.size()) {
        if (templ[i] == '{') {
            const std::size_t close = templ.find('}', i);
            if (close == std::string::npos) {
                throw Error("template has unterminated placeholder");
            }
            const std::string name = templ.substr(i + 1, close - i - 1);
            const auto it = values.find(name);
            if (it == values.end()) {
                throw Error("template placeholder has no value: " + name);
            }
            out += it->second;
            i = close + 1;
        } else {
            out += templ[i++];
        }
    }
    return out;
}

std::string garment_text(const GarmentChoice& g) {
    std::string s = g.color;
    if (!g.pattern.empty()) {
        s += " " + g.pattern;
    }
    return s + " " + g.style;
}

} // namespace

std::vector<IdentitySpec> generate_identity_specs(const AttributeCatalog& catalog,
                                                  std::uint64_t count, std::uint64_t seed) {
    catalog.validate();
    const std::uint64_t capacity = catalog.clothing_combination_capacity();
    if (count > capacity) {
        throw CapacityError("requested " + std::to_string(count) +
                                " identities but the catalog only has " +
                                std::to_string(capacity) + " distinct clothing combinations",
                            capacity);
    }

    Rng rng(seed);
    std::vector<IdentitySpec> specs;
    specs.reserve(count);
    std::unordered_set<std::string> used;
    const std::uint64_t max_draws = 100 * count;
    std::uint64_t draws = 0;
    static const LightingTag kTags[3] = {LightingTag::day_sunshine, LightingTag::dusk,
                                         LightingTag::night_dark};
    while (specs.size() < count) {
        if (draws++ >= max_draws) {
            throw CapacityError("deduplication retry budget exhausted after " +
                                    std::to_string(max_draws) + " draws; " +
                                    std::to_string(specs.size()) + " unique identities found",
                                specs.size());
        }
        IdentitySpec spec;
        spec.identity_id = static_cast<int>(specs.size());
        spec.gender = pick(rng, catalog.genders);
        spec.action = pick(rng, catalog.actions);
        spec.upper = pick_garment(rng, catalog, catalog.upper_styles, true);
        spec.lower = pick_garment(rng, catalog, catalog.lower_styles, true);
        spec.footwear = pick_garment(rng, catalog, catalog.footwear_styles, false);
        spec.body_shape = pick(rng, catalog.body_shapes);
        spec.hair.color = pick(rng, catalog.hair_colors);
        spec.hair.length = pick(rng, catalog.hair_lengths);
        spec.hair.texture = pick(rng, catalog.hair_textures);
        spec.hair.arrangement = pick(rng, catalog.hair_arrangements);
        spec.hair.bangs = pick(rng, catalog.hair_bangs);
        spec.skin_tone = pick(rng, catalog.skin_tones);
        spec.lighting = kTags[rng.uniform_int(0, 2)];
        if (!used.insert(spec.clothing_key()).second) {
            continue;
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

CharacterPrompt render_character_prompt(const IdentitySpec& spec) {
    std::map<std::string, std::string> values = {
        {"gender", spec.gender},
        {"action", spec.action},
        {"upper", garment_text(spec.upper)},
        {"lower", garment_text(spec.lower)},
        {"footwear", garment_text(spec.footwear)},
        {"lighting", lighting_phrase(spec.lighting)},
        {"body_shape", spec.body_shape},
        {"hair_color", spec.hair.color},
        {"hair_length", spec.hair.length},
        {"hair_texture", spec.hair.texture},
        {"hair_arrangement", spec.hair.arrangement},
        {"hair_bangs", spec.hair.bangs},
        {"skin_tone", spec.skin_tone},
    };
    CharacterPrompt prompt;
    prompt.identity_id = spec.identity_id;
    prompt.text = substitute(character_prompt_template(), values);
    return prompt;
}

ScenePrompt render_scene_prompt(SceneCategory category, LightingTag lighting) {
    static const std::map<SceneCategory, std::string> kScenePhrases = {
        {SceneCategory::street, "city street"},
        {SceneCategory::commercial, "commercial area"},
        {SceneCategory::park, "park"},
        {SceneCategory::field, "open field"},
        {SceneCategory::residential, "residential area"},
        {SceneCategory::indoor, "indoor hall"},
    };
    ScenePrompt prompt;
    prompt.scene_category = category;
    prompt.lighting = lighting;
    prompt.text = "a wide photo of an empty " + kScenePhrases.at(category) + ", " +
                  lighting_phrase(lighting) + ", no people, photorealistic background";
    return prompt;
}

namespace {

json garment_to_json(const GarmentChoice& g) {
    return json{{"color", g.color}, {"pattern", g.pattern}, {"style", g.style}};
}

GarmentChoice garment_from_json(const json& j) {
    return GarmentChoice{j.at("color"), j.at("pattern"), j.at("style")};
}

} // namespace

std::string identity_specs_to_json(const std::vector<IdentitySpec>& specs) {
    json arr = json::array();
    for (const auto& s : specs) {
        arr.push_back(json{
            {"identity_id", s.identity_id},
            {"gender", s.gender},
            {"action", s.action},
            {"upper", garment_to_json(s.upper)},
            {"lower", garment_to_json(s.lower)},
            {"footwear", garment_to_json(s.footwear)},
            {"body_shape", s.body_shape},
            {"hair",
             {{"color", s.hair.color},
              {"length", s.hair.length},
              {"texture", s.hair.texture},
              {"arrangement", s.hair.arrangement},
              {"bangs", s.hair.bangs}}},
            {"skin_tone", s.skin_tone},
            {"lighting", to_string(s.lighting)},
        });
    }
    return arr.dump(2) + "\n";
}

std::vector<IdentitySpec> identity_specs_from_json(const std::string& text) {
    json arr = json::parse(text);
    std::vector<IdentitySpec> specs;
    for (const auto& j : arr) {
        IdentitySpec s;
        s.identity_id = j.at("identity_id");
        s.gender = j.at("gender");
        s.action = j.at("action");
        s.upper = garment_from_json(j.at("upper"));
        s.lower = garment_from_json(j.at("lower"));
        s.footwear = garment_from_json(j.at("footwear"));
        s.body_shape = j.at("body_shape");
        const auto& h = j.at("hair");
        s.hair = HairChoice{h.at("color"), h.at("length"), h.at("texture"),
                            h.at("arrangement"), h.at("bangs")};
        s.skin_tone = j.at("skin_tone");
        s.lighting = parse_lighting_tag(j.at("lighting"));
        specs.push_back(std::move(s));
    }
    return specs;
}

} // namespace dppp::forge
