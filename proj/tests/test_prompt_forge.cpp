#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>
#include <unordered_set>

#include "dppp/prompt_forge.hpp"

using namespace dppp;
using namespace dppp::forge;

namespace {

std::string small_catalog_json(const std::string& colors) {
    return R"({
      "colors": )" + colors + R"(,
      "patterns": ["plaid", "striped"],
      "clothing_styles": {"upper": ["shirt"], "lower": ["jeans"], "footwear": ["loafers", "boots"]},
      "body_shapes": ["slim figure"],
      "hairstyles": {"colors": ["black"], "lengths": ["short"], "textures": ["straight"],
                     "arrangements": ["loose"], "bangs": ["bangs"]},
      "skin_tones": ["tan"],
      "genders": ["girl", "boy"],
      "actions": ["walking"]
    })";
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ' ')) out.push_back(tok);
    return out;
}

} // namespace

TEST_CASE("catalog load keeps list sizes") {
    auto cat = parse_attribute_catalog(small_catalog_json(
        R"(["c1","c2","c3","c4","c5","c6","c7","c8","c9","c10"])"));
    CHECK(cat.colors.size() == 10);
    CHECK(cat.patterns.size() == 2);
}

TEST_CASE("empty or duplicate lists raise CatalogError naming the field") {
    CHECK_THROWS_WITH_AS(parse_attribute_catalog(small_catalog_json("[]")), "colors",
                         CatalogError);
    CHECK_THROWS_WITH_AS(parse_attribute_catalog(small_catalog_json(R"(["red","red"])")),
                         "colors", CatalogError);
}

TEST_CASE("missing garment slot raises CatalogError") {
    const std::string bad = R"({
      "colors": ["red"], "patterns": ["plaid"],
      "clothing_styles": {"upper": ["shirt"], "lower": ["jeans"]},
      "body_shapes": ["slim"], "hairstyles": {"colors": ["black"], "lengths": ["short"],
      "textures": ["straight"], "arrangements": ["loose"], "bangs": ["bangs"]},
      "skin_tones": ["tan"], "genders": ["girl"], "actions": ["walking"]
    })";
    CHECK_THROWS_AS(parse_attribute_catalog(bad), CatalogError);
}

TEST_CASE("default catalog supports the production identity count") {
    const auto& cat = default_catalog();
    CHECK(cat.clothing_combination_capacity() >= 6641);
}

TEST_CASE("generate 6641 identity specs with pairwise-distinct clothing") {
    const auto specs = generate_identity_specs(default_catalog(), 6641, 7);
    REQUIRE(specs.size() == 6641);
    std::unordered_set<std::string> keys;
    for (const auto& s : specs) {
        CHECK(keys.insert(s.clothing_key()).second);
    }
    CHECK(keys.size() == 6641);
}

TEST_CASE("count=1 yields a single spec") {
    const auto specs = generate_identity_specs(default_catalog(), 1, 3);
    REQUIRE(specs.size() == 1);
    CHECK(specs[0].identity_id == 0);
}

TEST_CASE("generation is deterministic per seed and varies across seeds") {
    const auto a = generate_identity_specs(default_catalog(), 200, 42);
    const auto b = generate_identity_specs(default_catalog(), 200, 42);
    const auto c = generate_identity_specs(default_catalog(), 200, 43);
    CHECK(identity_specs_to_json(a) == identity_specs_to_json(b));
    CHECK(identity_specs_to_json(a) != identity_specs_to_json(c));
}

TEST_CASE("count above capacity raises CapacityError with the feasible maximum") {
    auto cat = parse_attribute_catalog(small_catalog_json(R"(["red","blue"])"));
    // capacity = (2*1) * (2*1) * (2*2) = 16
    CHECK(cat.clothing_combination_capacity() == 16);
    try {
        generate_identity_specs(cat, 17, 1);
        FAIL("expected CapacityError");
    } catch (const CapacityError& e) {
        CHECK(e.max_feasible == 16);
    }
    // exactly at capacity must succeed (retry cap is 100x count)
    const auto specs = generate_identity_specs(cat, 16, 1);
    CHECK(specs.size() == 16);
}

TEST_CASE("rendered prompt matches the reference example") {
    IdentitySpec spec;
    spec.identity_id = 0;
    spec.gender = "girl";
    spec.action = "walking";
    spec.upper = {"pink", "plaid", "shirt"};
    spec.lower = {"black", "distressed", "jeans"};
    spec.footwear = {"white", "", "loafers"};
    spec.body_shape = "slim figure, maternal build body";
    spec.hair = {"dark brown", "waist-length", "straight", "high ponytail", "bangs"};
    spec.skin_tone = "warm beige";
    spec.lighting = LightingTag::day_sunshine;
    const auto prompt = render_character_prompt(spec);
    CHECK(prompt.text ==
          "girl, walking, pink plaid shirt, black distressed jeans, white loafers, "
          "day, sunshine, slim figure, maternal build body, dark brown hair color, "
          "waist-length hair, straight hair texture, high ponytail, bangs, "
          "warm beige skin, simple background, multiple views of the same character, "
          "multiple views, side view, back view, front view");
}

TEST_CASE("substitution locality: changing one attribute changes one token") {
    auto specs = generate_identity_specs(default_catalog(), 2, 9);
    IdentitySpec a = specs[0];
    IdentitySpec b = a;
    b.upper.color = a.upper.color == "red" ? "blue" : "red";
    const auto ta = split_tokens(render_character_prompt(a).text);
    const auto tb = split_tokens(render_character_prompt(b).text);
    REQUIRE(ta.size() == tb.size());
    int diff = 0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i] != tb[i]) ++diff;
    }
    CHECK(diff == 1);
}

TEST_CASE("no rendered prompt contains placeholder delimiters and all end with views") {
    const auto specs = generate_identity_specs(default_catalog(), 300, 5);
    const std::string tail =
        "multiple views of the same character, multiple views, side view, back view, front view";
    for (const auto& s : specs) {
        const auto p = render_character_prompt(s);
        CHECK(p.text.find('{') == std::string::npos);
        CHECK(p.text.find('}') == std::string::npos);
        REQUIRE(p.text.size() >= tail.size());
        CHECK(p.text.substr(p.text.size() - tail.size()) == tail);
    }
}

TEST_CASE("scene prompts embed the lighting phrase") {
    auto day = render_scene_prompt(SceneCategory::street, LightingTag::day_sunshine);
    CHECK(day.text.find("day, sunshine") != std::string::npos);
    auto night = render_scene_prompt(SceneCategory::park, LightingTag::night_dark);
    CHECK(night.text.find("night, dark") != std::string::npos);
    auto dusk = render_scene_prompt(SceneCategory::indoor, LightingTag::dusk);
    CHECK(dusk.text.find("dusk") != std::string::npos);
}

TEST_CASE("unknown enums raise EnumError") {
    CHECK_THROWS_AS(parse_scene_category("moon"), EnumError);
    CHECK_THROWS_AS(parse_lighting_tag("noon"), EnumError);
}

TEST_CASE("coverage: 1000 specs hit every lighting tag and gender") {
    const auto specs = generate_identity_specs(default_catalog(), 1000, 11);
    std::set<std::string> lightings, genders;
    for (const auto& s : specs) {
        lightings.insert(to_string(s.lighting));
        genders.insert(s.gender);
    }
    CHECK(lightings.size() == 3);
    CHECK(genders.size() == default_catalog().genders.size());
}

TEST_CASE("identity specs survive a JSON round trip") {
    const auto specs = generate_identity_specs(default_catalog(), 25, 77);
    const auto back = identity_specs_from_json(identity_specs_to_json(specs));
    CHECK(back == specs);
}
