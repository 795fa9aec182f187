#pragma once

#include <string>
#include <vector>

#include "dppp/image.hpp"
#include "dppp/nn/modules.hpp"
#include "dppp/nn/serialize.hpp"

namespace dppp::enc {

class EncodingError : public Error {
public:
    using Error::Error;
};
class ContextLengthError : public Error {
public:
    using Error::Error;
};

struct EncoderConfig {
    int image_height = 256;
    int image_width = 128;
    int patch_size = 16;
    int d1 = 512;  // joint embedding dimension
    int d2 = 768;  // vision width (patch feature dimension)
    int dt = 512;  // text width (token embedding dimension)
    int vision_layers = 12;
    int vision_heads = 12;
    int text_layers = 12;
    int text_heads = 8;
    int hook_layer = 11; // vision block index tapped for the auxiliary triplet
    int context_length = 77;
    std::vector<std::string> vocab; // word-level; start/end tokens appended internally

    int patches() const {
        return (image_height / patch_size) * (image_width / patch_size);
    }
    void validate() const;

    static EncoderConfig production(); // ViT-B/16-shaped
    static EncoderConfig toy();        // small seeded encoder for tests
};

enum class SlotRole { Template, Style, Content };

// One position of a text sequence: either a vocabulary token id or a
// continuous embedding standing in for a pseudo-word.
struct TokenSlot {
    SlotRole role = SlotRole::Template;
    int token_id = -1;
    nn::Var embedding; // 1 x dt when set

    bool is_continuous() const { return embedding != nullptr; }
};

struct TokenSequence {
    std::vector<TokenSlot> slots;

    int length() const { return static_cast<int>(slots.size()); }
    int style_count() const;
    int content_count() const;
};

// Per-image encoder outputs. `patches` come from the penultimate vision
// block; `hook` is the class token after the configured hook block;
// `pre_projection` is the final normalized class token before the joint
// projection that yields `global`.
struct FeatureBundle {
    nn::Var global;         // 1 x d1
    nn::Var patches;        // m x d2
    nn::Var pre_projection; // 1 x d2
    nn::Var hook;           // 1 x d2
};

class VisionTextEncoder {
public:
    VisionTextEncoder(EncoderConfig config, std::uint64_t seed);

    const EncoderConfig& config() const { return config_; }

    FeatureBundle encode_image(const Image& image) const;
    nn::Var encode_text(const TokenSequence& sequence) const;

    // Word-level tokenization against the configured vocabulary, wrapped in
    // start/end tokens.
    TokenSequence tokenize(const std::string& text) const;

    // "a [s*_1 ... s*_k] style of a [c*] person"
    TokenSequence assemble_style_content_prompt(const nn::Var& style_tokens,
                                                const nn::Var& content_token) const;
    // "a photo of a [c*] person"
    TokenSequence assemble_content_prompt(const nn::Var& content_token) const;
    // "a photo of a person"
    TokenSequence generic_prompt() const;

    nn::ParamMap vision_params() const;
    nn::ParamMap text_params() const;
    nn::ParamMap params() const;

    void freeze_text();
    void freeze_all();

    void save(nn::TensorArchive& archive, const std::string& prefix) const;
    void load(const nn::TensorArchive& archive, const std::string& prefix);

private:
    nn::Var text_forward(const TokenSequence& sequence) const;

    EncoderConfig config_;

    // vision tower
    nn::Linear patch_embed_;
    nn::Var class_token_;
    nn::Var vision_pos_;
    std::vector<nn::TransformerBlock> vision_blocks_;
    nn::LayerNorm vision_ln_;
    nn::Var vision_proj_; // d2 x d1

    // text tower
    nn::Embedding token_embed_; // (vocab + start/end) x dt
    nn::Var text_pos_;
    std::vector<nn::TransformerBlock> text_blocks_;
    nn::LayerNorm text_ln_;
    nn::Var text_proj_; // dt x d1

    int start_id_ = 0;
    int end_id_ = 0;
};

// Pixel normalization shared by the encoder and any caller that needs the
// raw patch matrix: (v - 127.5) / 127.5 per channel.
nn::Mat image_to_patch_matrix(const Image& image, const EncoderConfig& config);

} // namespace dppp::enc
