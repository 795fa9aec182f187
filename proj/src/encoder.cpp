#include "dppp/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace dppp::enc {

using namespace dppp::nn;

void EncoderConfig::validate() const {
    if (d1 < 1 || d2 < 1 || dt < 1) {
        throw EncodingError("embedding dimensions must be positive");
    }
    if (image_height % patch_size != 0 || image_width % patch_size != 0) {
        throw EncodingError("image dimensions must be divisible by the patch size");
    }
    if (vision_layers < 2) {
        throw EncodingError("vision tower needs at least 2 layers (penultimate tap)");
    }
    if (hook_layer < 0 || hook_layer >= vision_layers) {
        throw EncodingError("hook_layer must be a valid vision block index");
    }
    if (d2 % vision_heads != 0 || dt % text_heads != 0) {
        throw EncodingError("width must be divisible by head count");
    }
    if (context_length < 4) {
        throw EncodingError("context length too small");
    }
    if (vocab.empty()) {
        throw EncodingError("vocabulary is empty");
    }
}

namespace {

std::vector<std::string> default_vocab() {
    return {"a", "an", "photo", "of", "person", "style"};
}

} // namespace

EncoderConfig EncoderConfig::production() {
    EncoderConfig c;
    c.vocab = default_vocab();
    return c;
}

EncoderConfig EncoderConfig::toy() {
    EncoderConfig c;
    c.patch_size = 32; // 8x4 = 32 patches on 256x128
    c.d1 = 64;
    c.d2 = 96;
    c.dt = 64;
    c.vision_layers = 2;
    c.vision_heads = 4;
    c.text_layers = 2;
    c.text_heads = 4;
    c.hook_layer = 1;
    c.context_length = 16;
    c.vocab = default_vocab();
    return c;
}

int TokenSequence::style_count() const {
    return static_cast<int>(
        std::count_if(slots.begin(), slots.end(),
                      [](const TokenSlot& s) { return s.role == SlotRole::Style; }));
}

int TokenSequence::content_count() const {
    return static_cast<int>(
        std::count_if(slots.begin(), slots.end(),
                      [](const TokenSlot& s) { return s.role == SlotRole::Content; }));
}

Mat image_to_patch_matrix(const Image& image, const EncoderConfig& config) {
    if (image.width != config.image_width || image.height != config.image_height ||
        image.channels != 3) {
        throw EncodingError("expected a " + std::to_string(config.image_width) + "x" +
                            std::to_string(config.image_height) + " RGB image, got " +
                            std::to_string(image.width) + "x" + std::to_string(image.height) +
                            "x" + std::to_string(image.channels));
    }
    const int p = config.patch_size;
    const int py = config.image_height / p;
    const int px = config.image_width / p;
    Mat out(py * px, 3 * p * p);
    for (int gy = 0; gy < py; ++gy) {
        for (int gx = 0; gx < px; ++gx) {
            Eigen::Index col = 0;
            const Eigen::Index row = gy * px + gx;
            for (int y = 0; y < p; ++y) {
                for (int x = 0; x < p; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        out(row, col++) =
                            (image.at(gx * p + x, gy * p + y, c) - 127.5) / 127.5;
                    }
                }
            }
        }
    }
    return out;
}

VisionTextEncoder::VisionTextEncoder(EncoderConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);

    patch_embed_ = Linear(rng, 3 * config_.patch_size * config_.patch_size, config_.d2);
    class_token_ = parameter(randn(rng, 1, config_.d2, 0.02));
    vision_pos_ = parameter(randn(rng, 1 + config_.patches(), config_.d2, 0.02));
    for (int i = 0; i < config_.vision_layers; ++i) {
        vision_blocks_.emplace_back(rng, config_.d2, config_.vision_heads, false);
    }
    vision_ln_ = LayerNorm(config_.d2);
    vision_proj_ = parameter(randn(rng, config_.d2, config_.d1,
                                   1.0 / std::sqrt(static_cast<double>(config_.d2))));

    start_id_ = static_cast<int>(config_.vocab.size());
    end_id_ = start_id_ + 1;
    token_embed_ = Embedding(rng, static_cast<int>(config_.vocab.size()) + 2, config_.dt);
    text_pos_ = parameter(randn(rng, config_.context_length, config_.dt, 0.01));
    for (int i = 0; i < config_.text_layers; ++i) {
        text_blocks_.emplace_back(rng, config_.dt, config_.text_heads, true);
    }
    text_ln_ = LayerNorm(config_.dt);
    text_proj_ = parameter(randn(rng, config_.dt, config_.d1,
                                 1.0 / std::sqrt(static_cast<double>(config_.dt))));
}

FeatureBundle VisionTextEncoder::encode_image(const Image& image) const {
    Var patches_in = constant(image_to_patch_matrix(image, config_));
    Var tokens = patch_embed_.forward(patches_in);       // m x d2
    Var x = concat_rows({class_token_, tokens});         // (1+m) x d2
    x = add(x, vision_pos_);

    Var hook, penultimate;
    const int depth = config_.vision_layers;
    for (int i = 0; i < depth; ++i) {
        x = vision_blocks_[static_cast<std::size_t>(i)].forward(x);
        if (i == config_.hook_layer) {
            hook = slice_rows(x, 0, 1);
        }
        if (i == depth - 2) {
            penultimate = x;
        }
    }

    FeatureBundle bundle;
    bundle.hook = hook;
    bundle.patches = slice_rows(penultimate, 1, config_.patches());
    bundle.pre_projection = slice_rows(vision_ln_.forward(slice_rows(x, 0, 1)), 0, 1);
    bundle.global = matmul(bundle.pre_projection, vision_proj_);
    if (!all_finite(bundle.global->value) || !all_finite(bundle.patches->value)) {
        throw NumericsError("non-finite encoder output");
    }
    return bundle;
}

TokenSequence VisionTextEncoder::tokenize(const std::string& text) const {
    TokenSequence seq;
    seq.slots.push_back(TokenSlot{SlotRole::Template, start_id_, nullptr});
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        const auto it = std::find(config_.vocab.begin(), config_.vocab.end(), word);
        if (it == config_.vocab.end()) {
            throw EncodingError("word not in encoder vocabulary: " + word);
        }
        seq.slots.push_back(TokenSlot{
            SlotRole::Template, static_cast<int>(it - config_.vocab.begin()), nullptr});
    }
    seq.slots.push_back(TokenSlot{SlotRole::Template, end_id_, nullptr});
    if (seq.length() > config_.context_length) {
        throw ContextLengthError("tokenized text exceeds context length");
    }
    return seq;
}

TokenSequence VisionTextEncoder::assemble_style_content_prompt(
    const Var& style_tokens, const Var& content_token) const {
    if (style_tokens->value.cols() != config_.dt || content_token->value.cols() != config_.dt ||
        content_token->value.rows() != 1) {
        throw ShapeError("pseudo-word token dimensions do not match dt");
    }
    const int k = static_cast<int>(style_tokens->value.rows());
    TokenSequence seq;
    auto word = [&](const char* w) {
        const auto it = std::find(config_.vocab.begin(), config_.vocab.end(), w);
        seq.slots.push_back(TokenSlot{
            SlotRole::Template, static_cast<int>(it - config_.vocab.begin()), nullptr});
    };
    seq.slots.push_back(TokenSlot{SlotRole::Template, start_id_, nullptr});
    word("a");
    for (int i = 0; i < k; ++i) {
        seq.slots.push_back(TokenSlot{SlotRole::Style, -1, slice_rows(style_tokens, i, 1)});
    }
    word("style");
    word("of");
    word("a");
    seq.slots.push_back(TokenSlot{SlotRole::Content, -1, content_token});
    word("person");
    seq.slots.push_back(TokenSlot{SlotRole::Template, end_id_, nullptr});
    if (seq.length() > config_.context_length) {
        throw ContextLengthError("style-content prompt exceeds context length (k too large)");
    }
    return seq;
}

TokenSequence VisionTextEncoder::assemble_content_prompt(const Var& content_token) const {
    if (content_token->value.cols() != config_.dt || content_token->value.rows() != 1) {
        throw ShapeError("content token must be 1 x dt");
    }
    TokenSequence seq = tokenize("a photo of a person");
    // splice the content slot right before "person"
    TokenSlot slot{SlotRole::Content, -1, content_token};
    seq.slots.insert(seq.slots.end() - 2, slot);
    if (seq.length() > config_.context_length) {
        throw ContextLengthError("content prompt exceeds context length");
    }
    return seq;
}

TokenSequence VisionTextEncoder::generic_prompt() const {
    return tokenize("a photo of a person");
}

Var VisionTextEncoder::text_forward(const TokenSequence& sequence) const {
    const int len = sequence.length();
    if (len > config_.context_length) {
        throw ContextLengthError("sequence exceeds context length");
    }
    if (len < 2) {
        throw EncodingError("sequence must include start and end tokens");
    }
    std::vector<Var> rows;
    rows.reserve(static_cast<std::size_t>(len));
    for (const auto& slot : sequence.slots) {
        if (slot.is_continuous()) {
            if (slot.embedding->value.rows() != 1 ||
                slot.embedding->value.cols() != config_.dt) {
                throw ShapeError("continuous slot must be 1 x dt");
            }
            rows.push_back(slot.embedding);
        } else {
            rows.push_back(token_embed_.lookup({slot.token_id}));
        }
    }
    Var x = concat_rows(rows);
    x = add(x, slice_rows(text_pos_, 0, len));
    for (const auto& block : text_blocks_) {
        x = block.forward(x);
    }
    Var eot = slice_rows(text_ln_.forward(slice_rows(x, len - 1, 1)), 0, 1);
    return matmul(eot, text_proj_);
}

Var VisionTextEncoder::encode_text(const TokenSequence& sequence) const {
    Var out = text_forward(sequence);
    if (!all_finite(out->value)) {
        throw NumericsError("non-finite text encoder output");
    }
    return out;
}

ParamMap VisionTextEncoder::vision_params() const {
    ParamMap p;
    p.merge("vision", patch_embed_.params("patch_embed"));
    p.add("vision.class_token", class_token_);
    p.add("vision.pos", vision_pos_);
    for (std::size_t i = 0; i < vision_blocks_.size(); ++i) {
        p.merge("vision", vision_blocks_[i].params("block" + std::to_string(i)));
    }
    p.merge("vision", vision_ln_.params("ln"));
    p.add("vision.proj", vision_proj_);
    return p;
}

ParamMap VisionTextEncoder::text_params() const {
    ParamMap p;
    p.merge("text", token_embed_.params("token_embed"));
    p.add("text.pos", text_pos_);
    for (std::size_t i = 0; i < text_blocks_.size(); ++i) {
        p.merge("text", text_blocks_[i].params("block" + std::to_string(i)));
    }
    p.merge("text", text_ln_.params("ln"));
    p.add("text.proj", text_proj_);
    return p;
}

ParamMap VisionTextEncoder::params() const {
    ParamMap p = vision_params();
    ParamMap t = text_params();
    p.items.insert(p.items.end(), t.items.begin(), t.items.end());
    return p;
}

void VisionTextEncoder::freeze_text() {
    text_params().set_requires_grad(false);
}

void VisionTextEncoder::freeze_all() {
    params().set_requires_grad(false);
}

void VisionTextEncoder::save(TensorArchive& archive, const std::string& prefix) const {
    for (const auto& [name, var] : params().items) {
        archive.put(prefix + "." + name, var->value);
    }
}

void VisionTextEncoder::load(const TensorArchive& archive, const std::string& prefix) {
    for (auto& [name, var] : params().items) {
        const Mat& m = archive.get(prefix + "." + name);
        if (m.rows() != var->value.rows() || m.cols() != var->value.cols()) {
            throw ShapeError("checkpoint tensor shape mismatch for " + name);
        }
        var->value = m;
    }
}

} // namespace dppp::enc
