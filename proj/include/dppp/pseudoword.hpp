#pragma once

#include <vector>

#include "dppp/encoder.hpp"

namespace dppp::train {

class HyperparamError : public Error {
public:
    using Error::Error;
};
class LabelError : public Error {
public:
    using Error::Error;
};
using nn::TripletError;

struct TrainingExample {
    Image image;
    int label = 0;
};

// Per-step loss components; total is always their sum.
struct LossReport {
    double contrastive = 0.0;
    double triplet_text = 0.0;
    double triplet_image = 0.0;
    double identity = 0.0;
    double total = 0.0;
};

// Learnable style tokens refined jointly with patch features by a small
// transformer, then projected into the joint embedding space. Output keeps
// only the token positions.
struct StyleExtractor {
    nn::Var tokens; // n x d2
    std::vector<nn::TransformerBlock> blocks;
    nn::Linear proj; // d2 -> d1
    int n = 24;

    StyleExtractor() = default;
    StyleExtractor(Rng& rng, int n_tokens, int d2, int d1, int layers = 3, int heads = 1);
    nn::Var forward(const nn::Var& patches) const; // m x d2 -> n x d1
    nn::ParamMap params(const std::string& name) const;
};

// --- pseudo-word operations ---

// softmax over style-feature / global-feature dot products; returns 1 x n.
nn::Var compute_style_attention(const nn::Var& style_feats, const nn::Var& global_feat);

// Indices of the k largest weights, descending, ties to the lower index.
std::vector<int> topk_indices(const nn::Mat& weights_row, int k);

// Rows of style_feats at the top-k weights, in descending-weight order.
nn::Var select_topk_styles(const nn::Var& style_feats, const nn::Var& weights, int k);

// --- losses ---

// Symmetric supervised contrastive loss over L2-normalized features.
// Positives for anchor i are all batch entries with the same label
// (including the aligned pair at index i); per anchor the mean negative
// log-probability over positives, averaged over the batch, summed over the
// two directions.
nn::Var supcon_loss(const nn::Var& img_feats, const nn::Var& txt_feats,
                    const std::vector<int>& labels, double tau);

// Batch-hard triplet on text features (Euclidean distances).
nn::Var triplet_text_loss(const nn::Var& txt_feats, const std::vector<int>& labels,
                          double margin);

// Label-smoothed cross entropy, mean over the batch.
nn::Var id_loss(const nn::Var& logits, const std::vector<int>& labels,
                double label_smoothing);

struct ReidLoss {
    nn::Var triplet; // summed over the supplied feature taps
    nn::Var identity;
};

ReidLoss reid_loss(const std::vector<nn::Var>& feature_taps, const nn::Var& logits,
                   const std::vector<int>& labels, double margin, double label_smoothing);

// --- stage driver ---

struct PseudoWordHyper {
    double tau = 0.07;
    double delta = 0.3;          // text triplet margin
    double alpha = 0.3;          // image triplet margin
    double label_smoothing = 0.1;
    int style_tokens = 24;       // n
    int style_keep = 6;          // k
    int content_hidden = 512;
    int style_hidden = 2048;
};

struct PseudoWordModules {
    nn::Mlp3 content_inverter; // d1 -> content_hidden -> dt
    StyleExtractor style_extractor;
    nn::Mlp3 style_inverter;   // d1 -> style_hidden -> dt
    nn::Linear classifier;     // d1 -> source identity count

    PseudoWordModules() = default;
    PseudoWordModules(Rng& rng, const enc::EncoderConfig& config,
                      const PseudoWordHyper& hyper, int num_classes);
    nn::ParamMap params() const;
    nn::ParamMap params_without_classifier() const;
};

// Full pseudo-word forward pass for one image bundle.
struct PseudoWordForward {
    nn::Var content_token;  // 1 x dt
    nn::Var style_tokens;   // k x dt
    nn::Var style_weights;  // 1 x n
};

PseudoWordForward pseudoword_forward(const enc::FeatureBundle& bundle,
                                     const PseudoWordModules& modules, int style_keep);

// One optimizer step of the joint pseudo-word objective. Updates whatever
// is registered in `optimizer`; the text tower stays frozen by construction.
LossReport ptl_step(const std::vector<TrainingExample>& batch,
                    const enc::VisionTextEncoder& encoder, PseudoWordModules& modules,
                    nn::Adam& optimizer, double lr_factor, const PseudoWordHyper& hyper);

} // namespace dppp::train
