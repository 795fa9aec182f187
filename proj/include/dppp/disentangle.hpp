#pragma once

#include "dppp/pseudoword.hpp"

namespace dppp::train {

// Maps raw global features to style-free content features: a two-layer
// perceptron with batch normalization and a final linear layer at the end.
// Input and output dimension are both d1.
struct DestylizationProjector {
    nn::Linear fc1, fc2;
    nn::BatchNorm1d bn;
    nn::Linear out;

    DestylizationProjector() = default;
    DestylizationProjector(Rng& rng, int d1);

    // Training mode normalizes with batch statistics (and updates the
    // running buffers); evaluation mode is deterministic.
    nn::Var forward(const nn::Var& x, bool training);

    nn::ParamMap params(const std::string& name) const;
    void save_state(nn::TensorArchive& archive, const std::string& prefix) const;
    void load_state(const nn::TensorArchive& archive, const std::string& prefix);
};

// Evaluation-mode projection of a single feature row.
nn::Var destylize(DestylizationProjector& projector, const nn::Var& global_feat);

// Alias of the stage-2a contrastive loss; kept as a named entry point so the
// two stages share one definition by construction.
nn::Var supcon2_loss(const nn::Var& content_feats, const nn::Var& text_feats,
                     const std::vector<int>& labels, double tau);

struct DisentangleHyper {
    double tau = 0.07;
    double alpha = 0.3;
    double label_smoothing = 0.1;
};

// One optimizer step of the projector objective. The encoder and the content
// inverter are used frozen; only the projector and its classifier head are
// expected in `optimizer`.
LossReport psd_step(const std::vector<TrainingExample>& batch,
                    const enc::VisionTextEncoder& encoder,
                    const PseudoWordModules& stage2a_modules,
                    DestylizationProjector& projector, nn::Linear& classifier,
                    nn::Adam& optimizer, double lr_factor, const DisentangleHyper& hyper);

} // namespace dppp::train
