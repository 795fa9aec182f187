#include "dppp/pseudoword.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace dppp::train {

using namespace dppp::nn;

StyleExtractor::StyleExtractor(Rng& rng, int n_tokens, int d2, int d1, int layers, int heads)
    : n(n_tokens) {
    if (n_tokens < 1) {
        throw ShapeError("style extractor needs at least one token");
    }
    tokens = parameter(randn(rng, n_tokens, d2, 0.02));
    for (int i = 0; i < layers; ++i) {
        // No positional encoding: the extractor treats [tokens | patches]
        // as a set, so patch order cannot leak into the style features.
        blocks.emplace_back(rng, d2, heads, false);
    }
    proj = Linear(rng, d2, d1);
}

Var StyleExtractor::forward(const Var& patches) const {
    if (patches->value.rows() < 1) {
        throw ShapeError("style extractor: empty patch matrix");
    }
    if (patches->value.cols() != tokens->value.cols()) {
        throw ShapeError("style extractor: patch dimension mismatch");
    }
    Var x = concat_rows({tokens, patches});
    for (const auto& block : blocks) {
        x = block.forward(x);
    }
    return proj.forward(slice_rows(x, 0, n));
}

ParamMap StyleExtractor::params(const std::string& name) const {
    ParamMap p;
    p.add(name + ".tokens", tokens);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        p.merge(name, blocks[i].params("block" + std::to_string(i)));
    }
    p.merge(name, proj.params("proj"));
    return p;
}

Var compute_style_attention(const Var& style_feats, const Var& global_feat) {
    if (style_feats->value.cols() != global_feat->value.cols() ||
        global_feat->value.rows() != 1) {
        throw ShapeError("style attention: global feature must be 1 x d1");
    }
    Var logits = transpose(matmul(style_feats, transpose(global_feat))); // 1 x n
    return softmax_rows(logits);
}

std::vector<int> topk_indices(const Mat& weights_row, int k) {
    const int n = static_cast<int>(weights_row.cols());
    if (k < 1 || k > n) {
        throw RangeError("top-k: k must be in [1, n], got k=" + std::to_string(k) +
                         " n=" + std::to_string(n));
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return weights_row(0, a) > weights_row(0, b); // stable: ties keep lower index first
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

Var select_topk_styles(const Var& style_feats, const Var& weights, int k) {
    if (weights->value.rows() != 1 ||
        weights->value.cols() != style_feats->value.rows()) {
        throw ShapeError("top-k: weights must be 1 x rows(style_feats)");
    }
    return gather_rows(style_feats, topk_indices(weights->value, k));
}

Var supcon_loss(const Var& img_feats, const Var& txt_feats, const std::vector<int>& labels,
                double tau) {
    if (tau <= 0.0) {
        throw HyperparamError("temperature must be positive");
    }
    const auto b = img_feats->value.rows();
    if (b < 2) {
        throw ShapeError("contrastive loss needs a batch of at least 2");
    }
    if (txt_feats->value.rows() != b || static_cast<Eigen::Index>(labels.size()) != b ||
        txt_feats->value.cols() != img_feats->value.cols()) {
        throw ShapeError("contrastive loss: feature/label shape mismatch");
    }

    // positive-pair weights: 1 / (B * |P(i)|) on every same-label column
    Mat pos = Mat::Zero(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        int npos = 0;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (labels[j] == labels[i]) ++npos;
        }
        for (Eigen::Index j = 0; j < b; ++j) {
            if (labels[j] == labels[i]) {
                pos(i, j) = 1.0 / (static_cast<double>(b) * npos);
            }
        }
    }

    Var a = l2_normalize_rows(img_feats);
    Var t = l2_normalize_rows(txt_feats);
    Var sim = scale(matmul(a, transpose(t)), 1.0 / tau); // sim(i, j) = <v_i, t_j>/tau
    Var i2t = neg(sum_all(mul(constant(pos), log_softmax_rows(sim))));
    Var t2i = neg(sum_all(mul(constant(pos), log_softmax_rows(transpose(sim)))));
    return add(i2t, t2i);
}

Var triplet_text_loss(const Var& txt_feats, const std::vector<int>& labels, double margin) {
    return batch_hard_triplet(txt_feats, labels, margin);
}

Var id_loss(const Var& logits, const std::vector<int>& labels, double label_smoothing) {
    const auto b = logits->value.rows();
    const auto c = logits->value.cols();
    if (static_cast<Eigen::Index>(labels.size()) != b) {
        throw ShapeError("id loss: label count mismatch");
    }
    Mat targets = Mat::Constant(b, c, label_smoothing / static_cast<double>(c));
    for (Eigen::Index i = 0; i < b; ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw LabelError("label " + std::to_string(labels[i]) +
                             " outside class range [0, " + std::to_string(c) + ")");
        }
        targets(i, labels[i]) += 1.0 - label_smoothing;
    }
    return scale(neg(sum_all(mul(constant(targets), log_softmax_rows(logits)))),
                 1.0 / static_cast<double>(b));
}

ReidLoss reid_loss(const std::vector<Var>& feature_taps, const Var& logits,
                   const std::vector<int>& labels, double margin, double label_smoothing) {
    if (feature_taps.empty()) {
        throw ShapeError("reid loss: need at least one feature tap");
    }
    ReidLoss out;
    out.triplet = batch_hard_triplet(feature_taps[0], labels, margin);
    for (std::size_t i = 1; i < feature_taps.size(); ++i) {
        out.triplet = add(out.triplet, batch_hard_triplet(feature_taps[i], labels, margin));
    }
    out.identity = id_loss(logits, labels, label_smoothing);
    return out;
}

PseudoWordModules::PseudoWordModules(Rng& rng, const enc::EncoderConfig& config,
                                     const PseudoWordHyper& hyper, int num_classes) {
    if (hyper.style_keep < 1 || hyper.style_keep > hyper.style_tokens) {
        throw HyperparamError("style_keep must lie in [1, style_tokens]");
    }
    content_inverter = Mlp3(rng, config.d1, hyper.content_hidden, config.dt);
    style_extractor = StyleExtractor(rng, hyper.style_tokens, config.d2, config.d1);
    style_inverter = Mlp3(rng, config.d1, hyper.style_hidden, config.dt);
    classifier = Linear(rng, config.d1, num_classes);
}

ParamMap PseudoWordModules::params() const {
    ParamMap p = params_without_classifier();
    p.merge("stage2a", classifier.params("classifier"));
    return p;
}

ParamMap PseudoWordModules::params_without_classifier() const {
    ParamMap p;
    p.merge("stage2a", content_inverter.params("content_inverter"));
    p.merge("stage2a", style_extractor.params("style_extractor"));
    p.merge("stage2a", style_inverter.params("style_inverter"));
    return p;
}

PseudoWordForward pseudoword_forward(const enc::FeatureBundle& bundle,
                                     const PseudoWordModules& modules, int style_keep) {
    PseudoWordForward fwd;
    fwd.content_token = modules.content_inverter.forward(bundle.global);
    Var style_feats = modules.style_extractor.forward(bundle.patches); // n x d1
    fwd.style_weights = compute_style_attention(style_feats, bundle.global);
    Var selected = select_topk_styles(style_feats, fwd.style_weights, style_keep);
    fwd.style_tokens = modules.style_inverter.forward(selected); // k x dt
    return fwd;
}

LossReport ptl_step(const std::vector<TrainingExample>& batch,
                    const enc::VisionTextEncoder& encoder, PseudoWordModules& modules,
                    Adam& optimizer, double lr_factor, const PseudoWordHyper& hyper) {
    if (batch.size() < 2) {
        throw ShapeError("training step needs a batch of at least 2");
    }
    std::vector<int> labels;
    labels.reserve(batch.size());
    std::vector<Var> global_rows, preproj_rows, hook_rows, tsc_rows, tc_rows;
    for (const auto& example : batch) {
        labels.push_back(example.label);
        const auto bundle = encoder.encode_image(example.image);
        const auto fwd = pseudoword_forward(bundle, modules, hyper.style_keep);
        global_rows.push_back(bundle.global);
        preproj_rows.push_back(bundle.pre_projection);
        hook_rows.push_back(bundle.hook);
        tsc_rows.push_back(encoder.encode_text(
            encoder.assemble_style_content_prompt(fwd.style_tokens, fwd.content_token)));
        tc_rows.push_back(
            encoder.encode_text(encoder.assemble_content_prompt(fwd.content_token)));
    }

    Var global = concat_rows(global_rows);   // B x d1
    Var tsc = concat_rows(tsc_rows);         // B x d1
    Var tc = concat_rows(tc_rows);           // B x d1

    Var contrastive = supcon_loss(global, tsc, labels, hyper.tau);
    Var tri_txt = triplet_text_loss(tc, labels, hyper.delta);
    const auto reid =
        reid_loss({concat_rows(preproj_rows), global, concat_rows(hook_rows)},
                  modules.classifier.forward(global), labels, hyper.alpha,
                  hyper.label_smoothing);
    Var total = add(add(contrastive, tri_txt), add(reid.triplet, reid.identity));

    LossReport report;
    report.contrastive = contrastive->value(0, 0);
    report.triplet_text = tri_txt->value(0, 0);
    report.triplet_image = reid.triplet->value(0, 0);
    report.identity = reid.identity->value(0, 0);
    report.total = total->value(0, 0);
    if (!std::isfinite(report.total)) {
        std::ostringstream ss;
        ss << "non-finite loss: contrastive=" << report.contrastive
           << " triplet_text=" << report.triplet_text
           << " triplet_image=" << report.triplet_image << " identity=" << report.identity;
        throw NumericsError(ss.str());
    }

    optimizer.zero_grad();
    backward(total);
    optimizer.step(lr_factor);
    return report;
}

} // namespace dppp::train
