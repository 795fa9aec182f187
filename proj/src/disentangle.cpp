#include "dppp/disentangle.hpp"

#include <sstream>

namespace dppp::train {

using namespace dppp::nn;

DestylizationProjector::DestylizationProjector(Rng& rng, int d1) {
    fc1 = Linear(rng, d1, d1);
    fc2 = Linear(rng, d1, d1);
    bn = BatchNorm1d(d1);
    out = Linear(rng, d1, d1);
}

Var DestylizationProjector::forward(const Var& x, bool training) {
    if (!all_finite(x->value)) {
        throw NumericsError("projector input is not finite");
    }
    Var h = fc2.forward(gelu(fc1.forward(x)));
    return out.forward(bn.forward(h, training));
}

ParamMap DestylizationProjector::params(const std::string& name) const {
    ParamMap p;
    p.merge(name, fc1.params("fc1"));
    p.merge(name, fc2.params("fc2"));
    p.merge(name, bn.params("bn"));
    p.merge(name, out.params("out"));
    return p;
}

void DestylizationProjector::save_state(TensorArchive& archive,
                                        const std::string& prefix) const {
    for (const auto& [name, var] : params(prefix).items) {
        archive.put(name, var->value);
    }
    archive.put(prefix + ".bn.running_mean", bn.running_mean);
    archive.put(prefix + ".bn.running_var", bn.running_var);
}

void DestylizationProjector::load_state(const TensorArchive& archive,
                                        const std::string& prefix) {
    for (auto& [name, var] : params(prefix).items) {
        var->value = archive.get(name);
    }
    bn.running_mean = archive.get(prefix + ".bn.running_mean");
    bn.running_var = archive.get(prefix + ".bn.running_var");
}

Var destylize(DestylizationProjector& projector, const Var& global_feat) {
    if (global_feat->value.rows() != 1) {
        throw ShapeError("destylize expects a single feature row");
    }
    return projector.forward(global_feat, /*training=*/false);
}

Var supcon2_loss(const Var& content_feats, const Var& text_feats,
                 const std::vector<int>& labels, double tau) {
    return supcon_loss(content_feats, text_feats, labels, tau);
}

LossReport psd_step(const std::vector<TrainingExample>& batch,
                    const enc::VisionTextEncoder& encoder,
                    const PseudoWordModules& stage2a_modules,
                    DestylizationProjector& projector, Linear& classifier, Adam& optimizer,
                    double lr_factor, const DisentangleHyper& hyper) {
    if (batch.size() < 2) {
        throw ShapeError("training step needs a batch of at least 2");
    }
    std::vector<int> labels;
    labels.reserve(batch.size());
    std::vector<Var> global_rows, tc_rows;
    for (const auto& example : batch) {
        labels.push_back(example.label);
        const auto bundle = encoder.encode_image(example.image);
        global_rows.push_back(bundle.global);
        Var content_token = stage2a_modules.content_inverter.forward(bundle.global);
        tc_rows.push_back(
            encoder.encode_text(encoder.assemble_content_prompt(content_token)));
    }

    Var global = concat_rows(global_rows);
    Var content = projector.forward(global, /*training=*/true); // B x d1
    Var tc = concat_rows(tc_rows);

    Var contrastive = supcon2_loss(content, tc, labels, hyper.tau);
    const auto reid = reid_loss({content}, classifier.forward(content), labels, hyper.alpha,
                                hyper.label_smoothing);
    Var total = add(contrastive, add(reid.triplet, reid.identity));

    LossReport report;
    report.contrastive = contrastive->value(0, 0);
    report.triplet_image = reid.triplet->value(0, 0);
    report.identity = reid.identity->value(0, 0);
    report.total = total->value(0, 0);
    if (!std::isfinite(report.total)) {
        std::ostringstream ss;
        ss << "non-finite loss: contrastive=" << report.contrastive
           << " triplet_image=" << report.triplet_image << " identity=" << report.identity;
        throw NumericsError(ss.str());
    }

    optimizer.zero_grad();
    backward(total);
    optimizer.step(lr_factor);
    return report;
}

} // namespace dppp::train
