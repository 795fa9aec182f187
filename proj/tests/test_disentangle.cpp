#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dppp/disentangle.hpp"
#include "support/gradcheck.hpp"

using namespace dppp;
using namespace dppp::nn;
using namespace dppp::train;

namespace {

Image random_image(std::uint64_t seed) {
    Rng rng(seed);
    Image img(128, 256, 3);
    for (auto& px : img.pixels) {
        px = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    }
    return img;
}

double mean_cosine(const Mat& a, const Mat& b) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        acc += a.row(r).dot(b.row(r)) / (a.row(r).norm() * b.row(r).norm());
    }
    return acc / static_cast<double>(a.rows());
}

} // namespace

TEST_CASE("destylize is deterministic in evaluation mode") {
    Rng rng(1);
    DestylizationProjector proj(rng, 16);
    Var x = constant(randn(rng, 1, 16, 1.0));
    const Mat a = destylize(proj, x)->value;
    const Mat b = destylize(proj, x)->value;
    CHECK(a == b);
    CHECK(a.cols() == 16);
    CHECK(all_finite(a));
}

TEST_CASE("destylize keeps dimension d1") {
    Rng rng(2);
    DestylizationProjector proj(rng, 512);
    Var x = constant(Mat::Zero(1, 512));
    CHECK(destylize(proj, x)->value.cols() == 512);
}

TEST_CASE("destylize jacobian matches finite differences in eval mode (d1=8)") {
    Rng rng(3);
    DestylizationProjector proj(rng, 8);
    // give the running stats a non-trivial state first
    {
        Var warm = constant(randn(rng, 16, 8, 1.0));
        proj.forward(warm, true);
    }
    std::vector<Mat> leaves = {randn(rng, 1, 8, 1.0)};
    for (int coord = 0; coord < 8; ++coord) {
        auto loss = [&proj, coord](const std::vector<Var>& v) {
            return slice_cols(proj.forward(v[0], false), coord, 1);
        };
        auto res = gradcheck::check(leaves, loss, 1e-5);
        CHECK(res.max_abs_diff < 1e-5);
    }
}

TEST_CASE("projector rejects non-finite input") {
    Rng rng(4);
    DestylizationProjector proj(rng, 4);
    Mat bad = Mat::Zero(1, 4);
    bad(0, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(destylize(proj, constant(bad)), NumericsError);
}

TEST_CASE("supcon2 is the shared contrastive definition") {
    Rng rng(5);
    Mat a = randn(rng, 4, 6, 1.0);
    Mat b = randn(rng, 4, 6, 1.0);
    const std::vector<int> labels = {0, 0, 1, 1};
    Var l1 = supcon2_loss(constant(a), constant(b), labels, 0.2);
    Var l2 = supcon_loss(constant(a), constant(b), labels, 0.2);
    CHECK(l1->value(0, 0) == l2->value(0, 0));

    // orthogonal aligned pairs, B=2, tau=1
    Mat i2(2, 2), t2(2, 2);
    i2 << 1, 0, 0, 1;
    t2 << 1, 0, 0, 1;
    Var closed = supcon2_loss(constant(i2), constant(t2), {0, 1}, 1.0);
    CHECK(closed->value(0, 0) == doctest::Approx(0.6266).epsilon(2e-4));
}

TEST_CASE("supcon2 gradient matches finite differences") {
    Rng rng(6);
    const std::vector<int> labels = {0, 1, 1, 2};
    std::vector<Mat> leaves = {randn(rng, 4, 5, 1.0), randn(rng, 4, 5, 1.0)};
    auto loss = [&labels](const std::vector<Var>& v) {
        return supcon2_loss(v[0], v[1], labels, 0.15);
    };
    auto res = gradcheck::check(leaves, loss, 1e-5);
    CHECK(res.max_abs_diff < 1e-5);
}

TEST_CASE("psd_step updates only the projector and its classifier head") {
    const auto cfg = enc::EncoderConfig::toy();
    enc::VisionTextEncoder encoder(cfg, 7);
    Rng rng(8);
    PseudoWordHyper hyper;
    hyper.style_tokens = 8;
    hyper.style_keep = 3;
    hyper.content_hidden = 32;
    hyper.style_hidden = 32;
    PseudoWordModules stage2a(rng, cfg, hyper, 2);
    DestylizationProjector projector(rng, cfg.d1);
    Linear head(rng, cfg.d1, 2);

    // stage 2b: everything from earlier stages is frozen
    encoder.freeze_all();
    stage2a.params().set_requires_grad(false);

    Adam opt;
    opt.add_group(projector.params("p").vars(), 5e-5);
    opt.add_group(head.params("h").vars(), 5e-5);

    std::vector<TrainingExample> batch;
    for (int i = 0; i < 4; ++i) {
        batch.push_back({random_image(static_cast<std::uint64_t>(i)), i / 2});
    }

    const auto enc_before = encoder.params().checksum();
    const auto modules_before = stage2a.params().checksum();
    const auto proj_before = projector.params("p").checksum();
    const auto head_before = head.params("h").checksum();

    DisentangleHyper dh;
    const auto report = psd_step(batch, encoder, stage2a, projector, head, opt, 1.0, dh);

    CHECK(encoder.params().checksum() == enc_before);
    CHECK(stage2a.params().checksum() == modules_before);
    CHECK(projector.params("p").checksum() != proj_before);
    CHECK(head.params("h").checksum() != head_before);
    CHECK(report.total ==
          doctest::Approx(report.contrastive + report.triplet_image + report.identity)
              .epsilon(1e-9));
    CHECK(report.triplet_text == 0.0);
}

TEST_CASE("alignment improves over psd steps on a fixed toy set") {
    const auto cfg = enc::EncoderConfig::toy();
    enc::VisionTextEncoder encoder(cfg, 21);
    Rng rng(22);
    PseudoWordHyper hyper;
    hyper.style_tokens = 8;
    hyper.style_keep = 3;
    hyper.content_hidden = 32;
    hyper.style_hidden = 32;
    PseudoWordModules stage2a(rng, cfg, hyper, 4);
    DestylizationProjector projector(rng, cfg.d1);
    Linear head(rng, cfg.d1, 4);
    encoder.freeze_all();
    stage2a.params().set_requires_grad(false);

    std::vector<TrainingExample> batch;
    for (int i = 0; i < 8; ++i) {
        batch.push_back({random_image(100 + static_cast<std::uint64_t>(i)), i / 2});
    }

    auto measure = [&]() {
        std::vector<Var> vc_rows, tc_rows;
        for (const auto& ex : batch) {
            const auto bundle = encoder.encode_image(ex.image);
            vc_rows.push_back(projector.forward(bundle.global, false));
            Var token = stage2a.content_inverter.forward(bundle.global);
            tc_rows.push_back(encoder.encode_text(encoder.assemble_content_prompt(token)));
        }
        return mean_cosine(concat_rows(vc_rows)->value, concat_rows(tc_rows)->value);
    };

    const double before = measure();
    Adam opt;
    opt.add_group(projector.params("p").vars(), 1e-3);
    opt.add_group(head.params("h").vars(), 1e-3);
    DisentangleHyper dh;
    for (int step = 0; step < 50; ++step) {
        psd_step(batch, encoder, stage2a, projector, head, opt, 1.0, dh);
    }
    const double after = measure();
    CHECK(after > before);
}

TEST_CASE("projector state round-trips through an archive (incl. running stats)") {
    Rng rng(30);
    DestylizationProjector a(rng, 12);
    Var warm = constant(randn(rng, 8, 12, 1.0));
    a.forward(warm, true); // move running stats off their init
    TensorArchive ar;
    a.save_state(ar, "projector");

    DestylizationProjector b(rng, 12);
    b.load_state(TensorArchive::deserialize(ar.serialize()), "projector");
    Var probe = constant(randn(rng, 1, 12, 1.0));
    CHECK(destylize(a, probe)->value == destylize(b, probe)->value);
}
