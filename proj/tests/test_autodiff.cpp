#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dppp/nn/modules.hpp"
#include "dppp/nn/ops.hpp"
#include "support/gradcheck.hpp"

using namespace dppp;
using namespace dppp::nn;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
    return randn(rng, r, c, scale);
}

} // namespace

TEST_CASE("elementwise and matmul gradients match finite differences") {
    Rng rng(11);
    std::vector<Mat> leaves = {random_mat(rng, 3, 4), random_mat(rng, 4, 5),
                               random_mat(rng, 3, 5)};
    auto loss = [](const std::vector<Var>& v) {
        Var y = matmul(v[0], v[1]);            // 3x5
        y = add(y, v[2]);
        y = mul(y, v[2]);
        y = sub(y, scale(v[2], 0.5));
        return mean_all(gelu(y));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("softmax / log-softmax / transpose gradients") {
    Rng rng(12);
    std::vector<Mat> leaves = {random_mat(rng, 4, 6)};
    auto loss = [](const std::vector<Var>& v) {
        Var s = softmax_rows(v[0]);
        Var ls = log_softmax_rows(transpose(v[0]));
        return add(sum_all(mul(s, s)), mean_all(ls));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("masked softmax gradient") {
    Rng rng(13);
    Mat mask = Mat::Zero(5, 5);
    for (int r = 0; r < 5; ++r)
        for (int c = r + 1; c < 5; ++c) mask(r, c) = -1e30;
    std::vector<Mat> leaves = {random_mat(rng, 5, 5)};
    auto loss = [mask](const std::vector<Var>& v) {
        return mean_all(softmax_rows_masked(v[0], mask));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("layer norm gradient (input, gain, bias)") {
    Rng rng(14);
    std::vector<Mat> leaves = {random_mat(rng, 3, 8), random_mat(rng, 1, 8),
                               random_mat(rng, 1, 8)};
    auto loss = [](const std::vector<Var>& v) {
        return mean_all(gelu(layer_norm_rows(v[0], v[1], v[2])));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("l2 normalize gradient") {
    Rng rng(15);
    std::vector<Mat> leaves = {random_mat(rng, 4, 6)};
    auto loss = [](const std::vector<Var>& v) {
        Var n = l2_normalize_rows(v[0]);
        return sum_all(mul(n, n));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);

    // rows come out unit length
    Var n = l2_normalize_rows(parameter(random_mat(rng, 5, 7)));
    for (int r = 0; r < 5; ++r) {
        CHECK(n->value.row(r).norm() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("shape ops gradients: concat, slice, gather, reshape") {
    Rng rng(16);
    std::vector<Mat> leaves = {random_mat(rng, 2, 4), random_mat(rng, 3, 4)};
    auto loss = [](const std::vector<Var>& v) {
        Var cat = concat_rows({v[0], v[1]});              // 5x4
        Var sl = slice_rows(cat, 1, 3);                   // 3x4
        Var cols = concat_cols({slice_cols(sl, 0, 2), slice_cols(sl, 2, 2)});
        Var g = gather_rows(cols, {0, 2, 2, 1});          // duplicated row
        return mean_all(mul(reshape_row(g), reshape_row(g)));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("reductions and bias broadcast gradients") {
    Rng rng(17);
    std::vector<Mat> leaves = {random_mat(rng, 4, 3), random_mat(rng, 1, 3)};
    auto loss = [](const std::vector<Var>& v) {
        Var y = add_rowwise(v[0], v[1]);
        return add(sum_all(mean_rows(mul(y, y))), mean_all(relu(y)));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("exp / log / sigmoid gradients") {
    Rng rng(18);
    Mat x = random_mat(rng, 3, 3);
    std::vector<Mat> leaves = {x};
    auto loss = [](const std::vector<Var>& v) {
        Var e = exp_(v[0]);
        return mean_all(add(log_(add_scalar(e, 1.0)), sigmoid(v[0])));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("batch-hard triplet matches finite differences") {
    Rng rng(19);
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    std::vector<Mat> leaves = {random_mat(rng, 6, 5)};
    auto loss = [&](const std::vector<Var>& v) {
        return batch_hard_triplet(v[0], labels, 0.4);
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("batch-hard triplet throws without a valid anchor") {
    Mat f = Mat::Ones(3, 2);
    CHECK_THROWS_AS(batch_hard_triplet(parameter(f), {0, 0, 0}, 0.3), TripletError);
}

TEST_CASE("batch norm training mode gradient") {
    Rng rng(20);
    std::vector<Mat> leaves = {random_mat(rng, 6, 4), random_mat(rng, 1, 4),
                               random_mat(rng, 1, 4)};
    auto loss = [](const std::vector<Var>& v) {
        Mat rm = Mat::Zero(1, 4), rv = Mat::Ones(1, 4);
        return mean_all(gelu(batch_norm_train(v[0], v[1], v[2], rm, rv, 0.1, 1e-5)));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("batch norm eval mode gradient and determinism") {
    Rng rng(21);
    Mat rm = random_mat(rng, 1, 4, 0.3);
    Mat rv = Mat::Ones(1, 4) * 1.7;
    std::vector<Mat> leaves = {random_mat(rng, 5, 4), random_mat(rng, 1, 4),
                               random_mat(rng, 1, 4)};
    auto loss = [rm, rv](const std::vector<Var>& v) {
        return mean_all(gelu(batch_norm_eval(v[0], v[1], v[2], rm, rv, 1e-5)));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}

TEST_CASE("gradient accumulates across two backward passes") {
    Var p = parameter(Mat::Ones(1, 1) * 3.0);
    Var l1 = mul(p, p);
    backward(l1);
    Var l2 = scale(p, 4.0);
    backward(l2);
    CHECK(p->grad(0, 0) == doctest::Approx(2.0 * 3.0 + 4.0));
    p->zero_grad();
    CHECK(p->grad(0, 0) == 0.0);
}

TEST_CASE("frozen parameters receive no gradient but pass it through") {
    Rng rng(22);
    Var frozen = parameter(random_mat(rng, 3, 3));
    frozen->requires_grad = false;
    Var x = parameter(random_mat(rng, 2, 3));
    Var out = mean_all(matmul(x, frozen));
    backward(out);
    x->ensure_grad();
    CHECK(x->grad.cwiseAbs().maxCoeff() > 0.0);
    CHECK(frozen->grad.size() == 0); // never touched
}

TEST_CASE("adam decreases a simple quadratic") {
    Var p = parameter(Mat::Ones(1, 4) * 2.0);
    Adam opt;
    opt.add_group({p}, 1.0);
    double first = p->value.squaredNorm();
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        Var loss = sum_all(mul(p, p));
        backward(loss);
        opt.step(0.05);
    }
    CHECK(p->value.squaredNorm() < 1e-2 * first);
}

TEST_CASE("linear module jacobian vs finite differences") {
    Rng rng(23);
    Linear lin(rng, 8, 4);
    std::vector<Mat> leaves = {random_mat(rng, 1, 8), lin.weight->value,
                               lin.bias->value};
    auto loss = [](const std::vector<Var>& v) {
        Var y = add_rowwise(matmul(v[0], v[1]), v[2]);
        return mean_all(mul(y, y));
    };
    auto res = gradcheck::check(leaves, loss);
    CHECK(res.max_abs_diff < 1e-6);
}
