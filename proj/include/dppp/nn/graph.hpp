#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dppp/common.hpp"

namespace dppp::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One node of the reverse-mode tape. Values are dense matrices; scalars are
// 1x1. A fresh graph is built per forward pass; parameters are long-lived
// nodes that accumulate into `grad` across backward calls until zeroed.
class Node {
public:
    Mat value;
    Mat grad; // same shape as value once touched; empty until needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn; // pulls this->grad into parents' grads

    explicit Node(Mat v, bool req = false) : value(std::move(v)), requires_grad(req) {}

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Mat::Zero(value.rows(), value.cols());
        }
    }
    void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
};

using Var = std::shared_ptr<Node>;

inline Var constant(Mat v) { return std::make_shared<Node>(std::move(v), false); }
inline Var parameter(Mat v) { return std::make_shared<Node>(std::move(v), true); }

inline Var scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(m);
}

// Runs reverse-mode accumulation from `root`, which must be scalar (1x1).
// Parameter gradients accumulate; call zero_grad on them between steps.
void backward(const Var& root);

bool all_finite(const Mat& m);

} // namespace dppp::nn
