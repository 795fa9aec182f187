#pragma once

#include <cmath>
#include <vector>

#include "dppp/nn/graph.hpp"

// Brute-force reference implementations used as oracles. Written with plain
// loops, independent of the library's graph ops.
namespace refimpl {

using dppp::nn::Mat;

inline Mat normalize_rows(Mat m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double n = std::sqrt(m.row(r).squaredNorm() + 1e-12);
        m.row(r) /= n;
    }
    return m;
}

// Symmetric supervised contrastive loss on a precomputed similarity matrix
// (rows: image anchors, cols: text). Positives include the diagonal pair.
inline double supcon_from_sim(const Mat& sim, const std::vector<int>& labels) {
    const auto b = sim.rows();
    double total = 0.0;
    for (int dir = 0; dir < 2; ++dir) {
        Mat s = dir == 0 ? sim : Mat(sim.transpose());
        double acc = 0.0;
        for (Eigen::Index i = 0; i < b; ++i) {
            double denom = 0.0;
            for (Eigen::Index j = 0; j < b; ++j) denom += std::exp(s(i, j));
            double anchor = 0.0;
            int npos = 0;
            for (Eigen::Index p = 0; p < b; ++p) {
                if (labels[p] == labels[i]) {
                    anchor += -std::log(std::exp(s(i, p)) / denom);
                    ++npos;
                }
            }
            acc += anchor / npos;
        }
        total += acc / static_cast<double>(b);
    }
    return total;
}

inline double supcon_reference(const Mat& img, const Mat& txt,
                               const std::vector<int>& labels, double tau) {
    const Mat a = normalize_rows(img);
    const Mat t = normalize_rows(txt);
    Mat sim = (a * t.transpose()) / tau;
    return supcon_from_sim(sim, labels);
}

inline double id_loss_reference(const Mat& logits, const std::vector<int>& labels,
                                double eps) {
    const auto b = logits.rows();
    const auto c = logits.cols();
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        double mx = logits.row(i).maxCoeff();
        double denom = 0.0;
        for (Eigen::Index j = 0; j < c; ++j) denom += std::exp(logits(i, j) - mx);
        for (Eigen::Index j = 0; j < c; ++j) {
            const double q = eps / c + (labels[i] == j ? 1.0 - eps : 0.0);
            total += -q * (logits(i, j) - mx - std::log(denom));
        }
    }
    return total / static_cast<double>(b);
}

// Repeated argmax scan; deliberately different from the library's sort.
inline std::vector<int> topk_reference(const Mat& w, int k) {
    std::vector<bool> taken(static_cast<std::size_t>(w.cols()), false);
    std::vector<int> out;
    for (int pick = 0; pick < k; ++pick) {
        int best = -1;
        for (int j = 0; j < w.cols(); ++j) {
            if (taken[static_cast<std::size_t>(j)]) continue;
            if (best < 0 || w(0, j) > w(0, best)) best = j; // strict: ties keep lower
        }
        taken[static_cast<std::size_t>(best)] = true;
        out.push_back(best);
    }
    return out;
}

} // namespace refimpl
