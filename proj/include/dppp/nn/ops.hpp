#pragma once

#include <vector>

#include "dppp/nn/graph.hpp"

namespace dppp::nn {

// --- arithmetic ---
Var add(const Var& a, const Var& b);            // same shape
Var sub(const Var& a, const Var& b);            // same shape
Var mul(const Var& a, const Var& b);            // hadamard, same shape
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_rowwise(const Var& a, const Var& row);  // broadcast a 1xC row over all rows

// --- nonlinearities ---
Var relu(const Var& a);
Var gelu(const Var& a);                         // exact erf form
Var sigmoid(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);                         // caller guarantees positive input

// --- structured ---
Var softmax_rows(const Var& a);
Var softmax_rows_masked(const Var& a, const Mat& additive_mask);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain_row, const Var& bias_row, double eps = 1e-5);
Var l2_normalize_rows(const Var& x, double eps = 1e-12);

// --- shape manipulation ---
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& x, int r0, int nrows);
Var slice_cols(const Var& x, int c0, int ncols);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& x, const std::vector<int>& idx); // rows may repeat
Var reshape_row(const Var& x);                              // flatten to 1xN, row-major

// --- reductions ---
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_rows(const Var& a); // column mean -> 1xC

// --- fused losses / normalization ---

// Batch-hard triplet with Euclidean distances. For every anchor that has at
// least one positive (same label, not itself) and one negative, contributes
// max(d(a, hardest_pos) - d(a, hardest_neg) + margin, 0); returns the mean
// over contributing anchors. Ties resolve to the lower index. Throws
// TripletError when no anchor qualifies.
class TripletError : public Error {
public:
    using Error::Error;
};
Var batch_hard_triplet(const Var& feats, const std::vector<int>& labels, double margin);

// BatchNorm over rows (features in columns). Training mode normalizes with
// batch statistics and updates the running buffers in place; eval mode is an
// affine map using the running buffers.
Var batch_norm_train(const Var& x, const Var& gamma_row, const Var& beta_row,
                     Mat& running_mean, Mat& running_var, double momentum, double eps);
Var batch_norm_eval(const Var& x, const Var& gamma_row, const Var& beta_row,
                    const Mat& running_mean, const Mat& running_var, double eps);

} // namespace dppp::nn
