#include "dppp/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dppp::nn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

Var make(Mat value, std::vector<Var> parents) {
    bool req = false;
    for (const auto& p : parents) {
        req = req || p->requires_grad;
    }
    auto node = std::make_shared<Node>(std::move(value), req);
    if (req) {
        node->parents = std::move(parents);
    }
    return node;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch");
    }
}

} // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    auto out = make(a->value + b->value, {a, b});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, b]() {
            if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad; }
            if (b->requires_grad) { b->ensure_grad(); b->grad += self->grad; }
        };
    }
    return out;
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    auto out = make(a->value - b->value, {a, b});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, b]() {
            if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad; }
            if (b->requires_grad) { b->ensure_grad(); b->grad -= self->grad; }
        };
    }
    return out;
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    auto out = make(a->value.cwiseProduct(b->value), {a, b});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, b]() {
            if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad.cwiseProduct(b->value); }
            if (b->requires_grad) { b->ensure_grad(); b->grad += self->grad.cwiseProduct(a->value); }
        };
    }
    return out;
}

Var scale(const Var& a, double s) {
    auto out = make(a->value * s, {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, s]() {
            a->ensure_grad();
            a->grad += self->grad * s;
        };
    }
    return out;
}

Var add_scalar(const Var& a, double s) {
    auto out = make(a->value.array() + s, {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad += self->grad;
        };
    }
    return out;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) {
        throw ShapeError("matmul: inner dimensions disagree");
    }
    auto out = make(a->value * b->value, {a, b});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, b]() {
            if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad * b->value.transpose(); }
            if (b->requires_grad) { b->ensure_grad(); b->grad += a->value.transpose() * self->grad; }
        };
    }
    return out;
}

Var transpose(const Var& a) {
    auto out = make(a->value.transpose(), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad += self->grad.transpose();
        };
    }
    return out;
}

Var add_rowwise(const Var& a, const Var& row) {
    if (row->value.rows() != 1 || row->value.cols() != a->value.cols()) {
        throw ShapeError("add_rowwise: bias must be 1 x cols(a)");
    }
    Mat v = a->value;
    v.rowwise() += row->value.row(0);
    auto out = make(std::move(v), {a, row});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, row]() {
            if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad; }
            if (row->requires_grad) {
                row->ensure_grad();
                row->grad += self->grad.colwise().sum();
            }
        };
    }
    return out;
}

Var relu(const Var& a) {
    auto out = make(a->value.cwiseMax(0.0), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad += self->grad.cwiseProduct(
                (a->value.array() > 0.0).cast<double>().matrix());
        };
    }
    return out;
}

Var gelu(const Var& a) {
    Mat v = a->value.unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    });
    auto out = make(std::move(v), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            Mat d = a->value.unaryExpr([](double x) {
                return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                       x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
            });
            a->grad += self->grad.cwiseProduct(d);
        };
    }
    return out;
}

Var sigmoid(const Var& a) {
    Mat v = a->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    auto out = make(std::move(v), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad += self->grad.cwiseProduct(
                self->value.cwiseProduct((1.0 - self->value.array()).matrix()));
        };
    }
    return out;
}

Var exp_(const Var& a) {
    auto out = make(a->value.array().exp().matrix(), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad += self->grad.cwiseProduct(self->value);
        };
    }
    return out;
}

Var log_(const Var& a) {
    if ((a->value.array() <= 0.0).any()) {
        throw NumericsError("log: non-positive input");
    }
    auto out = make(a->value.array().log().matrix(), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad += self->grad.cwiseQuotient(a->value);
        };
    }
    return out;
}

namespace {

Mat softmax_value(const Mat& x) {
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
        y.row(r) = (e / e.sum()).matrix();
    }
    return y;
}

Var softmax_backward_common(Mat y, std::vector<Var> parents, const Var& a) {
    auto out = make(std::move(y), std::move(parents));
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            for (Eigen::Index r = 0; r < self->value.rows(); ++r) {
                const double dot = self->grad.row(r).dot(self->value.row(r));
                a->grad.row(r) += self->value.row(r).cwiseProduct(
                    (self->grad.row(r).array() - dot).matrix());
            }
        };
    }
    return out;
}

} // namespace

Var softmax_rows(const Var& a) {
    return softmax_backward_common(softmax_value(a->value), {a}, a);
}

Var softmax_rows_masked(const Var& a, const Mat& additive_mask) {
    if (additive_mask.rows() != a->value.rows() || additive_mask.cols() != a->value.cols()) {
        throw ShapeError("softmax_rows_masked: mask shape mismatch");
    }
    return softmax_backward_common(softmax_value(a->value + additive_mask), {a}, a);
}

Var log_softmax_rows(const Var& a) {
    Mat y(a->value.rows(), a->value.cols());
    for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
        const double mx = a->value.row(r).maxCoeff();
        Eigen::ArrayXd sh = a->value.row(r).array() - mx;
        const double lse = std::log(sh.exp().sum());
        y.row(r) = (sh - lse).matrix();
    }
    auto out = make(std::move(y), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            for (Eigen::Index r = 0; r < self->value.rows(); ++r) {
                const double gsum = self->grad.row(r).sum();
                a->grad.row(r) += self->grad.row(r) -
                                  gsum * self->value.row(r).array().exp().matrix();
            }
        };
    }
    return out;
}

Var layer_norm_rows(const Var& x, const Var& gain_row, const Var& bias_row, double eps) {
    const auto cols = x->value.cols();
    if (gain_row->value.cols() != cols || bias_row->value.cols() != cols ||
        gain_row->value.rows() != 1 || bias_row->value.rows() != 1) {
        throw ShapeError("layer_norm_rows: gain/bias must be 1 x cols(x)");
    }
    const auto rows = x->value.rows();
    Mat xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = x->value.row(r).mean();
        Eigen::ArrayXd centered = x->value.row(r).array() - mu;
        const double var = centered.square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(r) = is;
        xhat.row(r) = (centered * is).matrix();
    }
    Mat y = xhat;
    y.array().rowwise() *= gain_row->value.row(0).array();
    y.rowwise() += bias_row->value.row(0);
    auto out = make(std::move(y), {x, gain_row, bias_row});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, gain_row, bias_row, xhat, inv_std]() {
            if (gain_row->requires_grad) {
                gain_row->ensure_grad();
                gain_row->grad += self->grad.cwiseProduct(xhat).colwise().sum();
            }
            if (bias_row->requires_grad) {
                bias_row->ensure_grad();
                bias_row->grad += self->grad.colwise().sum();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                for (Eigen::Index r = 0; r < self->grad.rows(); ++r) {
                    Eigen::RowVectorXd dxhat =
                        self->grad.row(r).cwiseProduct(gain_row->value.row(0));
                    const double m1 = dxhat.mean();
                    const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                    x->grad.row(r) += inv_std(r) *
                        (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                }
            }
        };
    }
    return out;
}

Var l2_normalize_rows(const Var& x, double eps) {
    const auto rows = x->value.rows();
    Mat y(rows, x->value.cols());
    Eigen::VectorXd inv_norm(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double s = x->value.row(r).squaredNorm();
        const double in = 1.0 / std::sqrt(s + eps);
        inv_norm(r) = in;
        y.row(r) = x->value.row(r) * in;
    }
    auto out = make(std::move(y), {x});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, inv_norm]() {
            x->ensure_grad();
            for (Eigen::Index r = 0; r < self->grad.rows(); ++r) {
                const double dot = self->grad.row(r).dot(x->value.row(r));
                const double in = inv_norm(r);
                x->grad.row(r) += in * self->grad.row(r) -
                                  (in * in * in * dot) * x->value.row(r);
            }
        };
    }
    return out;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_rows: empty input");
    }
    const auto cols = parts.front()->value.cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != cols) {
            throw ShapeError("concat_rows: column mismatch");
        }
        rows += p->value.rows();
    }
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p->value.rows()) = p->value;
        r += p->value.rows();
    }
    auto out = make(std::move(v), {parts.begin(), parts.end()});
    if (out->requires_grad) {
        Node* self = out.get();
        auto captured = parts;
        out->backward_fn = [self, captured]() {
            Eigen::Index r = 0;
            for (const auto& p : captured) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    p->grad += self->grad.middleRows(r, p->value.rows());
                }
                r += p->value.rows();
            }
        };
    }
    return out;
}

Var slice_rows(const Var& x, int r0, int nrows) {
    if (r0 < 0 || nrows <= 0 || r0 + nrows > x->value.rows()) {
        throw ShapeError("slice_rows: out of range");
    }
    auto out = make(x->value.middleRows(r0, nrows), {x});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, r0, nrows]() {
            x->ensure_grad();
            x->grad.middleRows(r0, nrows) += self->grad;
        };
    }
    return out;
}

Var slice_cols(const Var& x, int c0, int ncols) {
    if (c0 < 0 || ncols <= 0 || c0 + ncols > x->value.cols()) {
        throw ShapeError("slice_cols: out of range");
    }
    auto out = make(x->value.middleCols(c0, ncols), {x});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, c0, ncols]() {
            x->ensure_grad();
            x->grad.middleCols(c0, ncols) += self->grad;
        };
    }
    return out;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: empty input");
    }
    const auto rows = parts.front()->value.rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != rows) {
            throw ShapeError("concat_cols: row mismatch");
        }
        cols += p->value.cols();
    }
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p->value.cols()) = p->value;
        c += p->value.cols();
    }
    auto out = make(std::move(v), {parts.begin(), parts.end()});
    if (out->requires_grad) {
        Node* self = out.get();
        auto captured = parts;
        out->backward_fn = [self, captured]() {
            Eigen::Index c = 0;
            for (const auto& p : captured) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    p->grad += self->grad.middleCols(c, p->value.cols());
                }
                c += p->value.cols();
            }
        };
    }
    return out;
}

Var gather_rows(const Var& x, const std::vector<int>& idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), x->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x->value.rows()) {
            throw RangeError("gather_rows: index out of range");
        }
        v.row(static_cast<Eigen::Index>(i)) = x->value.row(idx[i]);
    }
    auto out = make(std::move(v), {x});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, idx]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                x->grad.row(idx[i]) += self->grad.row(static_cast<Eigen::Index>(i));
            }
        };
    }
    return out;
}

Var reshape_row(const Var& x) {
    const Eigen::Index n = x->value.size();
    Mat v(1, n);
    // Mat is row-major, so a flat copy keeps row-major order.
    std::copy(x->value.data(), x->value.data() + n, v.data());
    auto out = make(std::move(v), {x});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x]() {
            x->ensure_grad();
            const Eigen::Index n = x->value.size();
            for (Eigen::Index i = 0; i < n; ++i) {
                x->grad.data()[i] += self->grad.data()[i];
            }
        };
    }
    return out;
}

Var sum_all(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a->value.sum();
    auto out = make(std::move(v), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a]() {
            a->ensure_grad();
            a->grad.array() += self->grad(0, 0);
        };
    }
    return out;
}

Var mean_all(const Var& a) {
    const double n = static_cast<double>(a->value.size());
    Mat v(1, 1);
    v(0, 0) = a->value.sum() / n;
    auto out = make(std::move(v), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, n]() {
            a->ensure_grad();
            a->grad.array() += self->grad(0, 0) / n;
        };
    }
    return out;
}

Var mean_rows(const Var& a) {
    const double n = static_cast<double>(a->value.rows());
    auto out = make(a->value.colwise().mean(), {a});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, a, n]() {
            a->ensure_grad();
            a->grad += (self->grad / n).replicate(a->value.rows(), 1);
        };
    }
    return out;
}

Var batch_hard_triplet(const Var& feats, const std::vector<int>& labels, double margin) {
    const auto b = feats->value.rows();
    if (static_cast<Eigen::Index>(labels.size()) != b) {
        throw ShapeError("batch_hard_triplet: labels size mismatch");
    }
    Mat dist(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < b; ++j) {
            const double d = (feats->value.row(i) - feats->value.row(j)).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    struct AnchorPick {
        int anchor;
        int hard_pos;
        int hard_neg;
        bool active; // hinge strictly positive
    };
    std::vector<AnchorPick> picks;
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        int hp = -1, hn = -1;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) {
                if (hp < 0 || dist(i, j) > dist(i, hp)) hp = static_cast<int>(j);
            } else {
                if (hn < 0 || dist(i, j) < dist(i, hn)) hn = static_cast<int>(j);
            }
        }
        if (hp < 0 || hn < 0) continue;
        const double hinge = dist(i, hp) - dist(i, hn) + margin;
        total += std::max(hinge, 0.0);
        picks.push_back({static_cast<int>(i), hp, hn, hinge > 0.0});
    }
    if (picks.empty()) {
        throw TripletError("batch_hard_triplet: no anchor has both a positive and a negative");
    }
    const double inv_n = 1.0 / static_cast<double>(picks.size());
    Mat v(1, 1);
    v(0, 0) = total * inv_n;
    auto out = make(std::move(v), {feats});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, feats, picks, inv_n, dist]() {
            feats->ensure_grad();
            const double g = self->grad(0, 0) * inv_n;
            for (const auto& p : picks) {
                if (!p.active) continue;
                // d||f_a - f_x|| / d f_a = (f_a - f_x) / d; subgradient 0 at d = 0.
                const double dp = dist(p.anchor, p.hard_pos);
                if (dp > 0.0) {
                    Eigen::RowVectorXd u =
                        (feats->value.row(p.anchor) - feats->value.row(p.hard_pos)) / dp;
                    feats->grad.row(p.anchor) += g * u;
                    feats->grad.row(p.hard_pos) -= g * u;
                }
                const double dn = dist(p.anchor, p.hard_neg);
                if (dn > 0.0) {
                    Eigen::RowVectorXd u =
                        (feats->value.row(p.anchor) - feats->value.row(p.hard_neg)) / dn;
                    feats->grad.row(p.anchor) -= g * u;
                    feats->grad.row(p.hard_neg) += g * u;
                }
            }
        };
    }
    return out;
}

Var batch_norm_train(const Var& x, const Var& gamma_row, const Var& beta_row,
                     Mat& running_mean, Mat& running_var, double momentum, double eps) {
    const auto rows = x->value.rows();
    const auto cols = x->value.cols();
    if (rows < 2) {
        throw ShapeError("batch_norm_train: need at least 2 rows");
    }
    Eigen::RowVectorXd mu = x->value.colwise().mean();
    Mat centered = x->value.rowwise() - mu;
    Eigen::RowVectorXd var = centered.array().square().colwise().mean();
    Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
    Mat xhat = centered.array().rowwise() * inv_std.array();

    const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
    running_mean = (1.0 - momentum) * running_mean + momentum * mu;
    running_var = (1.0 - momentum) * running_var + momentum * (var * unbias);

    Mat y = xhat;
    y.array().rowwise() *= gamma_row->value.row(0).array();
    y.rowwise() += beta_row->value.row(0);
    auto out = make(std::move(y), {x, gamma_row, beta_row});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, gamma_row, beta_row, xhat, inv_std, rows, cols]() {
            if (gamma_row->requires_grad) {
                gamma_row->ensure_grad();
                gamma_row->grad += self->grad.cwiseProduct(xhat).colwise().sum();
            }
            if (beta_row->requires_grad) {
                beta_row->ensure_grad();
                beta_row->grad += self->grad.colwise().sum();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                Mat dxhat = self->grad.array().rowwise() * gamma_row->value.row(0).array();
                Eigen::RowVectorXd m1 = dxhat.colwise().mean();
                Eigen::RowVectorXd m2 = dxhat.cwiseProduct(xhat).colwise().mean();
                for (Eigen::Index c = 0; c < cols; ++c) {
                    for (Eigen::Index r = 0; r < rows; ++r) {
                        x->grad(r, c) += inv_std(c) *
                            (dxhat(r, c) - m1(c) - xhat(r, c) * m2(c));
                    }
                }
            }
        };
    }
    return out;
}

Var batch_norm_eval(const Var& x, const Var& gamma_row, const Var& beta_row,
                    const Mat& running_mean, const Mat& running_var, double eps) {
    Eigen::RowVectorXd inv_std = (running_var.row(0).array() + eps).rsqrt();
    Mat xhat = (x->value.rowwise() - running_mean.row(0)).array().rowwise() * inv_std.array();
    Mat y = xhat;
    y.array().rowwise() *= gamma_row->value.row(0).array();
    y.rowwise() += beta_row->value.row(0);
    auto out = make(std::move(y), {x, gamma_row, beta_row});
    if (out->requires_grad) {
        Node* self = out.get();
        out->backward_fn = [self, x, gamma_row, beta_row, xhat, inv_std]() {
            if (gamma_row->requires_grad) {
                gamma_row->ensure_grad();
                gamma_row->grad += self->grad.cwiseProduct(xhat).colwise().sum();
            }
            if (beta_row->requires_grad) {
                beta_row->ensure_grad();
                beta_row->grad += self->grad.colwise().sum();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                x->grad += (self->grad.array().rowwise() *
                            (gamma_row->value.row(0).array() * inv_std.array())).matrix();
            }
        };
    }
    return out;
}

} // namespace dppp::nn
