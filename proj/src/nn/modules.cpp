#include "dppp/nn/modules.hpp"

#include <cmath>

namespace dppp::nn {

std::uint64_t ParamMap::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, v] : items) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(v->value.data(), sizeof(double) * v->value.size(), h);
    }
    return h;
}

Mat randn(Rng& rng, int rows, int cols, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = rng.normal(0.0, stddev);
        }
    }
    return m;
}

// --- Linear ---

Linear::Linear(Rng& rng, int in, int out, bool with_bias, double stddev) : has_bias(with_bias) {
    const double sd = stddev > 0.0 ? stddev : 1.0 / std::sqrt(static_cast<double>(in));
    weight = parameter(randn(rng, in, out, sd));
    if (has_bias) {
        bias = parameter(Mat::Zero(1, out));
    }
}

Var Linear::forward(const Var& x) const {
    Var y = matmul(x, weight);
    return has_bias ? add_rowwise(y, bias) : y;
}

ParamMap Linear::params(const std::string& name) const {
    ParamMap p;
    p.add(name + ".weight", weight);
    if (has_bias) p.add(name + ".bias", bias);
    return p;
}

// --- LayerNorm ---

LayerNorm::LayerNorm(int width) {
    gain = parameter(Mat::Ones(1, width));
    bias = parameter(Mat::Zero(1, width));
}

ParamMap LayerNorm::params(const std::string& name) const {
    ParamMap p;
    p.add(name + ".gain", gain);
    p.add(name + ".bias", bias);
    return p;
}

// --- Embedding ---

Embedding::Embedding(Rng& rng, int vocab, int width, double stddev) {
    table = parameter(randn(rng, vocab, width, stddev));
}

ParamMap Embedding::params(const std::string& name) const {
    ParamMap p;
    p.add(name + ".table", table);
    return p;
}

// --- MultiHeadAttention ---

MultiHeadAttention::MultiHeadAttention(Rng& rng, int width, int n_heads, bool causal_mask)
    : heads(n_heads), causal(causal_mask) {
    if (width % n_heads != 0) {
        throw ShapeError("attention width must be divisible by head count");
    }
    q = Linear(rng, width, width);
    k = Linear(rng, width, width);
    v = Linear(rng, width, width);
    out = Linear(rng, width, width);
}

Var MultiHeadAttention::forward(const Var& x) const {
    const int width = static_cast<int>(x->value.cols());
    const int len = static_cast<int>(x->value.rows());
    const int hd = width / heads;
    Var qs = q.forward(x);
    Var ks = k.forward(x);
    Var vs = v.forward(x);

    std::optional<Mat> mask;
    if (causal) {
        Mat m = Mat::Zero(len, len);
        for (int r = 0; r < len; ++r) {
            for (int c = r + 1; c < len; ++c) {
                m(r, c) = -1e30;
            }
        }
        mask = std::move(m);
    }

    std::vector<Var> head_outs;
    head_outs.reserve(heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int h = 0; h < heads; ++h) {
        Var qh = slice_cols(qs, h * hd, hd);
        Var kh = slice_cols(ks, h * hd, hd);
        Var vh = slice_cols(vs, h * hd, hd);
        Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        Var attn = mask ? softmax_rows_masked(scores, *mask) : softmax_rows(scores);
        head_outs.push_back(matmul(attn, vh));
    }
    Var merged = heads == 1 ? head_outs.front() : concat_cols(head_outs);
    return out.forward(merged);
}

ParamMap MultiHeadAttention::params(const std::string& name) const {
    ParamMap p;
    p.merge(name, q.params("q"));
    p.merge(name, k.params("k"));
    p.merge(name, v.params("v"));
    p.merge(name, out.params("out"));
    return p;
}

// --- TransformerBlock ---

TransformerBlock::TransformerBlock(Rng& rng, int width, int n_heads, bool causal_mask,
                                   int mlp_ratio) {
    ln1 = LayerNorm(width);
    attn = MultiHeadAttention(rng, width, n_heads, causal_mask);
    ln2 = LayerNorm(width);
    fc1 = Linear(rng, width, width * mlp_ratio);
    fc2 = Linear(rng, width * mlp_ratio, width);
}

Var TransformerBlock::forward(const Var& x) const {
    Var h = add(x, attn.forward(ln1.forward(x)));
    return add(h, fc2.forward(gelu(fc1.forward(ln2.forward(h)))));
}

ParamMap TransformerBlock::params(const std::string& name) const {
    ParamMap p;
    p.merge(name, ln1.params("ln1"));
    p.merge(name, attn.params("attn"));
    p.merge(name, ln2.params("ln2"));
    p.merge(name, fc1.params("fc1"));
    p.merge(name, fc2.params("fc2"));
    return p;
}

// --- Mlp3 ---

Mlp3::Mlp3(Rng& rng, int in, int hidden, int out) {
    l1 = Linear(rng, in, hidden);
    l2 = Linear(rng, hidden, hidden);
    l3 = Linear(rng, hidden, out);
}

Var Mlp3::forward(const Var& x) const {
    return l3.forward(gelu(l2.forward(gelu(l1.forward(x)))));
}

ParamMap Mlp3::params(const std::string& name) const {
    ParamMap p;
    p.merge(name, l1.params("l1"));
    p.merge(name, l2.params("l2"));
    p.merge(name, l3.params("l3"));
    return p;
}

// --- BatchNorm1d ---

BatchNorm1d::BatchNorm1d(int width) {
    gamma = parameter(Mat::Ones(1, width));
    beta = parameter(Mat::Zero(1, width));
    running_mean = Mat::Zero(1, width);
    running_var = Mat::Ones(1, width);
}

Var BatchNorm1d::forward(const Var& x, bool training) {
    if (training) {
        return batch_norm_train(x, gamma, beta, running_mean, running_var, momentum, eps);
    }
    return batch_norm_eval(x, gamma, beta, running_mean, running_var, eps);
}

ParamMap BatchNorm1d::params(const std::string& name) const {
    ParamMap p;
    p.add(name + ".gamma", gamma);
    p.add(name + ".beta", beta);
    return p;
}

// --- Adam ---

Adam::Adam(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::add_group(std::vector<Var> params, double lr_scale) {
    auto& g = groups_.emplace_back();
    g.params = std::move(params);
    g.lr_scale = lr_scale;
    auto& m = m_.emplace_back();
    auto& v = v_.emplace_back();
    for (const auto& p : g.params) {
        m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        const double glr = lr * groups_[gi].lr_scale;
        for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
            auto& p = groups_[gi].params[pi];
            p->ensure_grad();
            Mat g = p->grad;
            if (weight_decay_ != 0.0) {
                g += weight_decay_ * p->value;
            }
            m_[gi][pi] = beta1_ * m_[gi][pi] + (1.0 - beta1_) * g;
            v_[gi][pi] = beta2_ * v_[gi][pi] + (1.0 - beta2_) * g.cwiseProduct(g);
            Mat mhat = m_[gi][pi] / bc1;
            Mat vhat = v_[gi][pi] / bc2;
            p->value -= glr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
        }
    }
}

void Adam::zero_grad() {
    for (auto& g : groups_) {
        for (auto& p : g.params) {
            p->zero_grad();
        }
    }
}

std::vector<Mat> Adam::moments() const {
    std::vector<Mat> out;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
            out.push_back(m_[gi][pi]);
            out.push_back(v_[gi][pi]);
        }
    }
    return out;
}

void Adam::set_moments(const std::vector<Mat>& moments, std::int64_t t) {
    std::size_t k = 0;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
            if (k + 1 >= moments.size() + 1) {
                throw Error("Adam::set_moments: moment count mismatch");
            }
            m_[gi][pi] = moments[k++];
            v_[gi][pi] = moments[k++];
        }
    }
    if (k != moments.size()) {
        throw Error("Adam::set_moments: moment count mismatch");
    }
    t_ = t;
}

} // namespace dppp::nn
