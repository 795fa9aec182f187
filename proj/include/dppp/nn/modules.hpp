#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dppp/nn/ops.hpp"
#include "dppp/rng.hpp"

namespace dppp::nn {

// Ordered named parameter list. Order is the serialization order, so modules
// must register parameters deterministically.
struct ParamMap {
    std::vector<std::pair<std::string, Var>> items;

    void add(const std::string& name, const Var& v) { items.emplace_back(name, v); }
    void merge(const std::string& prefix, const ParamMap& other) {
        for (const auto& [n, v] : other.items) {
            items.emplace_back(prefix + "." + n, v);
        }
    }
    std::vector<Var> vars() const {
        std::vector<Var> out;
        out.reserve(items.size());
        for (const auto& [n, v] : items) out.push_back(v);
        return out;
    }
    std::uint64_t checksum() const;
    void set_requires_grad(bool req) {
        for (auto& [n, v] : items) v->requires_grad = req;
    }
    void zero_grads() {
        for (auto& [n, v] : items) v->zero_grad();
    }
};

Mat randn(Rng& rng, int rows, int cols, double stddev);

struct Linear {
    Var weight; // in x out
    Var bias;   // 1 x out (empty if !has_bias)
    bool has_bias = true;

    Linear() = default;
    Linear(Rng& rng, int in, int out, bool with_bias = true, double stddev = -1.0);
    Var forward(const Var& x) const;
    ParamMap params(const std::string& name) const;
};

struct LayerNorm {
    Var gain; // 1 x width
    Var bias; // 1 x width

    LayerNorm() = default;
    explicit LayerNorm(int width);
    Var forward(const Var& x) const { return layer_norm_rows(x, gain, bias); }
    ParamMap params(const std::string& name) const;
};

struct Embedding {
    Var table; // vocab x width

    Embedding() = default;
    Embedding(Rng& rng, int vocab, int width, double stddev = 0.02);
    Var lookup(const std::vector<int>& ids) const { return gather_rows(table, ids); }
    ParamMap params(const std::string& name) const;
};

// Multi-head self-attention over a single sequence (rows = positions).
struct MultiHeadAttention {
    Linear q, k, v, out;
    int heads = 1;
    bool causal = false;

    MultiHeadAttention() = default;
    MultiHeadAttention(Rng& rng, int width, int n_heads, bool causal_mask);
    Var forward(const Var& x) const;
    ParamMap params(const std::string& name) const;
};

// Pre-norm transformer block: x + attn(ln1(x)); x + mlp(ln2(x)).
struct TransformerBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Linear fc1, fc2;

    TransformerBlock() = default;
    TransformerBlock(Rng& rng, int width, int n_heads, bool causal_mask, int mlp_ratio = 4);
    Var forward(const Var& x) const;
    ParamMap params(const std::string& name) const;
};

// Three linear layers with GELU between them; the inversion-network shape.
struct Mlp3 {
    Linear l1, l2, l3;

    Mlp3() = default;
    Mlp3(Rng& rng, int in, int hidden, int out);
    Var forward(const Var& x) const;
    ParamMap params(const std::string& name) const;
};

struct BatchNorm1d {
    Var gamma; // 1 x width
    Var beta;  // 1 x width
    Mat running_mean;
    Mat running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm1d() = default;
    explicit BatchNorm1d(int width);
    Var forward(const Var& x, bool training);
    ParamMap params(const std::string& name) const;
    // Running buffers are state, not parameters; serialized separately.
};

// Adam with per-group learning-rate scale. lr is passed at step time so the
// schedule stays outside the optimizer.
class Adam {
public:
    struct Group {
        std::vector<Var> params;
        double lr_scale = 1.0;
    };

    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);

    void add_group(std::vector<Var> params, double lr_scale);
    void step(double lr);
    void zero_grad();

    std::int64_t step_count() const { return t_; }

    // State serialization (moments + step counter), in group/param order.
    std::vector<Mat> moments() const;
    void set_moments(const std::vector<Mat>& m, std::int64_t t);

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
    std::vector<Group> groups_;
    std::vector<std::vector<Mat>> m_, v_; // first/second moments per group
};

} // namespace dppp::nn
