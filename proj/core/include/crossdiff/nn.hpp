#pragma once

#include "crossdiff/autograd.hpp"

#include <string>
#include <vector>

namespace crossdiff::nn {

using ag::Tensor;

// Ordered, named parameter registry shared by a model; the order defines
// the optimizer state layout and the checkpoint layout.
class ParamStore {
public:
    Tensor add(const std::string& name, Mat init);
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    Tensor find(const std::string& name) const;
    void zero_grad();
    long long scalar_count() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

Mat xavier_uniform(int rows, int cols, Rng& rng);

struct Linear {
    Tensor weight;  // [in x out]
    Tensor bias;    // [1 x out]

    Linear() = default;
    Linear(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng, bool zero_init = false);
    Tensor operator()(const Tensor& x) const;  // [N x in] -> [N x out]
    int out_dim() const { return weight.cols(); }
};

// Double linear layers with a ReLU in between.
struct Mlp2 {
    Linear first, second;

    Mlp2() = default;
    Mlp2(ParamStore& params, const std::string& prefix, int in, int hidden, int out, Rng& rng,
         bool zero_init_last = false);
    Tensor operator()(const Tensor& x) const;
};

// Single-layer GRU applied over the rows of a [T x in] sequence; returns
// the [T x hidden] hidden-state sequence.
struct Gru {
    Tensor w_input;   // [in x 3H], gate order: update, reset, candidate
    Tensor w_hidden;  // [H x 3H]
    Tensor b_input;   // [1 x 3H]
    Tensor b_hidden;  // [1 x 3H]
    int hidden = 0;

    Gru() = default;
    Gru(ParamStore& params, const std::string& prefix, int in, int hidden, Rng& rng);
    Tensor operator()(const Tensor& seq) const;
};

// Multi-head scaled dot-product attention with separate projections for
// queries and keys/values; supports mismatched input/output widths so the
// same block serves both the temporal and feature axes.
struct MultiHeadAttention {
    Linear proj_q, proj_k, proj_v, proj_out;
    int heads = 1;
    int model_dim = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& params, const std::string& prefix, int dim_q_in, int dim_kv_in, int model_dim,
                       int dim_out, int heads, Rng& rng);
    Tensor operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in) const;
};

// Pre-norm transformer encoder layer: self-attention and a feedforward
// expansion, both with residual connections.
struct TransformerLayer {
    MultiHeadAttention attn;
    Linear ff_in, ff_out;
    double dropout = 0.0;

    TransformerLayer() = default;
    TransformerLayer(ParamStore& params, const std::string& prefix, int dim, int heads, int ff_dim, double dropout,
                     Rng& rng);
    Tensor operator()(const Tensor& x, bool training, Rng& rng) const;
};

// Sinusoidal position table for sequence order.
Mat sinusoidal_encoding(int length, int dim);
// Sinusoidal embedding of a scalar diffusion step.
Mat sinusoidal_step(int k, int dim);

}  // namespace crossdiff::nn
