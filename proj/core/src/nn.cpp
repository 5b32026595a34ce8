#include "crossdiff/nn.hpp"

#include <cmath>

namespace crossdiff::nn {

Tensor ParamStore::add(const std::string& name, Mat init) {
    for (const auto& [n, t] : items_)
        if (n == name) throw ArgumentError("ParamStore: duplicate parameter '" + name + "'");
    Tensor t = Tensor::variable(std::move(init));
    items_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw ArgumentError("ParamStore: unknown parameter '" + name + "'");
}

void ParamStore::zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
}

long long ParamStore::scalar_count() const {
    long long total = 0;
    for (const auto& [n, t] : items_) total += static_cast<long long>(t.rows()) * t.cols();
    return total;
}

Mat xavier_uniform(int rows, int cols, Rng& rng) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Linear::Linear(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng, bool zero_init) {
    weight = params.add(prefix + ".weight", zero_init ? Mat::Zero(in, out) : xavier_uniform(in, out, rng));
    bias = params.add(prefix + ".bias", Mat::Zero(1, out));
}

Tensor Linear::operator()(const Tensor& x) const {
    return ag::add_rowwise(ag::matmul(x, weight), bias);
}

Mlp2::Mlp2(ParamStore& params, const std::string& prefix, int in, int hidden, int out, Rng& rng,
           bool zero_init_last)
    : first(params, prefix + ".0", in, hidden, rng), second(params, prefix + ".1", hidden, out, rng, zero_init_last) {}

Tensor Mlp2::operator()(const Tensor& x) const {
    return second(ag::relu(first(x)));
}

Gru::Gru(ParamStore& params, const std::string& prefix, int in, int hidden_dim, Rng& rng) : hidden(hidden_dim) {
    const double a = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> dist(-a, a);
    auto init = [&](int r, int c) {
        Mat m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
        return m;
    };
    w_input = params.add(prefix + ".w_input", init(in, 3 * hidden_dim));
    w_hidden = params.add(prefix + ".w_hidden", init(hidden_dim, 3 * hidden_dim));
    b_input = params.add(prefix + ".b_input", Mat::Zero(1, 3 * hidden_dim));
    b_hidden = params.add(prefix + ".b_hidden", Mat::Zero(1, 3 * hidden_dim));
}

Tensor Gru::operator()(const Tensor& seq) const {
    const int t_len = seq.rows();
    const int h = hidden;
    Tensor state = Tensor::constant(Mat::Zero(1, h));
    std::vector<Tensor> outputs;
    outputs.reserve(t_len);
    for (int t = 0; t < t_len; ++t) {
        Tensor x_t = ag::slice_rows(seq, t, 1);
        Tensor gates_x = ag::add_rowwise(ag::matmul(x_t, w_input), b_input);
        Tensor gates_h = ag::add_rowwise(ag::matmul(state, w_hidden), b_hidden);
        Tensor update = ag::sigmoid(ag::add(ag::slice_cols(gates_x, 0, h), ag::slice_cols(gates_h, 0, h)));
        Tensor reset = ag::sigmoid(ag::add(ag::slice_cols(gates_x, h, h), ag::slice_cols(gates_h, h, h)));
        Tensor cand = ag::tanh_op(
            ag::add(ag::slice_cols(gates_x, 2 * h, h), ag::cmul(reset, ag::slice_cols(gates_h, 2 * h, h))));
        // h' = u * h + (1 - u) * cand
        Tensor keep = ag::cmul(update, state);
        Tensor fresh = ag::cmul(ag::add_scalar(ag::neg(update), 1.0), cand);
        state = ag::add(keep, fresh);
        outputs.push_back(state);
    }
    return ag::concat_rows(outputs);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& params, const std::string& prefix, int dim_q_in, int dim_kv_in,
                                       int model_dim_, int dim_out, int heads_, Rng& rng)
    : proj_q(params, prefix + ".q", dim_q_in, model_dim_, rng),
      proj_k(params, prefix + ".k", dim_kv_in, model_dim_, rng),
      proj_v(params, prefix + ".v", dim_kv_in, model_dim_, rng),
      proj_out(params, prefix + ".out", model_dim_, dim_out, rng),
      heads(heads_),
      model_dim(model_dim_) {
    if (model_dim_ % heads_ != 0) throw ArgumentError("MultiHeadAttention: model_dim must divide by heads");
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in) const {
    const int head_dim = model_dim / heads;
    Tensor q = proj_q(q_in);
    Tensor k = proj_k(k_in);
    Tensor v = proj_v(v_in);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Tensor qh = ag::slice_cols(q, h * head_dim, head_dim);
        Tensor kh = ag::slice_cols(k, h * head_dim, head_dim);
        Tensor vh = ag::slice_cols(v, h * head_dim, head_dim);
        Tensor scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
        Tensor weights = ag::softmax_rows(scores);
        head_outputs.push_back(ag::matmul(weights, vh));
    }
    return proj_out(ag::concat_cols(head_outputs));
}

TransformerLayer::TransformerLayer(ParamStore& params, const std::string& prefix, int dim, int heads, int ff_dim,
                                   double dropout_, Rng& rng)
    : attn(params, prefix + ".attn", dim, dim, dim, dim, heads, rng),
      ff_in(params, prefix + ".ff.0", dim, ff_dim, rng),
      ff_out(params, prefix + ".ff.1", ff_dim, dim, rng),
      dropout(dropout_) {}

Tensor TransformerLayer::operator()(const Tensor& x, bool training, Rng& rng) const {
    Tensor normed = ag::layer_norm_rows(x);
    Tensor attended = attn(normed, normed, normed);
    if (training && dropout > 0) attended = ag::dropout(attended, dropout, rng);
    Tensor mid = ag::add(x, attended);
    Tensor ff = ff_out(ag::relu(ff_in(ag::layer_norm_rows(mid))));
    if (training && dropout > 0) ff = ag::dropout(ff, dropout, rng);
    return ag::add(mid, ff);
}

Mat sinusoidal_encoding(int length, int dim) {
    Mat pe = Mat::Zero(length, dim);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            const double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
            pe(pos, i) = std::sin(angle);
            if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

Mat sinusoidal_step(int k, int dim) {
    Mat emb = Mat::Zero(1, dim);
    for (int i = 0; i < dim; i += 2) {
        const double angle = k / std::pow(10000.0, static_cast<double>(i) / dim);
        emb(0, i) = std::sin(angle);
        if (i + 1 < dim) emb(0, i + 1) = std::cos(angle);
    }
    return emb;
}

}  // namespace crossdiff::nn
