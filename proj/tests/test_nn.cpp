#include "crossdiff/nn.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

using namespace crossdiff;
using ag::Tensor;
using testing::fd_check_entry;

TEST_CASE("ParamStore rejects duplicates and counts scalars") {
    nn::ParamStore params;
    params.add("a", Mat::Zero(2, 3));
    params.add("b", Mat::Zero(4, 1));
    CHECK_THROWS_AS(params.add("a", Mat::Zero(1, 1)), ArgumentError);
    CHECK(params.scalar_count() == 10);
    CHECK(params.find("b").rows() == 4);
    CHECK_THROWS_AS(params.find("zzz"), ArgumentError);
}

TEST_CASE("Linear and Mlp2 shapes and gradients") {
    nn::ParamStore params;
    Rng rng(1);
    nn::Mlp2 mlp(params, "mlp", 5, 8, 6, rng);
    Tensor x = Tensor::variable(randn(3, 5, rng));
    CHECK(mlp(x).rows() == 3);
    CHECK(mlp(x).cols() == 6);

    auto loss = [&] { return ag::mean_all(ag::cmul(mlp(x), mlp(x))); };
    CHECK(fd_check_entry(params.find("mlp.0.weight"), 2, 3, loss).rel_error < 1e-6);
    CHECK(fd_check_entry(params.find("mlp.1.bias"), 0, 1, loss).rel_error < 1e-6);
}

TEST_CASE("Gru emits per-step hidden states and backpropagates") {
    nn::ParamStore params;
    Rng rng(2);
    nn::Gru gru(params, "gru", 3, 4, rng);
    Tensor seq = Tensor::variable(randn(6, 3, rng));
    Tensor hidden = gru(seq);
    CHECK(hidden.rows() == 6);
    CHECK(hidden.cols() == 4);

    // truncating the sequence leaves the common prefix unchanged
    Tensor prefix = gru(ag::slice_rows(seq, 0, 4));
    CHECK(testing::max_abs_diff(prefix.value(), hidden.value().topRows(4)) < 1e-14);

    auto loss = [&] { return ag::mean_all(ag::cmul(gru(seq), gru(seq))); };
    CHECK(fd_check_entry(params.find("gru.w_hidden"), 1, 9, loss).rel_error < 1e-6);
    CHECK(fd_check_entry(seq, 5, 2, loss).rel_error < 1e-6);
}

TEST_CASE("MultiHeadAttention: softmax structure and mismatched widths") {
    nn::ParamStore params;
    Rng rng(3);
    nn::MultiHeadAttention att(params, "att", 7, 7, 8, 5, 4, rng);
    Tensor q = Tensor::variable(randn(6, 7, rng));
    Tensor kv = Tensor::variable(randn(9, 7, rng));
    Tensor out = att(q, kv, kv);
    CHECK(out.rows() == 6);
    CHECK(out.cols() == 5);

    auto loss = [&] { return ag::mean_all(ag::cmul(att(q, kv, kv), att(q, kv, kv))); };
    CHECK(fd_check_entry(params.find("att.q.weight"), 3, 2, loss).rel_error < 1e-6);
    CHECK(fd_check_entry(kv, 8, 6, loss).rel_error < 1e-6);

    CHECK_THROWS_AS(nn::MultiHeadAttention(params, "bad", 7, 7, 10, 5, 4, rng), ArgumentError);
}

TEST_CASE("TransformerLayer keeps shape, is deterministic without dropout") {
    nn::ParamStore params;
    Rng rng(4);
    nn::TransformerLayer layer(params, "layer", 8, 2, 16, 0.5, rng);
    Tensor x = Tensor::constant(randn(5, 8, rng));
    Rng unused(0);
    Mat a = layer(x, false, unused).value();
    Mat b = layer(x, false, unused).value();
    CHECK(testing::max_abs_diff(a, b) == 0.0);
    CHECK(a.rows() == 5);
    CHECK(a.cols() == 8);

    Rng d1(5), d2(5), d3(6);
    Mat with_dropout_1 = layer(x, true, d1).value();
    Mat with_dropout_2 = layer(x, true, d2).value();
    Mat with_dropout_3 = layer(x, true, d3).value();
    CHECK(testing::max_abs_diff(with_dropout_1, with_dropout_2) == 0.0);
    CHECK(testing::max_abs_diff(with_dropout_1, with_dropout_3) > 0.0);
}

TEST_CASE("sinusoidal tables are bounded and position-distinct") {
    const Mat pe = nn::sinusoidal_encoding(15, 64);
    CHECK(pe.rows() == 15);
    CHECK(pe.cols() == 64);
    CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
    for (int i = 1; i < 15; ++i) CHECK(testing::max_abs_diff(pe.row(i), pe.row(0)) > 1e-3);

    const Mat e1 = nn::sinusoidal_step(10, 64);
    const Mat e2 = nn::sinusoidal_step(11, 64);
    CHECK(testing::max_abs_diff(e1, e2) > 1e-3);
}
