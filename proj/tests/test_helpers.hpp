#pragma once

#include "crossdiff/autograd.hpp"
#include "crossdiff/common.hpp"

#include <functional>

namespace crossdiff::testing {

// Central finite differences on one scalar entry of a leaf tensor against
// the analytic gradient of a scalar-valued graph.
struct FdResult {
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
};

inline FdResult fd_check_entry(ag::Tensor leaf, int row, int col,
                               const std::function<ag::Tensor()>& loss_fn, double h = 1e-6) {
    leaf.zero_grad();
    ag::Tensor loss = loss_fn();
    ag::backward(loss);
    FdResult r;
    r.analytic = leaf.node()->has_grad ? leaf.grad()(row, col) : 0.0;

    const double saved = leaf.raw_value()(row, col);
    leaf.raw_value()(row, col) = saved + h;
    const double up = loss_fn().value()(0, 0);
    leaf.raw_value()(row, col) = saved - h;
    const double down = loss_fn().value()(0, 0);
    leaf.raw_value()(row, col) = saved;

    r.numeric = (up - down) / (2.0 * h);
    r.rel_error = std::abs(r.analytic - r.numeric) / std::max({std::abs(r.analytic), std::abs(r.numeric), 1e-10});
    return r;
}

// Checks the entry carrying the largest analytic gradient, which keeps the
// relative-error test away from finite-difference noise at zero-gradient
// coordinates.
inline FdResult fd_check_strongest(ag::Tensor leaf, const std::function<ag::Tensor()>& loss_fn, double h = 1e-5) {
    leaf.zero_grad();
    ag::backward(loss_fn());
    if (!leaf.node()->has_grad) throw ArgumentError("fd_check_strongest: leaf received no gradient");
    Eigen::Index row = 0, col = 0;
    leaf.grad().cwiseAbs().maxCoeff(&row, &col);
    return fd_check_entry(leaf, static_cast<int>(row), static_cast<int>(col), loss_fn, h);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace crossdiff::testing
