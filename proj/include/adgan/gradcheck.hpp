#pragma once

// Central finite-difference gradient checking. Runs the function twice per
// coordinate at x +/- h and compares against the reverse-mode gradient.

#include <cmath>
#include <functional>
#include <vector>

#include "adgan/tensor.hpp"

namespace adgan {

// f maps the parameter list to a scalar tensor. Returns the maximum relative
// error max(|analytic - numeric| / max(1, |analytic|, |numeric|)) over all
// coordinates of all parameters.
template <typename T>
double grad_check(const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
                  std::vector<Tensor<T>>& params, T h = T(1e-5)) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tensor<T> loss = f(params);
    loss.backward();
    std::vector<std::vector<T>> analytic;
    for (auto& p : params) analytic.push_back(p.grad());

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (std::size_t j = 0; j < p.data().size(); ++j) {
            T orig = p.data()[j];
            p.data()[j] = orig + h;
            T up = f(params).item();
            p.data()[j] = orig - h;
            T dn = f(params).item();
            p.data()[j] = orig;
            double numeric = (static_cast<double>(up) - static_cast<double>(dn)) / (2.0 * h);
            double a = static_cast<double>(analytic[pi][j]);
            double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace adgan
