#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gapnp/autodiff.hpp"

namespace testsupport {

using gapnp::Shape;
using gapnp::Tensor;
namespace ad = gapnp::ad;

using ScalarFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (double& x : t.storage()) x = u(rng);
    return t;
}

inline double rel_err(double a, double n, double floor = 1e-4) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Largest relative error between backward() and central differences over
/// every entry of every input.
inline double gradient_error(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5) {
    std::vector<Tensor> analytic;
    {
        ad::Graph g;
        std::vector<ad::Var> vars;
        for (const auto& t : inputs) vars.push_back(g.variable(t));
        ad::Var loss = f(g, vars);
        g.backward(loss);
        for (const auto& v : vars) analytic.push_back(g.grad(v));
    }
    auto eval = [&](const std::vector<Tensor>& in) {
        ad::Graph g(false);
        std::vector<ad::Var> vars;
        for (const auto& t : in) vars.push_back(g.constant(t));
        return f(g, vars).value().item();
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double x0 = inputs[i][j];
            inputs[i][j] = x0 + h;
            const double fp = eval(inputs);
            inputs[i][j] = x0 - h;
            const double fm = eval(inputs);
            inputs[i][j] = x0;
            worst = std::max(worst, rel_err(analytic[i][j], (fp - fm) / (2 * h)));
        }
    }
    return worst;
}

inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
    return v[std::min(idx, v.size() - 1)];
}

}  // namespace testsupport
