#include "gapnp/optim.hpp"

#include <cmath>

namespace gapnp::ad {

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state) {
    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    for (auto& [name, value] : params.items()) {
        auto [m_it, m_new] = state.first_moment.try_emplace(name, value.shape());
        auto [v_it, v_new] = state.second_moment.try_emplace(name, value.shape());
        Tensor& m = m_it->second;
        Tensor& v = v_it->second;
        if (m.shape() != value.shape() || v.shape() != value.shape()) {
            throw DimensionError("adam_step: moment shape mismatch for '" + name + "'");
        }
        auto g_it = grads.find(name);
        const Tensor* g = g_it == grads.end() ? nullptr : &g_it->second;
        if (g && g->shape() != value.shape()) {
            throw DimensionError("adam_step: gradient " + shape_string(g->shape()) +
                                 " does not match parameter '" + name + "' " +
                                 shape_string(value.shape()));
        }
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            value[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

Tensor uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(shape);
    for (auto& x : t.storage()) x = dist(rng);
    return t;
}

}  // namespace gapnp::ad
