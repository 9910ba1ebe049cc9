#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "gapnp/autodiff.hpp"

namespace gapnp::ad {

using Rng = std::mt19937_64;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment estimates for every parameter, created lazily on the first step.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::map<std::string, Tensor> first_moment;
    std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update applied in place. Parameters missing from
/// `grads` are left untouched but their moments still decay.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

/// Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
Tensor uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng);

}  // namespace gapnp::ad
