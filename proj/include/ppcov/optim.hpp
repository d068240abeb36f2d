#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ppcov/tensor.hpp"

namespace ppcov::nd {

enum class OptimizerKind {
    kSgd,
    kAdam,
    kAdamLr001,
    kNadam,
    kRmsProp,
};

OptimizerKind optimizer_from_string(const std::string& name);
std::string optimizer_name(OptimizerKind kind);
double default_learning_rate(OptimizerKind kind);

using ParamMap = std::map<std::string, Tensor>;

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::kAdam;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double rho = 0.9;
    double clip_norm = 1.0;
    std::int64_t step_count = 0;
    ParamMap first_moment;
    ParamMap second_moment;
};

OptimizerState make_optimizer(OptimizerKind kind);

// Scales every gradient by tau/g when the global L2 norm g exceeds tau.
// Returns the pre-clip norm.
double clip_gradients(ParamMap& grads, double tau = 1.0);

void optimizer_step(OptimizerState& state, ParamMap& params, const ParamMap& grads);

}  // namespace ppcov::nd
