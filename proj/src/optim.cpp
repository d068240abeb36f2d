#include "ppcov/optim.hpp"

#include <cmath>

#include "ppcov/errors.hpp"

namespace ppcov::nd {

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "sgd") return OptimizerKind::kSgd;
    if (name == "adam") return OptimizerKind::kAdam;
    if (name == "adam_lr_0.01") return OptimizerKind::kAdamLr001;
    if (name == "nadam") return OptimizerKind::kNadam;
    if (name == "rmsprop") return OptimizerKind::kRmsProp;
    throw UsageError("unknown optimizer: " + name);
}

std::string optimizer_name(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::kSgd: return "sgd";
        case OptimizerKind::kAdam: return "adam";
        case OptimizerKind::kAdamLr001: return "adam_lr_0.01";
        case OptimizerKind::kNadam: return "nadam";
        case OptimizerKind::kRmsProp: return "rmsprop";
    }
    throw ModelError("bad optimizer kind");
}

double default_learning_rate(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::kSgd: return 0.01;
        case OptimizerKind::kAdam: return 0.001;
        case OptimizerKind::kAdamLr001: return 0.01;
        case OptimizerKind::kNadam: return 0.002;
        case OptimizerKind::kRmsProp: return 0.001;
    }
    throw ModelError("bad optimizer kind");
}

OptimizerState make_optimizer(OptimizerKind kind) {
    OptimizerState state;
    state.kind = kind;
    state.learning_rate = default_learning_rate(kind);
    return state;
}

double clip_gradients(ParamMap& grads, double tau) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    double norm = std::sqrt(sq);
    if (norm > tau) {
        double scale = tau / norm;
        for (auto& [name, g] : grads) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
        }
    }
    return norm;
}

namespace {

Tensor& moment_slot(ParamMap& moments, const std::string& name, const Tensor& param) {
    auto it = moments.find(name);
    if (it == moments.end()) {
        it = moments.emplace(name, Tensor::zeros(param.shape())).first;
    }
    return it->second;
}

}  // namespace

void optimizer_step(OptimizerState& state, ParamMap& params, const ParamMap& grads) {
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double lr = state.learning_rate;

    for (const auto& [name, grad] : grads) {
        auto pit = params.find(name);
        if (pit == params.end()) throw ModelError("optimizer_step: no parameter named " + name);
        Tensor& param = pit->second;
        if (param.shape() != grad.shape()) {
            throw ModelError("optimizer_step: shape mismatch for " + name);
        }

        switch (state.kind) {
            case OptimizerKind::kSgd: {
                for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
                break;
            }
            case OptimizerKind::kAdam:
            case OptimizerKind::kAdamLr001: {
                Tensor& m = moment_slot(state.first_moment, name, param);
                Tensor& v = moment_slot(state.second_moment, name, param);
                const double bc1 = 1.0 - std::pow(state.beta1, t);
                const double bc2 = 1.0 - std::pow(state.beta2, t);
                for (std::size_t i = 0; i < param.size(); ++i) {
                    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
                    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
                    double m_hat = m[i] / bc1;
                    double v_hat = v[i] / bc2;
                    param[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
                }
                break;
            }
            case OptimizerKind::kNadam: {
                Tensor& m = moment_slot(state.first_moment, name, param);
                Tensor& v = moment_slot(state.second_moment, name, param);
                const double bc1 = 1.0 - std::pow(state.beta1, t);
                const double bc2 = 1.0 - std::pow(state.beta2, t);
                for (std::size_t i = 0; i < param.size(); ++i) {
                    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
                    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
                    double m_hat = m[i] / bc1;
                    double v_hat = v[i] / bc2;
                    double nesterov = state.beta1 * m_hat + (1.0 - state.beta1) * grad[i] / bc1;
                    param[i] -= lr * nesterov / (std::sqrt(v_hat) + state.epsilon);
                }
                break;
            }
            case OptimizerKind::kRmsProp: {
                Tensor& v = moment_slot(state.second_moment, name, param);
                for (std::size_t i = 0; i < param.size(); ++i) {
                    v[i] = state.rho * v[i] + (1.0 - state.rho) * grad[i] * grad[i];
                    param[i] -= lr * grad[i] / (std::sqrt(v[i]) + state.epsilon);
                }
                break;
            }
        }
    }
}

}  // namespace ppcov::nd
