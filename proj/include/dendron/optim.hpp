#ifndef DENDRON_OPTIM_HPP
#define DENDRON_OPTIM_HPP

#include <memory>
#include <span>
#include <vector>

#include "dendron/layers.hpp"

namespace dendron {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kAdam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Updates a fixed set of parameters from their accumulated gradients.
// Frozen params are skipped entirely: no value change, no moment update.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    // `params` must be the same list on every call; Adam moment state is
    // keyed by position.
    void step(std::span<Param*> params);
    void zero_grad(std::span<Param*> params);

    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    long long t_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace dendron

#endif
