#pragma once

#include <cstdint>
#include <vector>

namespace webgym {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adaptive-moment gradient descent with bias correction.
class Adam {
public:
    Adam(AdamConfig cfg, size_t param_count)
        : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad);

    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }
    int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    int64_t t_ = 0;
};

} // namespace webgym
