#pragma once

#include <string>
#include <vector>

#include "aduw/tensor.hpp"

namespace aduw {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// lr0 * (1 - epoch/total)^power, applied once per epoch.
double poly_decay_lr(double lr0, int epoch, int total_epochs, double power);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
public:
    AdamW(std::vector<NamedTensor> params, AdamWConfig cfg = {});

    // Applies one update in place using each parameter's .grad. Throws if any
    // gradient is non-finite, naming the parameter.
    void step(double lr);

    void zero_grad();
    int64_t step_count() const { return step_; }
    const std::vector<NamedTensor>& params() const { return params_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    std::vector<NamedTensor> params_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    AdamWConfig cfg_;
    int64_t step_ = 0;
};

}  // namespace aduw
