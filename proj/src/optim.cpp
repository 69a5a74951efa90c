#include "aduw/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace aduw {

double poly_decay_lr(double lr0, int epoch, int total_epochs, double power) {
    if (lr0 <= 0.0) throw std::invalid_argument("poly_decay_lr: lr0 must be positive");
    if (epoch < 0 || epoch >= total_epochs)
        throw std::invalid_argument("poly_decay_lr: epoch " + std::to_string(epoch) +
                                    " out of range [0," + std::to_string(total_epochs) + ")");
    return lr0 * std::pow(1.0 - static_cast<double>(epoch) / total_epochs, power);
}

AdamW::AdamW(std::vector<NamedTensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const NamedTensor& p : params_) {
        m_.emplace_back(p.tensor.data().size(), 0.0f);
        v_.emplace_back(p.tensor.data().size(), 0.0f);
    }
}

void AdamW::step(double lr) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    float b1 = static_cast<float>(cfg_.beta1);
    float b2 = static_cast<float>(cfg_.beta2);

    for (size_t pi = 0; pi < params_.size(); ++pi) {
        NamedTensor& p = params_[pi];
        auto data = p.tensor.data();
        std::vector<float>& m = m_[pi];
        std::vector<float>& v = v_[pi];
        bool has_grad = p.tensor.has_grad();
        auto grad = p.tensor.grad();

        if (has_grad) {
            for (float g : grad)
                if (!std::isfinite(g))
                    throw std::runtime_error("adamw: non-finite gradient in parameter '" +
                                             p.name + "'");
        }
        for (size_t i = 0; i < data.size(); ++i) {
            float g = has_grad ? grad[i] : 0.0f;
            m[i] = b1 * m[i] + (1.0f - b1) * g;
            v[i] = b2 * v[i] + (1.0f - b2) * g * g;
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            double upd = m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * data[i];
            data[i] = static_cast<float>(data[i] - lr * upd);
        }
    }
}

void AdamW::zero_grad() {
    for (NamedTensor& p : params_) p.tensor.zero_grad();
}

}  // namespace aduw
