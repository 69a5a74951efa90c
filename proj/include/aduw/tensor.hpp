#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aduw {

// Dense row-major float32 tensor with define-by-run reverse-mode autodiff.
// Ops record a backward closure on the result; backward(loss) walks the
// recorded graph in reverse topological order and accumulates into .grad.
// A graph is consumed by backward: running it a second time is an error.

struct TensorImpl {
    std::vector<int> shape;
    std::vector<float> data;
    bool requires_grad = false;
    std::vector<float> grad;  // empty until a gradient reaches this tensor

    // autograd bookkeeping (empty for leaves)
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> backward_fn;
    bool consumed = false;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return impl_->numel(); }

    std::span<float> data() { return impl_->data; }
    std::span<const float> data() const { return impl_->data; }
    float item() const;  // scalar tensors only

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<float> grad() { return impl_->grad; }
    std::span<const float> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// RAII guard: ops executed while a guard is alive are not recorded.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, float s);
Tensor div(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor log(const Tensor& x);    // domain error on x <= 0
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);   // domain error on x < 0; derivative 0 at x == 0
Tensor square(const Tensor& x);

// ---- linear algebra / structure ----
Tensor matmul(const Tensor& a, const Tensor& b);          // [M,K]x[K,N]
Tensor bias_add(const Tensor& x, const Tensor& b);        // [M,N] + [N]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int padding);                   // x[B,Ci,H,W] w[Co,Ci,kh,kw] b[Co] (b may be undefined)
Tensor upsample_nearest2x(const Tensor& x);
Tensor maxpool2d(const Tensor& x, int k, int stride);
Tensor avgpool2d(const Tensor& x, int k, int stride);
Tensor global_avg_pool(const Tensor& x);                  // [B,C,H,W] -> [B,C]

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdims = false);
Tensor mean(const Tensor& x, const std::vector<int>& axes, bool keepdims = false);

// ---- shape ----
Tensor concat(const std::vector<Tensor>& ts, int axis);
Tensor reshape(const Tensor& x, std::vector<int> new_shape);
Tensor detach(const Tensor& x);  // copies values; severs the graph

// Reverse-mode sweep from a scalar loss. Consumes the sub-graph.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<int>& s);

}  // namespace aduw
