#include "aduw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace aduw {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorImpl> make_impl(std::vector<int> shape, std::vector<float> data,
                                      bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    if (impl->numel() != static_cast<int64_t>(impl->data.size()))
        throw std::invalid_argument("tensor: shape/data size mismatch");
    for (int d : impl->shape)
        if (d <= 0) throw std::invalid_argument("tensor: dimensions must be positive");
    return impl;
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

// Attach the backward closure. Closures capture raw TensorImpl pointers; the
// parents vector owns the inputs and the consumer chain owns the node, so all
// pointers stay valid for the lifetime of the graph.
void record(Tensor& result, std::initializer_list<Tensor> parents, std::function<void()> fn) {
    auto impl = result.impl();
    impl->requires_grad = true;
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(fn);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        std::ostringstream os;
        os << op << ": shape mismatch " << shape_str(a.shape()) << " vs "
           << shape_str(b.shape());
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return Tensor(make_impl(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f),
                            requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return Tensor(make_impl(std::move(shape), std::vector<float>(static_cast<size_t>(n), value),
                            requires_grad));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor(make_impl({1}, {value}, requires_grad));
}

float Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar, shape " + shape_str(shape()));
    return impl_->data[0];
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    size_t n = a.data().size();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
    Tensor r = Tensor::from_data(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        TensorImpl* bi = b.impl().get();
        record(r, {a, b}, [ri, ai, bi, n]() {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < n; ++i) ai->grad[i] += ri->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < n; ++i) bi->grad[i] += ri->grad[i];
            }
        });
    }
    return r;
}

Tensor add(const Tensor& a, float s) {
    size_t n = a.data().size();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] + s;
    Tensor r = Tensor::from_data(a.shape(), std::move(out));
    if (should_record({&a})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        record(r, {a}, [ri, ai, n]() {
            ai->ensure_grad();
            for (size_t i = 0; i < n; ++i) ai->grad[i] += ri->grad[i];
        });
    }
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    size_t n = a.data().size();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
    Tensor r = Tensor::from_data(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        TensorImpl* bi = b.impl().get();
        record(r, {a, b}, [ri, ai, bi, n]() {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < n; ++i) ai->grad[i] += ri->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < n; ++i) bi->grad[i] -= ri->grad[i];
            }
        });
    }
    return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    size_t n = a.data().size();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
    Tensor r = Tensor::from_data(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        TensorImpl* bi = b.impl().get();
        record(r, {a, b}, [ri, ai, bi, n]() {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < n; ++i) ai->grad[i] += ri->grad[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < n; ++i) bi->grad[i] += ri->grad[i] * ai->data[i];
            }
        });
    }
    return r;
}

Tensor mul(const Tensor& a, float s) {
    size_t n = a.data().size();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] * s;
    Tensor r = Tensor::from_data(a.shape(), std::move(out));
    if (should_record({&a})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        record(r, {a}, [ri, ai, n, s]() {
            ai->ensure_grad();
            for (size_t i = 0; i < n; ++i) ai->grad[i] += ri->grad[i] * s;
        });
    }
    return r;
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape("div", a, b);
    size_t n = a.data().size();
    std::vector<float> out(n);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] / pb[i];
    Tensor r = Tensor::from_data(a.shape(), std::move(out));
    if (should_record({&a, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        TensorImpl* bi = b.impl().get();
        record(r, {a, b}, [ri, ai, bi, n]() {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < n; ++i) ai->grad[i] += ri->grad[i] / bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < n; ++i)
                    bi->grad[i] -= ri->grad[i] * ai->data[i] / (bi->data[i] * bi->data[i]);
            }
        });
    }
    return r;
}

namespace {

template <typename Fwd, typename Dfwd>
Tensor unary_op(const char* /*name*/, const Tensor& x, Fwd f, Dfwd df) {
    size_t n = x.data().size();
    std::vector<float> out(n);
    const float* px = x.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = f(px[i]);
    Tensor r = Tensor::from_data(x.shape(), std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        record(r, {x}, [ri, xi, n, df]() {
            xi->ensure_grad();
            for (size_t i = 0; i < n; ++i)
                xi->grad[i] += ri->grad[i] * df(xi->data[i], ri->data[i]);
        });
    }
    return r;
}

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_op("relu", x,
                    [](float v) { return v > 0.0f ? v : 0.0f; },
                    [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
    return unary_op("leaky_relu", x,
                    [slope](float v) { return v > 0.0f ? v : slope * v; },
                    [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op("sigmoid", x,
                    [](float v) {
                        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
                        float e = std::exp(v);
                        return e / (1.0f + e);
                    },
                    [](float, float y) { return y * (1.0f - y); });
}

Tensor softplus(const Tensor& x) {
    return unary_op("softplus", x,
                    [](float v) {
                        return std::max(v, 0.0f) + std::log1p(std::exp(-std::fabs(v)));
                    },
                    [](float v, float) {
                        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
                        float e = std::exp(v);
                        return e / (1.0f + e);
                    });
}

Tensor log(const Tensor& x) {
    for (float v : x.data())
        if (!(v > 0.0f))
            throw std::domain_error("log: non-positive input " + std::to_string(v) +
                                    " (clamp before calling)");
    return unary_op("log", x, [](float v) { return std::log(v); },
                    [](float v, float) { return 1.0f / v; });
}

Tensor exp(const Tensor& x) {
    return unary_op("exp", x, [](float v) { return std::exp(v); },
                    [](float, float y) { return y; });
}

Tensor sqrt(const Tensor& x) {
    for (float v : x.data())
        if (v < 0.0f)
            throw std::domain_error("sqrt: negative input " + std::to_string(v) +
                                    " (clamp before calling)");
    // derivative taken as 0 at the origin
    return unary_op("sqrt", x, [](float v) { return std::sqrt(v); },
                    [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

Tensor square(const Tensor& x) {
    return unary_op("square", x, [](float v) { return v * v; },
                    [](float v, float) { return 2.0f * v; });
}

// ---------------------------------------------------------------------------
// matmul / bias
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    int M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<float> out(static_cast<size_t>(M) * N, 0.0f);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) {
            float av = pa[i * K + k];
            const float* brow = pb + static_cast<size_t>(k) * N;
            float* orow = out.data() + static_cast<size_t>(i) * N;
            for (int j = 0; j < N; ++j) orow[j] += av * brow[j];
        }
    Tensor r = Tensor::from_data({M, N}, std::move(out));
    if (should_record({&a, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* ai = a.impl().get();
        TensorImpl* bi = b.impl().get();
        record(r, {a, b}, [ri, ai, bi, M, K, N]() {
            if (ai->requires_grad) {  // dA = dC * B^T
                ai->ensure_grad();
                for (int i = 0; i < M; ++i)
                    for (int k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j < N; ++j)
                            acc += static_cast<double>(ri->grad[i * N + j]) * bi->data[k * N + j];
                        ai->grad[i * K + k] += static_cast<float>(acc);
                    }
            }
            if (bi->requires_grad) {  // dB = A^T * dC
                bi->ensure_grad();
                for (int k = 0; k < K; ++k)
                    for (int j = 0; j < N; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < M; ++i)
                            acc += static_cast<double>(ai->data[i * K + k]) * ri->grad[i * N + j];
                        bi->grad[k * N + j] += static_cast<float>(acc);
                    }
            }
        });
    }
    return r;
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
    if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
        throw std::invalid_argument("bias_add: incompatible shapes " + shape_str(x.shape()) +
                                    " vs " + shape_str(b.shape()));
    int M = x.dim(0), N = x.dim(1);
    std::vector<float> out(static_cast<size_t>(M) * N);
    const float* px = x.data().data();
    const float* pb = b.data().data();
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) out[i * N + j] = px[i * N + j] + pb[j];
    Tensor r = Tensor::from_data(x.shape(), std::move(out));
    if (should_record({&x, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        TensorImpl* bi = b.impl().get();
        record(r, {x, b}, [ri, xi, bi, M, N]() {
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (int i = 0; i < M * N; ++i) xi->grad[i] += ri->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int j = 0; j < N; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < M; ++i) acc += ri->grad[i * N + j];
                    bi->grad[j] += static_cast<float>(acc);
                }
            }
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int B, Ci, H, W, Co, kh, kw, OH, OW, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int padding) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw std::invalid_argument("conv2d: expected 4-d input and weight, got " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                    shape_str(w.shape()));
    if (b && b->defined() && (b->ndim() != 1 || b->dim(0) != w.dim(0)))
        throw std::invalid_argument("conv2d: bias shape " + shape_str(b->shape()) +
                                    " does not match out channels of " + shape_str(w.shape()));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    ConvDims d;
    d.B = x.dim(0); d.Ci = x.dim(1); d.H = x.dim(2); d.W = x.dim(3);
    d.Co = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
    d.stride = stride; d.pad = padding;
    d.OH = (d.H + 2 * padding - d.kh) / stride + 1;
    d.OW = (d.W + 2 * padding - d.kw) / stride + 1;
    if (d.OH <= 0 || d.OW <= 0)
        throw std::invalid_argument("conv2d: kernel larger than padded input, " +
                                    shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    return d;
}

// valid output range for a given kernel offset: ix = ox*s + k - pad in [0, limit)
inline void ox_range(int k, int pad, int stride, int limit, int ow, int& lo, int& hi) {
    lo = 0;
    int off = k - pad;
    while (lo < ow && lo * stride + off < 0) ++lo;
    hi = ow - 1;
    while (hi >= lo && hi * stride + off >= limit) --hi;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    ConvDims d = conv_dims(x, w, b.defined() ? &b : nullptr, stride, padding);
    std::vector<float> out(static_cast<size_t>(d.B) * d.Co * d.OH * d.OW, 0.0f);
    const float* px = x.data().data();
    const float* pw = w.data().data();

    if (b.defined()) {
        const float* pb = b.data().data();
        for (int bb = 0; bb < d.B; ++bb)
            for (int co = 0; co < d.Co; ++co) {
                float* op = out.data() + (static_cast<size_t>(bb) * d.Co + co) * d.OH * d.OW;
                float bv = pb[co];
                for (int i = 0; i < d.OH * d.OW; ++i) op[i] = bv;
            }
    }

    for (int bb = 0; bb < d.B; ++bb) {
        for (int co = 0; co < d.Co; ++co) {
            float* oplane = out.data() + (static_cast<size_t>(bb) * d.Co + co) * d.OH * d.OW;
            for (int ci = 0; ci < d.Ci; ++ci) {
                const float* iplane = px + (static_cast<size_t>(bb) * d.Ci + ci) * d.H * d.W;
                const float* wbase = pw + ((static_cast<size_t>(co) * d.Ci + ci) * d.kh) * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        float wv = wbase[ky * d.kw + kx];
                        int lo, hi;
                        ox_range(kx, d.pad, d.stride, d.W, d.OW, lo, hi);
                        for (int oy = 0; oy < d.OH; ++oy) {
                            int iy = oy * d.stride + ky - d.pad;
                            if (iy < 0 || iy >= d.H) continue;
                            const float* irow = iplane + static_cast<size_t>(iy) * d.W;
                            float* orow = oplane + static_cast<size_t>(oy) * d.OW;
                            int off = kx - d.pad;
                            if (d.stride == 1) {
                                for (int ox = lo; ox <= hi; ++ox)
                                    orow[ox] += wv * irow[ox + off];
                            } else {
                                for (int ox = lo; ox <= hi; ++ox)
                                    orow[ox] += wv * irow[ox * d.stride + off];
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor r = Tensor::from_data({d.B, d.Co, d.OH, d.OW}, std::move(out));
    if (should_record({&x, &w, &b})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        TensorImpl* wi = w.impl().get();
        TensorImpl* bi = b.defined() ? b.impl().get() : nullptr;
        std::vector<Tensor> parents{x, w};
        if (b.defined()) parents.push_back(b);
        auto impl = r.impl();
        impl->requires_grad = true;
        for (auto& p : parents) impl->parents.push_back(p.impl());
        impl->backward_fn = [ri, xi, wi, bi, d]() {
            const float* g = ri->grad.data();
            if (xi->requires_grad) {
                xi->ensure_grad();
                float* dx = xi->grad.data();
                for (int bb = 0; bb < d.B; ++bb)
                    for (int co = 0; co < d.Co; ++co) {
                        const float* gplane =
                            g + (static_cast<size_t>(bb) * d.Co + co) * d.OH * d.OW;
                        for (int ci = 0; ci < d.Ci; ++ci) {
                            float* dplane =
                                dx + (static_cast<size_t>(bb) * d.Ci + ci) * d.H * d.W;
                            const float* wbase =
                                wi->data.data() + ((static_cast<size_t>(co) * d.Ci + ci) * d.kh) * d.kw;
                            for (int ky = 0; ky < d.kh; ++ky)
                                for (int kx = 0; kx < d.kw; ++kx) {
                                    float wv = wbase[ky * d.kw + kx];
                                    int lo, hi;
                                    ox_range(kx, d.pad, d.stride, d.W, d.OW, lo, hi);
                                    int off = kx - d.pad;
                                    for (int oy = 0; oy < d.OH; ++oy) {
                                        int iy = oy * d.stride + ky - d.pad;
                                        if (iy < 0 || iy >= d.H) continue;
                                        float* drow = dplane + static_cast<size_t>(iy) * d.W;
                                        const float* grow = gplane + static_cast<size_t>(oy) * d.OW;
                                        if (d.stride == 1) {
                                            for (int ox = lo; ox <= hi; ++ox)
                                                drow[ox + off] += wv * grow[ox];
                                        } else {
                                            for (int ox = lo; ox <= hi; ++ox)
                                                drow[ox * d.stride + off] += wv * grow[ox];
                                        }
                                    }
                                }
                        }
                    }
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                float* dw = wi->grad.data();
                for (int co = 0; co < d.Co; ++co)
                    for (int ci = 0; ci < d.Ci; ++ci)
                        for (int ky = 0; ky < d.kh; ++ky)
                            for (int kx = 0; kx < d.kw; ++kx) {
                                double acc = 0.0;
                                int lo, hi;
                                ox_range(kx, d.pad, d.stride, d.W, d.OW, lo, hi);
                                int off = kx - d.pad;
                                for (int bb = 0; bb < d.B; ++bb) {
                                    const float* gplane =
                                        g + (static_cast<size_t>(bb) * d.Co + co) * d.OH * d.OW;
                                    const float* iplane = xi->data.data() +
                                        (static_cast<size_t>(bb) * d.Ci + ci) * d.H * d.W;
                                    for (int oy = 0; oy < d.OH; ++oy) {
                                        int iy = oy * d.stride + ky - d.pad;
                                        if (iy < 0 || iy >= d.H) continue;
                                        const float* irow = iplane + static_cast<size_t>(iy) * d.W;
                                        const float* grow = gplane + static_cast<size_t>(oy) * d.OW;
                                        if (d.stride == 1) {
                                            double s = 0.0;
                                            for (int ox = lo; ox <= hi; ++ox)
                                                s += static_cast<double>(grow[ox]) * irow[ox + off];
                                            acc += s;
                                        } else {
                                            double s = 0.0;
                                            for (int ox = lo; ox <= hi; ++ox)
                                                s += static_cast<double>(grow[ox]) *
                                                     irow[ox * d.stride + off];
                                            acc += s;
                                        }
                                    }
                                }
                                dw[((static_cast<size_t>(co) * d.Ci + ci) * d.kh + ky) * d.kw + kx] +=
                                    static_cast<float>(acc);
                            }
            }
            if (bi && bi->requires_grad) {
                bi->ensure_grad();
                for (int co = 0; co < d.Co; ++co) {
                    double acc = 0.0;
                    for (int bb = 0; bb < d.B; ++bb) {
                        const float* gplane =
                            g + (static_cast<size_t>(bb) * d.Co + co) * d.OH * d.OW;
                        for (int i = 0; i < d.OH * d.OW; ++i) acc += gplane[i];
                    }
                    bi->grad[co] += static_cast<float>(acc);
                }
            }
        };
    }
    return r;
}

// ---------------------------------------------------------------------------
// spatial ops
// ---------------------------------------------------------------------------

Tensor upsample_nearest2x(const Tensor& x) {
    if (x.ndim() != 4)
        throw std::invalid_argument("upsample_nearest2x: expected 4-d input, got " +
                                    shape_str(x.shape()));
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int OH = H * 2, OW = W * 2;
    std::vector<float> out(static_cast<size_t>(B) * C * OH * OW);
    const float* px = x.data().data();
    for (int bc = 0; bc < B * C; ++bc) {
        const float* ip = px + static_cast<size_t>(bc) * H * W;
        float* op = out.data() + static_cast<size_t>(bc) * OH * OW;
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                float v = ip[y * W + xx];
                float* o = op + (2 * y) * OW + 2 * xx;
                o[0] = v; o[1] = v; o[OW] = v; o[OW + 1] = v;
            }
    }
    Tensor r = Tensor::from_data({B, C, OH, OW}, std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        record(r, {x}, [ri, xi, B, C, H, W, OH, OW]() {
            xi->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                float* dp = xi->grad.data() + static_cast<size_t>(bc) * H * W;
                const float* gp = ri->grad.data() + static_cast<size_t>(bc) * OH * OW;
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        const float* g = gp + (2 * y) * OW + 2 * xx;
                        dp[y * W + xx] += g[0] + g[1] + g[OW] + g[OW + 1];
                    }
            }
        });
    }
    return r;
}

namespace {

void pool_dims(const char* op, const Tensor& x, int k, int stride, int& OH, int& OW) {
    if (x.ndim() != 4)
        throw std::invalid_argument(std::string(op) + ": expected 4-d input, got " +
                                    shape_str(x.shape()));
    if (k < 1 || stride < 1) throw std::invalid_argument(std::string(op) + ": bad kernel/stride");
    OH = (x.dim(2) - k) / stride + 1;
    OW = (x.dim(3) - k) / stride + 1;
    if (OH <= 0 || OW <= 0)
        throw std::invalid_argument(std::string(op) + ": window larger than input " +
                                    shape_str(x.shape()));
}

}  // namespace

Tensor maxpool2d(const Tensor& x, int k, int stride) {
    int OH, OW;
    pool_dims("maxpool2d", x, k, stride, OH, OW);
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<float> out(static_cast<size_t>(B) * C * OH * OW);
    std::vector<int> arg(out.size());
    const float* px = x.data().data();
    for (int bc = 0; bc < B * C; ++bc) {
        const float* ip = px + static_cast<size_t>(bc) * H * W;
        float* op = out.data() + static_cast<size_t>(bc) * OH * OW;
        int* ap = arg.data() + static_cast<size_t>(bc) * OH * OW;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                int iy0 = oy * stride, ix0 = ox * stride;
                float best = ip[iy0 * W + ix0];
                int besti = iy0 * W + ix0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) {
                        int idx = (iy0 + dy) * W + (ix0 + dx);
                        if (ip[idx] > best) { best = ip[idx]; besti = idx; }
                    }
                op[oy * OW + ox] = best;
                ap[oy * OW + ox] = besti;
            }
    }
    Tensor r = Tensor::from_data({B, C, OH, OW}, std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        int HW = H * W, OHW = OH * OW, planes = B * C;
        record(r, {x}, [ri, xi, arg = std::move(arg), HW, OHW, planes]() {
            xi->ensure_grad();
            for (int bc = 0; bc < planes; ++bc)
                for (int i = 0; i < OHW; ++i)
                    xi->grad[static_cast<size_t>(bc) * HW + arg[static_cast<size_t>(bc) * OHW + i]] +=
                        ri->grad[static_cast<size_t>(bc) * OHW + i];
        });
    }
    return r;
}

Tensor avgpool2d(const Tensor& x, int k, int stride) {
    int OH, OW;
    pool_dims("avgpool2d", x, k, stride, OH, OW);
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<float> out(static_cast<size_t>(B) * C * OH * OW);
    const float* px = x.data().data();
    float inv = 1.0f / (k * k);
    for (int bc = 0; bc < B * C; ++bc) {
        const float* ip = px + static_cast<size_t>(bc) * H * W;
        float* op = out.data() + static_cast<size_t>(bc) * OH * OW;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        acc += ip[(oy * stride + dy) * W + (ox * stride + dx)];
                op[oy * OW + ox] = static_cast<float>(acc * inv);
            }
    }
    Tensor r = Tensor::from_data({B, C, OH, OW}, std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        record(r, {x}, [ri, xi, B, C, H, W, OH, OW, k, stride, inv]() {
            xi->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                float* dp = xi->grad.data() + static_cast<size_t>(bc) * H * W;
                const float* gp = ri->grad.data() + static_cast<size_t>(bc) * OH * OW;
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        float g = gp[oy * OW + ox] * inv;
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                dp[(oy * stride + dy) * W + (ox * stride + dx)] += g;
                    }
            }
        });
    }
    return r;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 4)
        throw std::invalid_argument("global_avg_pool: expected 4-d input, got " +
                                    shape_str(x.shape()));
    int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<float> out(static_cast<size_t>(B) * C);
    const float* px = x.data().data();
    double inv = 1.0 / (static_cast<double>(H) * W);
    for (int bc = 0; bc < B * C; ++bc) {
        const float* ip = px + static_cast<size_t>(bc) * H * W;
        double acc = 0.0;
        for (int i = 0; i < H * W; ++i) acc += ip[i];
        out[bc] = static_cast<float>(acc * inv);
    }
    Tensor r = Tensor::from_data({B, C}, std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        float finv = static_cast<float>(inv);
        record(r, {x}, [ri, xi, B, C, H, W, finv]() {
            xi->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                float g = ri->grad[bc] * finv;
                float* dp = xi->grad.data() + static_cast<size_t>(bc) * H * W;
                for (int i = 0; i < H * W; ++i) dp[i] += g;
            }
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;  // final scalars accumulate in 64-bit
    for (float v : x.data()) acc += v;
    Tensor r = Tensor::from_data({1}, {static_cast<float>(acc)});
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        record(r, {x}, [ri, xi]() {
            xi->ensure_grad();
            float g = ri->grad[0];
            for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
        });
    }
    return r;
}

Tensor mean(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    double inv = 1.0 / static_cast<double>(x.numel());
    Tensor r = Tensor::from_data({1}, {static_cast<float>(acc * inv)});
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        float finv = static_cast<float>(inv);
        record(r, {x}, [ri, xi, finv]() {
            xi->ensure_grad();
            float g = ri->grad[0] * finv;
            for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
        });
    }
    return r;
}

namespace {

// Generic axis reduction: out linear index for each input linear index,
// computed once and reused by the backward pass.
struct AxisReduce {
    std::vector<int> out_shape;       // with keepdims applied
    std::vector<int64_t> index_map;   // input element -> output element
    int64_t out_numel;
};

AxisReduce plan_reduce(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
    int nd = x.ndim();
    std::vector<bool> reduce(nd, false);
    for (int a : axes) {
        if (a < 0 || a >= nd)
            throw std::invalid_argument("reduce: axis " + std::to_string(a) +
                                        " out of range for " + shape_str(x.shape()));
        reduce[a] = true;
    }
    AxisReduce plan;
    for (int i = 0; i < nd; ++i) {
        if (!reduce[i]) plan.out_shape.push_back(x.dim(i));
        else if (keepdims) plan.out_shape.push_back(1);
    }
    if (plan.out_shape.empty()) plan.out_shape.push_back(1);
    plan.out_numel = 1;
    for (int d : plan.out_shape) plan.out_numel *= d;

    std::vector<int64_t> strides(nd, 1);
    for (int i = nd - 2; i >= 0; --i) strides[i] = strides[i + 1] * x.dim(i + 1);
    // output strides over non-reduced dims
    std::vector<int64_t> ostrides(nd, 0);
    int64_t os = 1;
    for (int i = nd - 1; i >= 0; --i) {
        if (!reduce[i]) { ostrides[i] = os; os *= x.dim(i); }
    }
    plan.index_map.resize(static_cast<size_t>(x.numel()));
    for (int64_t idx = 0; idx < x.numel(); ++idx) {
        int64_t rem = idx, o = 0;
        for (int i = 0; i < nd; ++i) {
            int64_t c = rem / strides[i];
            rem %= strides[i];
            o += c * ostrides[i];
        }
        plan.index_map[static_cast<size_t>(idx)] = o;
    }
    return plan;
}

}  // namespace

Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
    AxisReduce plan = plan_reduce(x, axes, keepdims);
    std::vector<double> acc(static_cast<size_t>(plan.out_numel), 0.0);
    const float* px = x.data().data();
    for (int64_t i = 0; i < x.numel(); ++i)
        acc[static_cast<size_t>(plan.index_map[static_cast<size_t>(i)])] += px[i];
    std::vector<float> out(acc.begin(), acc.end());
    Tensor r = Tensor::from_data(plan.out_shape, std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        record(r, {x}, [ri, xi, map = std::move(plan.index_map)]() {
            xi->ensure_grad();
            for (size_t i = 0; i < map.size(); ++i)
                xi->grad[i] += ri->grad[static_cast<size_t>(map[i])];
        });
    }
    return r;
}

Tensor mean(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
    Tensor s = sum(x, axes, keepdims);
    double count = static_cast<double>(x.numel()) / static_cast<double>(s.numel());
    return mul(s, static_cast<float>(1.0 / count));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& ts, int axis) {
    if (ts.empty()) throw std::invalid_argument("concat: no inputs");
    int nd = ts[0].ndim();
    if (axis < 0 || axis >= nd) throw std::invalid_argument("concat: bad axis");
    std::vector<int> out_shape = ts[0].shape();
    int total_axis = 0;
    for (const Tensor& t : ts) {
        if (t.ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < nd; ++i)
            if (i != axis && t.dim(i) != out_shape[i])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(t.shape()) +
                                            " vs " + shape_str(ts[0].shape()));
        total_axis += t.dim(axis);
    }
    out_shape[axis] = total_axis;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int i = axis + 1; i < nd; ++i) inner *= out_shape[i];

    int64_t out_numel = outer * total_axis * inner;
    std::vector<float> out(static_cast<size_t>(out_numel));
    int64_t pos = 0;
    std::vector<int64_t> offsets;
    for (const Tensor& t : ts) {
        offsets.push_back(pos);
        int64_t block = static_cast<int64_t>(t.dim(axis)) * inner;
        const float* p = t.data().data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(p + o * block, p + (o + 1) * block,
                      out.begin() + o * total_axis * inner + pos * inner);
        pos += t.dim(axis);
    }
    Tensor r = Tensor::from_data(out_shape, std::move(out));

    bool rec = false;
    if (g_grad_enabled)
        for (const Tensor& t : ts)
            if (t.requires_grad()) { rec = true; break; }
    if (rec) {
        TensorImpl* ri = r.impl().get();
        auto impl = r.impl();
        impl->requires_grad = true;
        std::vector<TensorImpl*> raw;
        std::vector<int> axdims;
        for (const Tensor& t : ts) {
            impl->parents.push_back(t.impl());
            raw.push_back(t.impl().get());
            axdims.push_back(t.dim(axis));
        }
        impl->backward_fn = [ri, raw, axdims, offsets, outer, inner, total_axis]() {
            for (size_t k = 0; k < raw.size(); ++k) {
                TensorImpl* ti = raw[k];
                if (!ti->requires_grad) continue;
                ti->ensure_grad();
                int64_t block = static_cast<int64_t>(axdims[k]) * inner;
                for (int64_t o = 0; o < outer; ++o) {
                    const float* g = ri->grad.data() + o * total_axis * inner + offsets[k] * inner;
                    float* dst = ti->grad.data() + o * block;
                    for (int64_t i = 0; i < block; ++i) dst[i] += g[i];
                }
            }
        };
    }
    return r;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
    int64_t n = 1;
    for (int d : new_shape) n *= d;
    if (n != x.numel())
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) +
                                    " -> " + shape_str(new_shape));
    std::vector<float> out(x.data().begin(), x.data().end());
    Tensor r = Tensor::from_data(std::move(new_shape), std::move(out));
    if (should_record({&x})) {
        TensorImpl* ri = r.impl().get();
        TensorImpl* xi = x.impl().get();
        record(r, {x}, [ri, xi]() {
            xi->ensure_grad();
            for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += ri->grad[i];
        });
    }
    return r;
}

Tensor detach(const Tensor& x) {
    std::vector<float> copy(x.data().begin(), x.data().end());
    return Tensor::from_data(x.shape(), std::move(copy), false);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    TensorImpl* root = loss.impl().get();
    if (!root->backward_fn) {
        if (root->consumed) throw std::runtime_error("backward: graph already consumed");
        throw std::runtime_error("backward: no recorded graph reaches this tensor");
    }

    // iterative DFS post-order; reversed it is a topological order
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* p = node->parents[next].get();
            ++next;
            if (p->backward_fn && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward_fn();

    for (TensorImpl* node : order) {
        node->backward_fn = nullptr;
        node->parents.clear();
        node->consumed = true;
    }
}

}  // namespace aduw
