#include "regionlm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "regionlm/rng.hpp"

namespace regionlm {

namespace {

int64_t product(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + Tensor::shape_str(shape));
        n *= d;
    }
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != static_cast<int64_t>(data_.size())) {
        throw std::invalid_argument("data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

double& Tensor::at(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
}
double Tensor::at(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
}
double& Tensor::at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}
double Tensor::at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}
double& Tensor::at(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
}
double Tensor::at(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

std::string Tensor::shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " x " +
                                    b.shape_str());
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            for (int64_t j = 0; j < n; ++j) {
                out.at(i, j) += av * b.at(p, j);
            }
        }
    }
    return out;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose2d: rank-2 required, got " + a.shape_str());
    Tensor out({a.dim(1), a.dim(0)});
    for (int64_t i = 0; i < a.dim(0); ++i)
        for (int64_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor matmul_backward_a(const Tensor& grad_out, const Tensor& b) {
    return matmul(grad_out, transpose2d(b));
}

Tensor matmul_backward_b(const Tensor& a, const Tensor& grad_out) {
    return matmul(transpose2d(a), grad_out);
}

namespace {

void check_conv_geometry(const Tensor& input, const Tensor& kernel, int64_t stride,
                         int64_t padding) {
    if (input.rank() != 3 || kernel.rank() != 4) {
        throw std::invalid_argument("conv2d: expected input [CxHxW], kernel [KxCxkhxkw], got " +
                                    input.shape_str() + " and " + kernel.shape_str());
    }
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    if (kernel.dim(1) != input.dim(0)) {
        throw std::invalid_argument("conv2d: channel mismatch, input " + input.shape_str() +
                                    " kernel " + kernel.shape_str());
    }
    const int64_t ph = input.dim(1) + 2 * padding;
    const int64_t pw = input.dim(2) + 2 * padding;
    if (kernel.dim(2) > ph || kernel.dim(3) > pw) {
        throw std::invalid_argument("conv2d: kernel " + kernel.shape_str() +
                                    " larger than padded input " + input.shape_str());
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride, int64_t padding) {
    return conv2d(input, kernel, Tensor(), stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int64_t stride,
              int64_t padding) {
    check_conv_geometry(input, kernel, stride, padding);
    const int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int64_t K = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const bool has_bias = bias.numel() > 0;
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != K)) {
        throw std::invalid_argument("conv2d: bias shape " + bias.shape_str() +
                                    " does not match " + std::to_string(K) + " output channels");
    }
    const int64_t oh = (H + 2 * padding - kh) / stride + 1;
    const int64_t ow = (W + 2 * padding - kw) / stride + 1;
    Tensor out({K, oh, ow});
    for (int64_t k = 0; k < K; ++k) {
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                double acc = has_bias ? bias[k] : 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= H) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= W) continue;
                            acc += input.at(c, iy, ix) * kernel.at(k, c, ky, kx);
                        }
                    }
                }
                out.at(k, oy, ox) = acc;
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, bool has_bias,
                            int64_t stride, int64_t padding, const Tensor& grad_out) {
    check_conv_geometry(input, kernel, stride, padding);
    const int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int64_t K = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const int64_t oh = grad_out.dim(1), ow = grad_out.dim(2);

    Conv2dGrads g;
    g.input = Tensor(input.shape());
    g.kernel = Tensor(kernel.shape());
    if (has_bias) g.bias = Tensor({K});

    for (int64_t k = 0; k < K; ++k) {
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                const double go = grad_out.at(k, oy, ox);
                if (has_bias) g.bias[k] += go;
                for (int64_t c = 0; c < C; ++c) {
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= H) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= W) continue;
                            g.input.at(c, iy, ix) += go * kernel.at(k, c, ky, kx);
                            g.kernel.at(k, c, ky, kx) += go * input.at(c, iy, ix);
                        }
                    }
                }
            }
        }
    }
    return g;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        out[i] = x[i] * 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    }
    return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
    check_same_shape(x, grad_out, "gelu_backward");
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double phi = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        out[i] = grad_out[i] * (phi + x[i] * pdf);
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 required, got " + x.shape_str());
    const int64_t n = x.dim(0), d = x.dim(1);
    Tensor out(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        double mx = x.at(i, 0);
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < d; ++j) out.at(i, j) /= sum;
    }
    return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out) {
    check_same_shape(y, grad_out, "softmax_rows_backward");
    const int64_t n = y.dim(0), d = y.dim(1);
    Tensor out(y.shape());
    for (int64_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < d; ++j) dot += y.at(i, j) * grad_out.at(i, j);
        for (int64_t j = 0; j < d; ++j) out.at(i, j) = y.at(i, j) * (grad_out.at(i, j) - dot);
    }
    return out;
}

double backward_check(const ForwardFn& forward, const BackwardFn& backward,
                      std::vector<Tensor> inputs, double epsilon, uint64_t seed) {
    if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
        throw std::invalid_argument("backward_check: epsilon must be in (0, 1e-2]");
    }
    const Tensor out0 = forward(inputs);
    if (!out0.all_finite()) throw std::runtime_error("backward_check: non-finite forward output");

    Lcg rng(seed);
    Tensor projection(out0.shape());
    for (int64_t i = 0; i < projection.numel(); ++i) projection[i] = rng.uniform(-1.0, 1.0);

    auto loss = [&](const std::vector<Tensor>& ins) {
        const Tensor y = forward(ins);
        double acc = 0.0;
        for (int64_t i = 0; i < y.numel(); ++i) acc += y[i] * projection[i];
        if (!std::isfinite(acc)) throw std::runtime_error("backward_check: non-finite loss");
        return acc;
    };

    const std::vector<Tensor> analytic = backward(inputs, projection);
    if (analytic.size() != inputs.size()) {
        throw std::invalid_argument("backward_check: backward returned " +
                                    std::to_string(analytic.size()) + " grads for " +
                                    std::to_string(inputs.size()) + " inputs");
    }

    double max_err = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        if (!analytic[t].same_shape(inputs[t])) {
            throw std::invalid_argument("backward_check: grad shape " + analytic[t].shape_str() +
                                        " != input shape " + inputs[t].shape_str());
        }
        for (int64_t i = 0; i < inputs[t].numel(); ++i) {
            const double orig = inputs[t][i];
            inputs[t][i] = orig + epsilon;
            const double lp = loss(inputs);
            inputs[t][i] = orig - epsilon;
            const double lm = loss(inputs);
            inputs[t][i] = orig;
            const double fd = (lp - lm) / (2.0 * epsilon);
            const double err = std::abs(analytic[t][i] - fd) / std::max(1.0, std::abs(fd));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace regionlm
