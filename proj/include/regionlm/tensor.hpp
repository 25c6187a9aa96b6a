#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace regionlm {

// Dense row-major tensor of 64-bit floats. Values are immutable by
// convention once an operation returns; all ops are pure functions with a
// fixed accumulation order so results are bit-reproducible.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double value);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int64_t i, int64_t j);
    double at(int64_t i, int64_t j) const;
    double& at(int64_t i, int64_t j, int64_t k);
    double at(int64_t i, int64_t j, int64_t k) const;
    double& at(int64_t i, int64_t j, int64_t k, int64_t l);
    double at(int64_t i, int64_t j, int64_t k, int64_t l) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;
    static std::string shape_str(const std::vector<int64_t>& shape);

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// value + gradient of identical shape; grad may be empty (numel 0) for
// non-differentiable paths.
struct GradPair {
    Tensor value;
    Tensor grad;
};

// ---- elementwise / linear algebra ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// a: [m x k], b: [k x n] -> [m x n]. Fixed i-k-j loop order.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

// grads of y = a @ b given dy
Tensor matmul_backward_a(const Tensor& grad_out, const Tensor& b);
Tensor matmul_backward_b(const Tensor& a, const Tensor& grad_out);

// ---- convolution (cross-correlation semantics) ----

// input: [C x H x W], kernel: [K x C x kh x kw] -> [K x H' x W'] with
// H' = floor((H + 2*pad - kh)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride, int64_t padding);
// bias: [K], added per output channel.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int64_t stride, int64_t padding);

struct Conv2dGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;  // empty if forward had no bias
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, bool has_bias,
                            int64_t stride, int64_t padding, const Tensor& grad_out);

// ---- pointwise nonlinearities ----

// Exact GELU, x * Phi(x). The frozen pointwise nonlinearity for the whole
// project; smooth everywhere, gelu(0) == 0.
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);

// Row-wise softmax over the last dimension of a 2-D tensor.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out);

// ---- gradient checking ----

using ForwardFn = std::function<Tensor(const std::vector<Tensor>&)>;
// Given the same inputs and the gradient of a scalar loss w.r.t. the output,
// return the gradient w.r.t. every input, in order.
using BackwardFn =
    std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor&)>;

// Checks an analytic backward against central finite differences.
// A scalar loss L = sum(output * R) is formed with a seeded random projection
// R; returns max over all input elements of
//   |analytic - central_difference| / max(1, |central_difference|).
// Throws if any intermediate value is non-finite.
double backward_check(const ForwardFn& forward, const BackwardFn& backward,
                      std::vector<Tensor> inputs, double epsilon, uint64_t seed = 7);

}  // namespace regionlm
