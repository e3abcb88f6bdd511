#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "textguard/tensor.hpp"

namespace textguard::numeric {

/// Deterministic splitmix64 stream. Identical seeds yield identical
/// sequences on every platform, which is what makes corpora, splits and
/// initializations reproducible bit-for-bit.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double();

    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). n must be positive.
    std::size_t next_below(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = next_below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

enum class Activation { Sigmoid, Tanh, Relu, Gelu, SoftmaxRow };

Activation activation_from_name(const std::string& name);

double sigmoid(double x);
double gelu(double x);
double gelu_derivative(double x);

/// Standard matrix product with 64-bit accumulation; (m x k) * (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise activation; SoftmaxRow applies per row of a rank-2 tensor.
Tensor activation(Activation kind, const Tensor& x);

Tensor softmax_rows(const Tensor& x);

/// Mean over elements of -[y ln p + (1-y) ln(1-p)], with p clamped to
/// [1e-12, 1-1e-12] so the loss is always finite.
double binary_cross_entropy(const Tensor& p, const Tensor& y);

inline constexpr double kBceClamp = 1e-12;

struct AdamState {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-3;

    static AdamState for_param(const Tensor& param, double lr = 1e-3);
};

/// Bias-corrected Adam update, in place; increments state.t.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

/// Central-difference gradient (f(x+eps e_i) - f(x-eps e_i)) / (2 eps).
/// This is the oracle every hand-written backward pass is checked against.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps = 1e-4);

/// Single central-difference partial derivative along one coordinate.
double finite_diff_partial(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           std::size_t index, double eps = 1e-4);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)). Rank 1 tensors use
/// fan_in = fan_out = length; rank 2 uses (rows, cols).
Tensor xavier_init(const std::vector<std::size_t>& shape, Prng& prng);

/// Relative error |a-b| / max(1, |a|, |b|) used by all gradient checks.
double gradient_rel_error(double a, double b);

}  // namespace textguard::numeric
