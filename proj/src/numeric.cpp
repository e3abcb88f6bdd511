#include "textguard/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace textguard::numeric {

std::uint64_t Prng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Prng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Prng::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::size_t Prng::next_below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    return static_cast<std::size_t>(next_u64() % n);
}

Activation activation_from_name(const std::string& name) {
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "gelu") return Activation::Gelu;
    if (name == "softmax_row") return Activation::SoftmaxRow;
    throw std::invalid_argument("unknown activation: " + name);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: rank-2 tensors required");
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + ")");
    }
    Tensor out({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("softmax_row: rank-2 tensor required");
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = x(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(i, j) = std::exp(x(i, j) - mx);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

Tensor activation(Activation kind, const Tensor& x) {
    if (kind == Activation::SoftmaxRow) return softmax_rows(x);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = out.flat(i);
        switch (kind) {
            case Activation::Sigmoid: out.flat(i) = sigmoid(v); break;
            case Activation::Tanh: out.flat(i) = std::tanh(v); break;
            case Activation::Relu: out.flat(i) = v > 0.0 ? v : 0.0; break;
            case Activation::Gelu: out.flat(i) = gelu(v); break;
            case Activation::SoftmaxRow: break;
        }
    }
    return out;
}

double binary_cross_entropy(const Tensor& p, const Tensor& y) {
    if (!p.same_shape(y)) throw std::invalid_argument("binary_cross_entropy: shape mismatch");
    if (p.size() == 0) throw std::invalid_argument("binary_cross_entropy: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = std::clamp(p.flat(i), kBceClamp, 1.0 - kBceClamp);
        double yi = y.flat(i);
        total += -(yi * std::log(pi) + (1.0 - yi) * std::log(1.0 - pi));
    }
    return total / static_cast<double>(p.size());
}

AdamState AdamState::for_param(const Tensor& param, double lr) {
    AdamState s;
    s.m = Tensor::zeros(param.shape());
    s.v = Tensor::zeros(param.shape());
    s.lr = lr;
    return s;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
    if (!param.same_shape(grad) || !param.same_shape(state.m)) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    state.t += 1;
    double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        double g = grad.flat(i);
        state.m.flat(i) = state.beta1 * state.m.flat(i) + (1.0 - state.beta1) * g;
        state.v.flat(i) = state.beta2 * state.v.flat(i) + (1.0 - state.beta2) * g * g;
        double mhat = state.m.flat(i) / b1t;
        double vhat = state.v.flat(i) / b2t;
        param.flat(i) -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = probe.flat(i);
        probe.flat(i) = orig + eps;
        double hi = f(probe);
        probe.flat(i) = orig - eps;
        double lo = f(probe);
        probe.flat(i) = orig;
        if (!std::isfinite(hi) || !std::isfinite(lo)) {
            throw std::runtime_error("finite_diff_grad: non-finite function value");
        }
        grad.flat(i) = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

double finite_diff_partial(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           std::size_t index, double eps) {
    Tensor probe = x;
    double orig = probe.flat(index);
    probe.flat(index) = orig + eps;
    double hi = f(probe);
    probe.flat(index) = orig - eps;
    double lo = f(probe);
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
        throw std::runtime_error("finite_diff_partial: non-finite function value");
    }
    return (hi - lo) / (2.0 * eps);
}

Tensor xavier_init(const std::vector<std::size_t>& shape, Prng& prng) {
    if (shape.empty() || shape.size() > 2) throw std::invalid_argument("xavier_init: rank must be 1 or 2");
    std::size_t fan_in = shape[0];
    std::size_t fan_out = shape.size() == 2 ? shape[1] : shape[0];
    if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("xavier_init: zero fan");
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) = prng.uniform(-limit, limit);
    return out;
}

double gradient_rel_error(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

}  // namespace textguard::numeric
