#include "textguard/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace textguard::numeric {

namespace {

std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 3) {
        throw std::invalid_argument("tensor rank must be 1, 2 or 3");
    }
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_size(shape_) != data_.size()) {
        throw std::invalid_argument("tensor value count does not match shape");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw std::out_of_range("tensor axis out of range");
    return shape_[i];
}

double Tensor::at(std::size_t i) const {
    if (i >= data_.size()) throw std::out_of_range("tensor index out of range");
    return data_[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    if (rank() != 2 || i >= shape_[0] || j >= shape_[1]) {
        throw std::out_of_range("tensor index out of range");
    }
    return data_[i * shape_[1] + j];
}

void Tensor::fill(double value) { data_.assign(data_.size(), value); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::write_text(std::ostream& out) const {
    out << rank();
    for (std::size_t d : shape_) out << ' ' << d;
    out << '\n';
    // %.17g round-trips any double exactly
    char buf[64];
    std::size_t row_len = rank() == 1 ? shape_[0] : shape_[rank() - 1];
    if (row_len == 0) row_len = 1;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", data_[i]);
        out << buf;
        out << (((i + 1) % row_len == 0) ? '\n' : ' ');
    }
    if (!data_.empty() && data_.size() % row_len != 0) out << '\n';
}

Tensor Tensor::read_text(std::istream& in) {
    std::size_t rank = 0;
    if (!(in >> rank)) throw std::runtime_error("tensor text: missing rank");
    if (rank < 1 || rank > 3) throw std::runtime_error("tensor text: bad rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (!(in >> shape[i])) throw std::runtime_error("tensor text: missing dimension");
    }
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> values[i])) throw std::runtime_error("tensor text: missing value");
    }
    return Tensor(std::move(shape), std::move(values));
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) += b.flat(i);
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) -= b.flat(i);
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) *= b.flat(i);
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) *= s;
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

void add_into(Tensor& dst, const Tensor& src) {
    if (!dst.same_shape(src)) throw std::invalid_argument("add_into: shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst.flat(i) += src.flat(i);
}

}  // namespace textguard::numeric
