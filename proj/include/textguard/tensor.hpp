#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace textguard::numeric {

/// Dense row-major array of 64-bit reals, rank 1 to 3.
/// Text form: header line "rank d0 [d1 [d2]]", then the values in
/// row-major order; doubles are printed with enough digits to
/// round-trip exactly.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor scalar(double value);

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const;
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // rank-2 convenience
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }

    double& flat(std::size_t i) { return data_[i]; }
    double flat(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double value);
    bool all_finite() const;

    void write_text(std::ostream& out) const;
    static Tensor read_text(std::istream& in);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Elementwise / structural helpers shared by the math and autodiff code.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
void add_into(Tensor& dst, const Tensor& src);

}  // namespace textguard::numeric
