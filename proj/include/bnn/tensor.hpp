#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnn {

/// Dense row-major array of 64-bit floats. The value and gradient carrier
/// for everything in this library. Rank is arbitrary but only rank-1 and
/// rank-2 tensors appear in practice (vectors, matrices, scalars as {1}).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_string(shape_));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const { require_rank(2, "rows"); return shape_[0]; }
    std::size_t cols() const { require_rank(2, "cols"); return shape_[1]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (checked_size(shape) != size())
            throw std::invalid_argument("reshape: size mismatch, " + shape_string(shape_) +
                                        " -> " + shape_string(shape));
        return Tensor(std::move(shape), data_);
    }

    static std::string shape_string(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << ']';
        return os.str();
    }

    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    void require_rank(std::size_t r, const char* what) const {
        if (rank() != r)
            throw std::logic_error(std::string(what) + ": tensor has rank " + std::to_string(rank()));
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace bnn
