#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace corelation {

/// Raised for shape mismatches and non-finite values inside the numeric core.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major float64 array.
///
/// Arrays of rank <= 2 are viewed as matrices: a rank-0 array is 1x1 and a
/// rank-1 array of n elements is a 1xn row. Higher ranks fold every leading
/// dimension into the row count.
class Array {
public:
    Array() = default;
    explicit Array(std::vector<std::size_t> shape, double fill = 0.0);
    Array(std::vector<std::size_t> shape, std::vector<double> data);

    static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Array column(std::vector<double> data);
    static Array scalar(double value);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool same_shape(const Array& other) const { return rows() == other.rows() && cols() == other.cols(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& values() const { return data_; }

    double item() const;
    bool all_finite() const;
    void fill(double value);
    std::string shape_string() const;

    friend bool operator==(const Array& a, const Array& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void init_cols();

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::size_t cols_ = 1;
};

/// Throws NumericError naming both shapes unless `a` and `b` have equal matrix views.
void require_same_shape(const Array& a, const Array& b, const char* op);

}  // namespace corelation
