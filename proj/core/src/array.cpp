#include "corelation/array.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace corelation {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Array::Array(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
    init_cols();
}

Array::Array(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != product(shape_)) {
        throw NumericError("array data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string());
    }
    init_cols();
}

Array Array::matrix(std::size_t rows, std::size_t cols, double fill) {
    return Array({rows, cols}, fill);
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Array({rows, cols}, std::move(data));
}

Array Array::column(std::vector<double> data) {
    const std::size_t n = data.size();
    return Array({n, 1}, std::move(data));
}

Array Array::scalar(double value) { return Array({1, 1}, std::vector<double>{value}); }

void Array::init_cols() { cols_ = shape_.empty() ? 1 : shape_.back(); }

std::size_t Array::rows() const {
    if (shape_.size() <= 1) return 1;
    return cols_ == 0 ? 0 : data_.size() / cols_;
}

std::size_t Array::cols() const { return cols_; }

double Array::item() const {
    if (data_.size() != 1) throw NumericError("item() on array of shape " + shape_string());
    return data_[0];
}

bool Array::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Array::shape_string() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) out << 'x';
        out << shape_[i];
    }
    out << ']';
    return out.str();
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (!a.same_shape(b)) {
        throw NumericError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                           b.shape_string());
    }
}

}  // namespace corelation
