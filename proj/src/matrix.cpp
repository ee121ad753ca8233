#include "tan/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "tan/errors.hpp"

namespace tanet {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw InputError("Matrix: buffer of " + std::to_string(data_.size()) + " values does not match " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace tanet
