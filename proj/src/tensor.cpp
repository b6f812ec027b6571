#include "scaleformer/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "scaleformer/error.hpp"

namespace scaleformer {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data size " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::column(std::vector<double> values) {
    const auto n = values.size();
    return Matrix(n, 1, std::move(values));
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t count) const {
    if (begin + count > rows_) {
        throw ShapeError("row slice out of range");
    }
    Matrix out(count, cols_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_), count * cols_,
                out.data_.begin());
    return out;
}

std::vector<double> Matrix::col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.cols() != bottom.cols()) {
        throw ShapeError("vstack: column mismatch " + std::to_string(top.cols()) + " vs " +
                         std::to_string(bottom.cols()));
    }
    std::vector<double> data = top.data();
    data.insert(data.end(), bottom.data().begin(), bottom.data().end());
    return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

std::string Shape::str() const {
    return "(" + std::to_string(b) + "," + std::to_string(l) + "," + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
        throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

Tensor Tensor::from_matrix(const Matrix& m) { return Tensor(Shape{1, m.rows(), m.cols()}, m.data()); }

Tensor Tensor::stack(std::span<const Matrix> batch) {
    if (batch.empty()) throw ShapeError("stack: empty batch");
    const auto rows = batch.front().rows();
    const auto cols = batch.front().cols();
    std::vector<double> data;
    data.reserve(batch.size() * rows * cols);
    for (const auto& m : batch) {
        if (m.rows() != rows || m.cols() != cols) throw ShapeError("stack: ragged batch");
        data.insert(data.end(), m.data().begin(), m.data().end());
    }
    return Tensor(Shape{batch.size(), rows, cols}, std::move(data));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
}

Matrix Tensor::matrix(std::size_t batch) const {
    if (batch >= shape_.b) throw ShapeError("matrix(): batch index out of range");
    const auto n = shape_.l * shape_.w;
    std::vector<double> data(data_.begin() + static_cast<std::ptrdiff_t>(batch * n),
                             data_.begin() + static_cast<std::ptrdiff_t>((batch + 1) * n));
    return Matrix(shape_.l, shape_.w, std::move(data));
}

}  // namespace scaleformer
