#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace scaleformer {

// Row-major real matrix; rows are time steps, columns are variables.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Matrix column(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    // Rows [begin, begin + count).
    Matrix slice_rows(std::size_t begin, std::size_t count) const;
    std::vector<double> col(std::size_t c) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Vertical concatenation; column counts must agree.
Matrix vstack(const Matrix& top, const Matrix& bottom);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Rank-3 shape (batch, length, width). Lower ranks use leading ones.
struct Shape {
    std::size_t b = 1;
    std::size_t l = 1;
    std::size_t w = 1;

    std::size_t size() const { return b * l * w; }
    std::size_t operator[](int axis) const { return axis == 0 ? b : axis == 1 ? l : w; }
    std::size_t& operator[](int axis) { return axis == 0 ? b : axis == 1 ? l : w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1}, v); }
    // A single matrix as a batch of one.
    static Tensor from_matrix(const Matrix& m);
    // Stacks equally shaped matrices along the batch axis.
    static Tensor stack(std::span<const Matrix> batch);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t b, std::size_t l, std::size_t w) {
        return data_[(b * shape_.l + l) * shape_.w + w];
    }
    double operator()(std::size_t b, std::size_t l, std::size_t w) const {
        return data_[(b * shape_.l + l) * shape_.w + w];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double item() const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix matrix(std::size_t batch = 0) const;
    bool operator==(const Tensor&) const = default;

private:
    Shape shape_{0, 0, 0};
    std::vector<double> data_;
};

}  // namespace scaleformer
