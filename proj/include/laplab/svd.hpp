#ifndef LAPLAB_SVD_HPP
#define LAPLAB_SVD_HPP

#include <cstddef>
#include <vector>

namespace laplab {

// Row-major dense matrix used by the spectral diagnostics.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    Matrix transposed() const;
};

struct JacobiOptions {
    double tolerance = 1e-10;  // max |<a_i, a_j>| / (|a_i| |a_j|) at convergence
    std::size_t max_sweeps = 100;
};

// Singular values in descending order, min(rows, cols) of them, computed by
// one-sided (Hestenes) Jacobi rotations of the columns.
std::vector<double> singular_values(const Matrix& m, const JacobiOptions& opt = {});

}  // namespace laplab

#endif  // LAPLAB_SVD_HPP
