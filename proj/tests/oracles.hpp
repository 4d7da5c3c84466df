#ifndef LAPLAB_TESTS_ORACLES_HPP
#define LAPLAB_TESTS_ORACLES_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "laplab/svd.hpp"

namespace laplab::testing {

// Independent route: square roots of the Gram-matrix eigenvalues, computed
// by Eigen's self-adjoint solver in long double.
inline std::vector<double> gram_oracle(const Matrix& m) {
    using Mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    Mat a(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) a(i, j) = m(i, j);
    const Mat gram = m.rows <= m.cols ? Mat(a * a.transpose()) : Mat(a.transpose() * a);
    Eigen::SelfAdjointEigenSolver<Mat> es(gram);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        out.push_back(static_cast<double>(std::sqrt(std::max(0.0L, es.eigenvalues()(i)))));
    std::sort(out.rbegin(), out.rend());
    return out;
}

}  // namespace laplab::testing

#endif  // LAPLAB_TESTS_ORACLES_HPP
