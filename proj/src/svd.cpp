#include "laplab/svd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace laplab {

Matrix Matrix::transposed() const {
    Matrix t(cols, rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
}

std::vector<double> singular_values(const Matrix& m, const JacobiOptions& opt) {
    if (m.rows == 0 || m.cols == 0) return {};
    // Work column-major on the orientation with fewer columns.
    const Matrix& src = m;
    const bool wide = m.cols > m.rows;
    const std::size_t n = wide ? m.rows : m.cols;  // columns rotated
    const std::size_t len = wide ? m.cols : m.rows;
    std::vector<std::vector<double>> col(n, std::vector<double>(len));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (wide)
                col[i][j] = src(i, j);
            else
                col[j][i] = src(i, j);
        }

    auto dot = [len](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) s += a[k] * b[k];
        return s;
    };

    for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double a = dot(col[i], col[i]);
                const double b = dot(col[j], col[j]);
                const double c = dot(col[i], col[j]);
                if (a == 0.0 || b == 0.0 || c == 0.0) continue;
                const double r = std::abs(c) / std::sqrt(a * b);
                off = std::max(off, r);
                if (r <= opt.tolerance * 1e-3) continue;
                // Rotation zeroing the (i, j) entry of the 2x2 Gram block.
                const double zeta = (b - a) / (2.0 * c);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                auto& ci = col[i];
                auto& cj = col[j];
                for (std::size_t k = 0; k < len; ++k) {
                    const double x = ci[k], y = cj[k];
                    ci[k] = cs * x - sn * y;
                    cj[k] = sn * x + cs * y;
                }
            }
        if (off <= opt.tolerance) break;
    }

    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i) sv[i] = std::sqrt(dot(col[i], col[i]));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

}  // namespace laplab
