#pragma once

// Test-only oracles and helpers. Everything here is independent of the
// implementation paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fedpgp/matrix.hpp"

namespace testkit {

// Singular values by one-sided Jacobi (Hestenes) rotations; descending.
inline std::vector<double> singular_values(const fedpgp::Matrix& a) {
    fedpgp::Matrix w = a.rows() >= a.cols() ? a : fedpgp::transpose(a);
    const std::size_t n = w.cols();

    const auto col_dot = [&](std::size_t p, std::size_t q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) acc += w(i, p) * w(i, q);
        return acc;
    };

    for (int sweep = 0; sweep < 100; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                const double apq = col_dot(p, q);
                if (std::abs(apq) <= 1e-30 + 1e-15 * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < w.rows(); ++i) {
                    const double wip = w(i, p);
                    const double wiq = w(i, q);
                    w(i, p) = c * wip - s * wiq;
                    w(i, q) = s * wip + c * wiq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sv(n);
    for (std::size_t p = 0; p < n; ++p) sv[p] = std::sqrt(col_dot(p, p));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

// Largest entrywise deviation, relative to the numeric gradient's scale.
inline double max_rel_error(const fedpgp::Matrix& analytic, const fedpgp::Matrix& numeric) {
    double scale = 0.0;
    for (double v : numeric.data()) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, std::abs(analytic.data()[i] - numeric.data()[i]) / scale);
    }
    return worst;
}

inline double max_rel_error(const fedpgp::Vector& analytic, const fedpgp::Vector& numeric) {
    double scale = 1e-12;
    for (double v : numeric) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

inline fedpgp::Matrix random_matrix(std::size_t rows, std::size_t cols, fedpgp::Rng& rng,
                                    double stddev = 1.0) {
    return fedpgp::Matrix::gaussian(rows, cols, rng, stddev);
}

inline fedpgp::Vector random_unit(std::size_t n, fedpgp::Rng& rng) {
    fedpgp::Vector v(n);
    for (double& x : v) x = rng.gaussian();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace testkit
