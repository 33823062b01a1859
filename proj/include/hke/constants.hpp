/*
 * constants.hpp — dimensional constants of the heat-kernel embedding.
 *
 * The truncated embedding of an N-dimensional space is normalized by
 * c_N^{1/2} t^{(N+2)/4}, where
 *
 *   c_N       = 4 (8π)^{N/2}
 *   ω_N       = π^{N/2} / Γ(N/2 + 1)     (volume of the unit ball in R^N)
 *   c̃_N      = c_N / ω_N
 *
 * With these choices c_N t^{(N+2)/2} g_t → g and
 * c̃_N t μ(B_√t(·)) g_t → g as t → 0 on smooth spaces.
 */
#pragma once

#include <cmath>
#include <stdexcept>

namespace hke {

struct DimensionConstants {
    int N;             // intrinsic dimension
    double c_N;        // 4 (8π)^{N/2}
    double omega_N;    // volume of the unit N-ball
    double tilde_c_N;  // c_N / ω_N

    explicit DimensionConstants(int dim) : N(dim) {
        if (dim < 1)
            throw std::invalid_argument("DimensionConstants: dimension must be >= 1");
        const double pi = M_PI;
        c_N = 4.0 * std::pow(8.0 * pi, 0.5 * dim);
        omega_N = std::pow(pi, 0.5 * dim) / std::tgamma(0.5 * dim + 1.0);
        tilde_c_N = c_N / omega_N;
    }

    // c_N t^{(N+2)/2}, the tensor-level normalization ("A")
    double tensor_scale(double t) const {
        return c_N * std::pow(t, 0.5 * (N + 2));
    }
    // c_N^{1/2} t^{(N+2)/4}, the coordinate-level normalization
    double coordinate_scale(double t) const {
        return std::sqrt(c_N) * std::pow(t, 0.25 * (N + 2));
    }
    // ω_N t^{N/2}, Euclidean ball-volume fallback for under-resolved balls
    double euclidean_ball_volume(double sqrt_t) const {
        return omega_N * std::pow(sqrt_t, N);
    }
};

} // namespace hke
