/*
 * tensor.hpp — symmetric 2-tensor fields on a sampled space.
 *
 * A SymTensorField stores one symmetric m×m matrix per sample, expressed in
 * that sample's orthonormal tangent frame. It carries g_t, pull-backs
 * f*g_{Y,t} and their differences to the reference metric g_X (which is the
 * identity matrix in each frame, |g_X| = √m).
 *
 * Two pointwise norms:
 *   |T|_HS  — Frobenius norm
 *   |T|_B   — best bound as a bilinear form, i.e. the spectral norm
 * with |T|_B ≤ |T|_HS ≤ √m |T|_B for symmetric T.
 */
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace hke {

struct SymTensorField {
    int dim = 0;                          // m
    std::string space_id;                 // carrier space
    std::vector<Eigen::MatrixXd> values;  // one m×m symmetric matrix per sample

    SymTensorField() = default;
    SymTensorField(int m, std::size_t samples, std::string carrier = {})
        : dim(m), space_id(std::move(carrier)),
          values(samples, Eigen::MatrixXd::Zero(m, m)) {}

    std::size_t size() const { return values.size(); }

    // enforced on ingestion of externally produced matrices
    void symmetrize() {
        for (auto& v : values) v = 0.5 * (v + v.transpose()).eval();
    }
};

inline double hs_norm(const Eigen::MatrixXd& T) { return T.norm(); }

// spectral norm of a symmetric matrix (largest |eigenvalue|)
inline double bound_norm(const Eigen::MatrixXd& T) {
    if (T.rows() == 1) return std::abs(T(0, 0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

struct TensorNorms {
    Eigen::VectorXd hs;     // |T|_HS per sample
    Eigen::VectorXd bound;  // |T|_B per sample
};

inline TensorNorms tensor_norms(const SymTensorField& field) {
    const std::size_t P = field.size();
    TensorNorms out{Eigen::VectorXd(P), Eigen::VectorXd(P)};
    const double root_m = std::sqrt(static_cast<double>(field.dim));
    for (std::size_t p = 0; p < P; ++p) {
        const Eigen::MatrixXd& T = field.values[p];
        if ((T - T.transpose()).norm() > 1e-12 * (1.0 + T.norm()))
            throw std::invalid_argument("tensor_norms: field is not symmetric at sample " +
                                        std::to_string(p));
        const double hs = hs_norm(T);
        const double b = bound_norm(T);
        // |T|_B ≤ |T|_HS ≤ √m |T|_B, up to roundoff
        const double slack = 1e-12 * (1.0 + hs);
        if (b > hs + slack || hs > root_m * b + slack)
            throw std::runtime_error("tensor_norms: norm inequality violated (roundoff beyond tolerance)");
        out.hs(p) = hs;
        out.bound(p) = b;
    }
    return out;
}

} // namespace hke
