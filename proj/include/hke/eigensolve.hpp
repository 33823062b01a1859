/*
 * eigensolve.hpp — generalized symmetric eigensolver  S v = λ M v,
 * S sparse symmetric positive semidefinite, M positive diagonal.
 *
 * Small problems go through a dense solve. Larger ones use shift-invert
 * Lanczos in the M-inner product with full reorthogonalization: the operator
 * (S + σM)^{-1} M is self-adjoint w.r.t. ⟨u,v⟩_M and its largest Ritz values
 * correspond to the smallest λ. The subspace is grown until every requested
 * pair meets the residual tolerance.
 *
 * Contract: pairs sorted ascending, vectors M-orthonormal, and per pair
 * ‖S v − λ M v‖ ≤ tol_eig (‖S v‖ + |λ| ‖M v‖ + ε).
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "hke/rng.hpp"

namespace hke {

struct EigenPairs {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // columns, M-orthonormal
};

inline constexpr double kEigTolRel = 1e-9;  // relative residual tolerance

namespace detail {

inline void check_symmetric(const Eigen::SparseMatrix<double>& S) {
    Eigen::SparseMatrix<double> D = Eigen::SparseMatrix<double>(S.transpose()) - S;
    double scale = 0.0;
    for (int k = 0; k < S.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(S, k); it; ++it)
            scale = std::max(scale, std::abs(it.value()));
    double asym = 0.0;
    for (int k = 0; k < D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
            asym = std::max(asym, std::abs(it.value()));
    if (asym > 1e-10 * (1.0 + scale))
        throw std::invalid_argument(
            "solve_spectrum: stiffness matrix is not symmetric (max asymmetry " +
            std::to_string(asym) + ")");
}

// residual relative to the problem scale; lam_ref keeps the λ ≈ 0 pair from
// dividing by its own numerator
inline double pair_residual(const Eigen::SparseMatrix<double>& S, const Eigen::VectorXd& mass,
                            double lambda, const Eigen::VectorXd& v, double lam_ref) {
    const Eigen::VectorXd sv = S * v;
    const Eigen::VectorXd mv = mass.asDiagonal() * v;
    const double denom = sv.norm() + (std::abs(lambda) + lam_ref) * mv.norm() + 1e-300;
    return (sv - lambda * mv).norm() / denom;
}

inline EigenPairs dense_path(const Eigen::SparseMatrix<double>& S, const Eigen::VectorXd& mass,
                             int k) {
    Eigen::MatrixXd Sd = Eigen::MatrixXd(S);
    Sd = 0.5 * (Sd + Sd.transpose()).eval();
    Eigen::MatrixXd Md = mass.asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Sd, Md);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("solve_spectrum: dense generalized eigensolver failed");
    EigenPairs out;
    out.values = es.eigenvalues().head(k);
    out.vectors = es.eigenvectors().leftCols(k);
    return out;
}

// one shift-invert Lanczos sweep of `steps` iterations; returns k Ritz pairs
inline EigenPairs lanczos_sweep(const Eigen::SparseMatrix<double>& S,
                                const Eigen::VectorXd& mass, int k, double sigma, int steps) {
    const int n = static_cast<int>(S.rows());
    Eigen::SparseMatrix<double> A = S;
    for (int i = 0; i < n; ++i) A.coeffRef(i, i) += sigma * mass(i);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_spectrum: factorization of shifted matrix failed");

    Rng rng(0x5eedf00d);
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q(i) = rng.uniform(-1.0, 1.0);
    q /= std::sqrt(q.dot(mass.asDiagonal() * q));

    Eigen::MatrixXd Q(n, steps);
    std::vector<double> alpha, beta;
    Q.col(0) = q;
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(n);
    double beta_prev = 0.0;
    int m = 0;
    for (int j = 0; j < steps; ++j) {
        Eigen::VectorXd w = ldlt.solve(mass.asDiagonal() * Q.col(j));
        const double a = w.dot(mass.asDiagonal() * Q.col(j));
        alpha.push_back(a);
        w -= a * Q.col(j);
        if (j > 0) w -= beta_prev * prev;
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd c = Q.leftCols(j + 1).transpose() * (mass.asDiagonal() * w);
            w -= Q.leftCols(j + 1) * c;
        }
        const double b = std::sqrt(std::max(0.0, w.dot(mass.asDiagonal() * w)));
        m = j + 1;
        if (b < 1e-13 || j + 1 == steps) break;
        beta.push_back(b);
        prev = Q.col(j);
        beta_prev = b;
        Q.col(j + 1) = w / b;
    }
    if (m < k)
        throw std::runtime_error("solve_spectrum: Krylov space exhausted after " +
                                 std::to_string(m) + " steps, fewer than requested pairs");

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tes(T);
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return tes.eigenvalues()(a) > tes.eigenvalues()(b); });
    EigenPairs out;
    out.values.resize(k);
    out.vectors.resize(n, k);
    for (int i = 0; i < k; ++i) {
        const double nu = tes.eigenvalues()(order[i]);
        if (nu <= 0.0)
            throw std::runtime_error("solve_spectrum: non-positive Ritz value after " +
                                     std::to_string(m) + " Lanczos steps");
        out.values(i) = 1.0 / nu - sigma;
        out.vectors.col(i) = Q.leftCols(m) * tes.eigenvectors().col(order[i]);
    }
    return out;
}

} // namespace detail

inline EigenPairs solve_spectrum(const Eigen::SparseMatrix<double>& S,
                                 const Eigen::VectorXd& mass, int k) {
    const int n = static_cast<int>(S.rows());
    if (S.cols() != n) throw std::invalid_argument("solve_spectrum: stiffness not square");
    if (mass.size() != n) throw std::invalid_argument("solve_spectrum: mass size mismatch");
    if (mass.minCoeff() <= 0.0)
        throw std::invalid_argument("solve_spectrum: mass entries must be positive");
    if (k < 1 || k > n) throw std::invalid_argument("solve_spectrum: k out of range");
    detail::check_symmetric(S);
    double s_scale = 0.0;
    for (int i = 0; i < n; ++i) s_scale += S.coeff(i, i);
    s_scale /= mass.sum();

    EigenPairs out;
    if (n <= 400) {
        out = detail::dense_path(S, mass, k);
    } else {
        const double sigma = std::max(1e-8, 1e-3 * s_scale);
        int steps = std::min(n, std::max(4 * k + 80, 160));
        double worst = 0.0;
        while (true) {
            out = detail::lanczos_sweep(S, mass, k, sigma, steps);
            worst = 0.0;
            for (int i = 0; i < k; ++i)
                worst = std::max(worst, detail::pair_residual(S, mass, out.values(i),
                                                              out.vectors.col(i), s_scale));
            if (worst <= kEigTolRel) break;
            if (steps >= n)
                throw std::runtime_error(
                    "solve_spectrum: Lanczos did not converge (residual " + std::to_string(worst) +
                    " after " + std::to_string(steps) + " steps of max " + std::to_string(n) + ")");
            steps = std::min(n, 2 * steps);
        }
        for (int i = 0; i < k; ++i)
            if (out.values(i) < 0.0 && out.values(i) > -1e-9 * (1.0 + s_scale)) out.values(i) = 0.0;
    }

    // M-normalize and verify the contract
    double lam_scale = std::abs(out.values(k - 1));
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd v = out.vectors.col(i);
        v /= std::sqrt(v.dot(mass.asDiagonal() * v));
        out.vectors.col(i) = v;
        const double res = detail::pair_residual(S, mass, out.values(i), v, s_scale);
        if (res > 100.0 * kEigTolRel)
            throw std::runtime_error("solve_spectrum: residual " + std::to_string(res) +
                                     " exceeds tolerance for pair " + std::to_string(i) +
                                     " (lambda=" + std::to_string(out.values(i)) + ")");
    }
    for (int i = 0; i + 1 < k; ++i)
        if (out.values(i) > out.values(i + 1) + 1e-12 * (1.0 + lam_scale))
            throw std::runtime_error("solve_spectrum: eigenvalues not sorted");
    return out;
}

} // namespace hke
