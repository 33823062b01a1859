/*
 * harmonic.hpp — sphere-valued maps: energy, Euler–Lagrange residual,
 * projected-gradient flow, eigenmaps and the Takahashi equivalence check.
 *
 * A SphereMap stores per-sample unit vectors f(x_p) ∈ S^k(1) ⊂ R^{k+1}.
 * Since the inclusion S^k ⊂ R^{k+1} is isometric, e(f) = Σ_i |∇f_i|² and
 * E(f) = ½ ∫ e(f) dμ. On mesh backends the density is face-lumped so that
 * ½ Σ_p μ_p e(f)(p) = ½ Σ_i f_iᵀ S f_i holds exactly; on model backends the
 * gradients are spectral, which is exact for band-limited maps.
 *
 * Harmonicity: Δ f_i + e(f) f_i = 0 per coordinate. The flow is the explicit
 * projected descent v = f − η M⁻¹S f followed by row renormalization v/|v|,
 * with backtracking on the step size so the energy trace never increases.
 */
#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hke/maps.hpp"
#include "hke/space.hpp"

namespace hke {

class SphereMap {
  public:
    const SpectralSpace* space = nullptr;
    int k = 0;                // target sphere dimension
    Eigen::MatrixXd values;   // P × (k+1), rows unit

    SphereMap(const SpectralSpace& s, int sphere_dim, Eigen::MatrixXd vals)
        : space(&s), k(sphere_dim), values(std::move(vals)) {
        if (values.rows() != s.n_samples() || values.cols() != k + 1)
            throw std::invalid_argument("SphereMap: value matrix must be P x (k+1)");
        for (int p = 0; p < values.rows(); ++p) {
            const double n = values.row(p).norm();
            if (n < 1e-12) throw std::invalid_argument("SphereMap: zero row cannot be normalized");
            values.row(p) /= n;
        }
    }

    double max_unit_defect() const {
        double d = 0.0;
        for (int p = 0; p < values.rows(); ++p)
            d = std::max(d, std::abs(values.row(p).norm() - 1.0));
        return d;
    }
};

struct SphereEnergy {
    double total = 0.0;
    Eigen::VectorXd density;  // e(f)(x_p) = Σ_i |∇f_i(x_p)|²
};

namespace detail {

// face-lumped energy density on meshes: each face splits its Dirichlet
// density over the corners with the same weights as the lumped mass, so the
// mass-weighted sum equals Σ_i f_iᵀ S f_i exactly
inline Eigen::VectorXd mesh_energy_density(const SpectralSpace& X, const Eigen::MatrixXd& f) {
    if (X.face_grads.empty())
        throw std::runtime_error("sphere_energy: mesh space has no face data (imported cache?)");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(X.n_samples());
    for (const auto& fg : X.face_grads) {
        double dir = 0.0;
        for (int c = 0; c < f.cols(); ++c) {
            const Eigen::Vector3d g = f(fg.tri[0], c) * fg.grad_hat.row(0).transpose() +
                                      f(fg.tri[1], c) * fg.grad_hat.row(1).transpose() +
                                      f(fg.tri[2], c) * fg.grad_hat.row(2).transpose();
            dir += g.squaredNorm();
        }
        for (int v = 0; v < 3; ++v) acc(fg.tri[v]) += fg.corner_weight[v] * dir;
    }
    return (acc.array() / X.mass.array()).matrix();
}

// spectral gradients on model backends
inline Eigen::VectorXd model_energy_density(const SpectralSpace& X, const Eigen::MatrixXd& f) {
    const int P = X.n_samples();
    Eigen::VectorXd density = Eigen::VectorXd::Zero(P);
    for (int c = 0; c < f.cols(); ++c) {
        const Eigen::VectorXd coef = X.phi.transpose() * (X.mass.asDiagonal() * f.col(c));
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(P, X.dim);
        for (int i = 1; i <= X.cutoff(); ++i)
            if (std::abs(coef(i)) > 0.0) g += coef(i) * X.grad[i];
        density += g.rowwise().squaredNorm();
    }
    return density;
}

} // namespace detail

inline SphereEnergy sphere_energy(const SphereMap& f) {
    const SpectralSpace& X = *f.space;
    SphereEnergy out;
    out.density = (X.kind == SpaceKind::mesh) ? detail::mesh_energy_density(X, f.values)
                                              : detail::model_energy_density(X, f.values);
    out.total = 0.5 * X.mass.dot(out.density);
    return out;
}

struct ELResidual {
    Eigen::MatrixXd field;  // P × (k+1), Δf_i + e(f) f_i
    double norm = 0.0;      // (Σ_p μ_p |r_p|²)^{1/2}
};

inline ELResidual el_residual(const SphereMap& f) {
    const SpectralSpace& X = *f.space;
    const SphereEnergy e = sphere_energy(f);
    ELResidual out;
    out.field.resize(f.values.rows(), f.values.cols());
    for (int c = 0; c < f.values.cols(); ++c)
        out.field.col(c) = X.apply_laplacian(f.values.col(c)) +
                           e.density.cwiseProduct(f.values.col(c));
    out.norm = std::sqrt(X.mass.dot(out.field.rowwise().squaredNorm()));
    return out;
}

struct FlowTraceRow {
    int step = 0;
    double energy = 0.0;
    double residual = 0.0;
    double eta = 0.0;
};

struct FlowResult {
    SphereMap final_map;
    std::vector<FlowTraceRow> trace;
    bool converged = false;
    bool diverged = false;  // step size underflowed
    int steps = 0;
};

inline FlowResult harmonic_flow(const SphereMap& f0, double eta, int max_steps, double tol) {
    if (eta <= 0.0) throw std::invalid_argument("harmonic_flow: eta must be positive");
    if (tol <= 0.0) throw std::invalid_argument("harmonic_flow: tol must be positive");
    const SpectralSpace& X = *f0.space;
    const double eta0 = eta;
    FlowResult out{f0, {}, false, false, 0};
    double energy = sphere_energy(out.final_map).total;
    double residual = el_residual(out.final_map).norm;
    out.trace.push_back({0, energy, residual, eta});
    if (residual < tol) {
        out.converged = true;
        return out;
    }
    for (int step = 1; step <= max_steps; ++step) {
        // descent direction M⁻¹S f = −Δ_h f per coordinate
        Eigen::MatrixXd dir(out.final_map.values.rows(), out.final_map.values.cols());
        for (int c = 0; c < dir.cols(); ++c)
            dir.col(c) = -X.apply_laplacian(out.final_map.values.col(c));
        // backtracking: halve η until the energy does not increase
        while (true) {
            Eigen::MatrixXd v = out.final_map.values - eta * dir;
            bool valid = true;
            for (int p = 0; p < v.rows() && valid; ++p) {
                const double n = v.row(p).norm();
                if (n < 1e-12) valid = false;
                else v.row(p) /= n;
            }
            double new_energy = kInf;
            if (valid) {
                SphereMap cand(X, f0.k, v);
                new_energy = sphere_energy(cand).total;
                if (new_energy <= energy + 1e-14 * (1.0 + std::abs(energy))) {
                    out.final_map = std::move(cand);
                    energy = new_energy;
                    break;
                }
            }
            eta *= 0.5;
            if (eta < 1e-14 * eta0) {
                out.diverged = true;
                out.steps = step;
                return out;
            }
        }
        residual = el_residual(out.final_map).norm;
        out.trace.push_back({step, energy, residual, eta});
        out.steps = step;
        if (residual < tol) {
            out.converged = true;
            return out;
        }
    }
    return out;
}

// default explicit step 0.9/λ_L from the largest computed eigenvalue
inline double default_flow_step(const SpectralSpace& X) { return 0.9 / X.lambda_max(); }

struct EigenmapResult {
    std::optional<SphereMap> map;
    double scale = 0.0;               // c with mean Σ (cφ_i)² = 1
    double constancy_deviation = 0.0; // max_p |Σ (cφ_i)² − 1|
    bool ok = false;
    double lambda = 0.0;
    std::vector<int> indices;
};

// candidate eigenmap from k+1 orthonormal eigenfunctions of one cluster;
// fails (flagged) when Σ (cφ_i)² is not constant within the threshold
inline EigenmapResult eigenmap(const SpectralSpace& X, double lambda, int count,
                               double constancy_threshold = 0.05) {
    const auto [b, e] = X.cluster_of(lambda);
    if (e - b < count)
        throw std::invalid_argument("eigenmap: cluster has " + std::to_string(e - b) +
                                    " functions, need " + std::to_string(count));
    EigenmapResult out;
    out.lambda = X.eigenvalues(b);
    for (int i = 0; i < count; ++i) out.indices.push_back(b + i);
    const int P = X.n_samples();
    Eigen::MatrixXd vals(P, count);
    for (int i = 0; i < count; ++i) vals.col(i) = X.phi.col(b + i);
    const Eigen::VectorXd sq = vals.rowwise().squaredNorm();
    const double mean = X.mass.dot(sq) / X.total_measure;
    out.scale = 1.0 / std::sqrt(mean);
    out.constancy_deviation = ((out.scale * out.scale) * sq.array() - 1.0).abs().maxCoeff();
    out.ok = out.constancy_deviation <= constancy_threshold;
    if (out.ok) out.map.emplace(X, count - 1, out.scale * vals);
    return out;
}

// ------------------------------------------------------------- Takahashi --

struct TakahashiConfig {
    // empty = per-target default: {0.04, 0.02, 0.01} for circle targets,
    // {0.16, 0.08, 0.04} for sphere targets (harmonic tables cap the degree,
    // and the t-linear distortion term vanishes on 1- and 2-dimensional
    // targets, so moderate t loses nothing)
    std::vector<double> t_schedule;
    double truncation_delta = 1e-6;
    double tol_eigen = 1e-6;     // relative ‖Δf + n f‖_μ / ‖f‖_μ
    double tol_isometry = 0.05;  // max-sample |A-normalized f*g − g_X|_HS
    double tol_density = 0.05;   // max-sample |e(f)/n − 1|
};

struct TakahashiReport {
    int n = 0;                       // essential dimension of the source
    double fitted_lambda = 0.0;      // Rayleigh quotient Σ⟨−Δf_i, f_i⟩ / Σ‖f_i‖²
    double eigen_residual_fit = 0.0; // relative residual at the fitted eigenvalue
    double eigen_residual_n = 0.0;   // relative residual at λ = n
    double isometry_defect = 0.0;
    double density_defect = 0.0;     // max |e(f)/n − 1|
    bool is_eigenmap = false;
    bool eigenvalue_matches_dim = false;
    bool isometric = false;
    bool density_matches = false;
    bool pass = false;
    std::vector<std::string> violated;
    // converse direction: when the eigenmap clauses hold, the isometry defect
    // is the numeric witness of the forward implication
    bool converse_checked = false;
    double converse_isometry_defect = 0.0;
    TakahashiConfig config;
};

namespace detail {

// target model space matching S^k(1): exact spectral data for the pull-back
inline SpectralSpace takahashi_target(int k) {
    if (k == 1) return SpectralSpace::build_circle(512, 200);
    if (k == 2) {
        const int cap = SpectralSpace::kSphereDegreeCap;
        return SpectralSpace::build_round_sphere(512, (cap + 1) * (cap + 1) - 1);
    }
    throw std::invalid_argument("takahashi_check: isometry route supports k = 1 and k = 2 targets");
}

// parameter coordinates of unit vectors on S^1 / S^2
inline Eigen::MatrixXd sphere_coords(const Eigen::MatrixXd& values) {
    const int P = static_cast<int>(values.rows());
    if (values.cols() == 2) {
        Eigen::MatrixXd c(P, 1);
        for (int p = 0; p < P; ++p) c(p, 0) = wrap_angle(std::atan2(values(p, 1), values(p, 0)));
        return c;
    }
    Eigen::MatrixXd c(P, 2);
    for (int p = 0; p < P; ++p) {
        c(p, 0) = std::acos(std::clamp(values(p, 2), -1.0, 1.0));
        c(p, 1) = wrap_angle(std::atan2(values(p, 1), values(p, 0)));
    }
    return c;
}

} // namespace detail

inline TakahashiReport takahashi_check(const SphereMap& f, const TakahashiConfig& cfg = {}) {
    const SpectralSpace& X = *f.space;
    TakahashiReport rep;
    rep.config = cfg;
    rep.n = X.dim;

    // (i) eigen-equation residuals, measured on the resolved spectral band:
    // the residual Δf_i + λ f_i is projected onto span{φ_0..φ_L} before taking
    // the μ-norm. On model backends Δ_h is already that projection composed
    // with the symbol, so this only filters the f-part; on meshes it removes
    // the vertex-stencil noise of the raw cotan residual, leaving the
    // convergent spectral content.
    Eigen::MatrixXd lap(f.values.rows(), f.values.cols());
    for (int c = 0; c < f.values.cols(); ++c) lap.col(c) = X.apply_laplacian(f.values.col(c));
    double num = 0.0, den = 0.0;
    for (int c = 0; c < f.values.cols(); ++c) {
        num += -f.values.col(c).dot(X.mass.asDiagonal() * lap.col(c));
        den += f.values.col(c).dot(X.mass.asDiagonal() * f.values.col(c));
    }
    rep.fitted_lambda = num / den;
    auto rel_residual = [&](double lambda) {
        double r2 = 0.0;
        for (int c = 0; c < f.values.cols(); ++c) {
            const Eigen::VectorXd r = lap.col(c) + lambda * f.values.col(c);
            const Eigen::VectorXd coef = X.phi.transpose() * (X.mass.asDiagonal() * r);
            r2 += coef.squaredNorm();
        }
        return std::sqrt(r2 / den);
    };
    rep.eigen_residual_fit = rel_residual(rep.fitted_lambda);
    rep.eigen_residual_n = rel_residual(static_cast<double>(rep.n));
    rep.is_eigenmap = rep.eigen_residual_fit <= std::max(cfg.tol_eigen, 1e-12);
    rep.eigenvalue_matches_dim =
        std::abs(rep.fitted_lambda - rep.n) <= std::max(cfg.tol_eigen, 1e-12) * rep.n &&
        rep.eigen_residual_n <= std::max(cfg.tol_eigen, 1e-12);

    // (ii) isometry via the pull-back extrapolation at the smallest scheduled t
    std::vector<double> schedule = cfg.t_schedule;
    if (schedule.empty())
        schedule = (f.k == 1) ? std::vector<double>{0.04, 0.02, 0.01}
                              : std::vector<double>{0.16, 0.08, 0.04};
    rep.config.t_schedule = schedule;
    const double t_min = schedule.back();
    const SpectralSpace target = detail::takahashi_target(f.k);
    const PointMap fm = PointMap::from_coords(X, target, detail::sphere_coords(f.values));
    int l = target.cutoff();
    try {
        l = choose_truncation(target, t_min, cfg.truncation_delta).l;
    } catch (const std::runtime_error&) {
        // harmonic table capped: use everything available (bias is far below
        // the isometry tolerance at the default schedules)
    }
    rep.isometry_defect = isometry_defect(fm, t_min, l);
    rep.isometric = rep.isometry_defect <= cfg.tol_isometry;

    // (iii) energy density ≡ n
    const SphereEnergy e = sphere_energy(f);
    rep.density_defect = (e.density.array() / rep.n - 1.0).abs().maxCoeff();
    rep.density_matches = rep.density_defect <= cfg.tol_density;

    rep.pass = rep.is_eigenmap && rep.eigenvalue_matches_dim && rep.isometric && rep.density_matches;
    if (!rep.is_eigenmap) rep.violated.push_back("eigenmap");
    if (!rep.eigenvalue_matches_dim) rep.violated.push_back("eigenvalue");
    if (!rep.isometric) rep.violated.push_back("isometry");
    if (!rep.density_matches) rep.violated.push_back("density");

    if (rep.is_eigenmap && rep.eigenvalue_matches_dim) {
        rep.converse_checked = true;
        rep.converse_isometry_defect = rep.isometry_defect;
    }
    return rep;
}

// ------------------------------------------------------------------- IO --

inline std::string flow_trace_csv(const std::vector<FlowTraceRow>& trace) {
    std::ostringstream os;
    os.precision(17);
    os << "step,energy,residual,eta\n";
    for (const auto& r : trace)
        os << r.step << "," << r.energy << "," << r.residual << "," << r.eta << "\n";
    return os.str();
}

inline nlohmann::ordered_json sphere_map_to_json(const SphereMap& f) {
    nlohmann::ordered_json j;
    j["source_id"] = f.space->id;
    j["k"] = f.k;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(f.values.rows()) * f.values.cols());
    for (int p = 0; p < f.values.rows(); ++p)
        for (int c = 0; c < f.values.cols(); ++c) v.push_back(f.values(p, c));
    j["values"] = v;
    return j;
}

inline nlohmann::ordered_json takahashi_report_to_json(const TakahashiReport& r) {
    nlohmann::ordered_json j;
    j["n"] = r.n;
    j["fitted_lambda"] = r.fitted_lambda;
    j["eigen_residual_fit"] = r.eigen_residual_fit;
    j["eigen_residual_n"] = r.eigen_residual_n;
    j["isometry_defect"] = r.isometry_defect;
    j["density_defect"] = r.density_defect;
    j["clauses"] = {{"eigenmap", r.is_eigenmap},
                    {"eigenvalue", r.eigenvalue_matches_dim},
                    {"isometry", r.isometric},
                    {"density", r.density_matches}};
    j["violated"] = r.violated;
    j["verdict"] = r.pass ? "PASS" : "FAIL";
    j["converse_checked"] = r.converse_checked;
    j["converse_isometry_defect"] = r.converse_isometry_defect;
    j["tolerances"] = {{"eigen", r.config.tol_eigen},
                       {"isometry", r.config.tol_isometry},
                       {"density", r.config.tol_density}};
    j["t_schedule"] = r.config.t_schedule;
    return j;
}

} // namespace hke
