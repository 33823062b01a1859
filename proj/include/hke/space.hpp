/*
 * space.hpp — discretized metric-measure spaces with spectral data.
 *
 * A SpectralSpace bundles everything the embedding and energy machinery
 * consumes: quadrature weights μ_p, eigenpairs (λ_i, φ_i) of −Δ with
 * Σ_p μ_p φ_i φ_j = δ_ij, per-sample eigenfunction gradients in an
 * orthonormal tangent frame, and a geodesic distance oracle.
 *
 * Backends:
 *   circle S¹(R)        λ = (k/R)², cos/sin pairs
 *   interval [0, len]   Neumann, λ_k = (kπ/len)²
 *   flat torus          product cosine/sine basis on a periodic grid
 *   round sphere S²     real spherical harmonics, λ_ℓ = ℓ(ℓ+1)
 *   triangle mesh       cotangent stiffness + lumped mass
 *
 * Model-space quadratures are chosen so products of retained eigenfunctions
 * are integrated exactly (trig grids below Nyquist, Gauss–Legendre in cos θ),
 * which keeps orthonormality residuals at roundoff.
 *
 * Spaces are immutable after construction; the geodesic row cache is the only
 * mutable state and is guarded by a mutex, so const use is thread-safe.
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hke/eigensolve.hpp"
#include "hke/mesh.hpp"

namespace hke {

enum class SpaceKind { circle, interval, flat_torus, round_sphere, mesh };

inline const char* to_string(SpaceKind k) {
    switch (k) {
        case SpaceKind::circle: return "circle";
        case SpaceKind::interval: return "interval";
        case SpaceKind::flat_torus: return "flat_torus";
        case SpaceKind::round_sphere: return "round_sphere";
        case SpaceKind::mesh: return "mesh";
    }
    return "?";
}

inline SpaceKind space_kind_from_string(const std::string& s) {
    if (s == "circle") return SpaceKind::circle;
    if (s == "interval") return SpaceKind::interval;
    if (s == "flat_torus") return SpaceKind::flat_torus;
    if (s == "round_sphere") return SpaceKind::round_sphere;
    if (s == "mesh") return SpaceKind::mesh;
    throw std::invalid_argument("unknown space kind: " + s);
}

// per-eigenfunction mode descriptor for closed-form backends
// circle:  a = frequency k, b = 0 cos / 1 sin
// interval: a = frequency k (cos only)
// torus:   a = k, b = m, c = 0 cos / 1 sin
// sphere:  a = ℓ, b = m, c = 0 zonal / 1 cos / 2 sin
struct Mode {
    int a = 0, b = 0, c = 0;
};

struct BallQuery {
    std::vector<int> ids;
    std::vector<double> masses;
    double measure = 0.0;
};

namespace detail {

// orthonormal associated Legendre P̄_ℓ^m(cos θ) (includes the 1/√(4π) factor)
// and its θ-derivative; stable forward recurrences.
inline void sph_pbar(int l, int m, double theta, double& val, double& dval) {
    const double x = std::cos(theta), s = std::sin(theta);
    double pmm = 1.0 / std::sqrt(4.0 * M_PI);
    for (int k = 1; k <= m; ++k)
        pmm *= std::sqrt((2.0 * k + 1.0) / (2.0 * k)) * s;
    if (l == m) {
        val = pmm;
        dval = (s > 1e-300) ? m * (x / s) * pmm : 0.0;
        return;
    }
    double p_prev = pmm;
    double p = std::sqrt(2.0 * m + 3.0) * x * pmm;  // P̄_{m+1}^m
    for (int ll = m + 2; ll <= l; ++ll) {
        const double a = std::sqrt((4.0 * ll * ll - 1.0) / (double(ll) * ll - double(m) * m));
        const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - double(m) * m) /
                                   (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
        const double p_next = a * (x * p - b * p_prev);
        p_prev = p;
        p = p_next;
    }
    val = p;
    // dP̄_ℓ^m/dθ = (ℓ x P̄_ℓ^m − √((2ℓ+1)(ℓ²−m²)/(2ℓ−1)) P̄_{ℓ−1}^m) / sin θ
    const double coef =
        std::sqrt((2.0 * l + 1.0) * (double(l) * l - double(m) * m) / (2.0 * l - 1.0));
    dval = (s > 1e-300) ? (l * x * p - coef * p_prev) / s : 0.0;
}

// Gauss–Legendre nodes/weights on [-1, 1]
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double p1 = 0.0, dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        x[n - 1 - i] = t;  // Newton seeds descend; store ascending
        w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    return a;
}

} // namespace detail

class SpectralSpace {
  public:
    static constexpr int kSphereDegreeCap = 12;  // documented harmonic-table cap

    std::string id;
    SpaceKind kind = SpaceKind::circle;
    int dim = 1;  // intrinsic dimension m

    // model parameters (meaning depends on kind)
    double radius = 1.0;        // circle / sphere
    double length = M_PI;       // interval
    double Lx = 1.0, Ly = 1.0;  // torus
    int nx = 0, ny = 0;         // torus grid / sphere (n_theta, n_phi)

    Eigen::MatrixXd coords;       // P × c parameter coordinates
    Eigen::VectorXd mass;         // P
    Eigen::VectorXd eigenvalues;  // L+1, ascending, λ_0 ≈ 0
    Eigen::MatrixXd phi;          // P × (L+1)
    std::vector<Eigen::MatrixXd> grad;  // per eigenfunction, P × dim
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> frames;  // mesh only, dim × 3
    std::vector<Mode> modes;      // closed-form backends only

    double total_measure = 0.0;
    double diameter_bound = 0.0;

    // mesh-only data
    Eigen::SparseMatrix<double> stiffness;
    bool has_stiffness = false;
    std::vector<int> adj_off;  // CSR edge graph
    std::vector<int> adj_idx;
    std::vector<double> adj_len;

    struct FaceGradient {
        std::array<int, 3> tri;
        double area;
        std::array<double, 3> corner_weight;  // mixed-Voronoi split, sums to area
        Eigen::Matrix3d grad_hat;  // rows: 3D gradients of the three hat functions
    };
    std::vector<FaceGradient> face_grads;  // mesh only

    int n_samples() const { return static_cast<int>(mass.size()); }
    int cutoff() const { return static_cast<int>(eigenvalues.size()) - 1; }  // L
    bool has_closed_form() const { return kind != SpaceKind::mesh; }

    // ----------------------------------------------------------- distance --

    double distance(int p, int q) const {
        check_sample(p);
        check_sample(q);
        if (kind == SpaceKind::mesh) return geodesic_row(p)(q);
        return model_distance(coords.row(p), coords.row(q));
    }

    // full geodesic distance row (meshes: cached Dijkstra; models: closed form)
    Eigen::VectorXd geodesic_distances_from(int src) const {
        check_sample(src);
        if (kind == SpaceKind::mesh) return geodesic_row(src);
        Eigen::VectorXd d(n_samples());
        for (int q = 0; q < n_samples(); ++q)
            d(q) = model_distance(coords.row(src), coords.row(q));
        return d;
    }

    // distance from an arbitrary model-space point to a sample
    double distance_to_coord(const Eigen::VectorXd& c, int q) const {
        require_closed_form("distance_to_coord");
        check_sample(q);
        return model_distance(c.transpose(), coords.row(q));
    }

    double model_point_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        require_closed_form("model_point_distance");
        return model_distance(a.transpose(), b.transpose());
    }

    BallQuery ball_query(int p, double r) const {
        if (r <= 0.0) throw std::invalid_argument("ball_query: radius must be positive");
        check_sample(p);
        BallQuery out;
        if (kind == SpaceKind::mesh) {
            dijkstra_ball(p, r, out);
        } else {
            for (int q = 0; q < n_samples(); ++q)
                if (model_distance(coords.row(p), coords.row(q)) < r) {
                    out.ids.push_back(q);
                    out.masses.push_back(mass(q));
                    out.measure += mass(q);
                }
        }
        return out;
    }

    BallQuery ball_query_coord(const Eigen::VectorXd& c, double r) const {
        require_closed_form("ball_query_coord");
        if (r <= 0.0) throw std::invalid_argument("ball_query_coord: radius must be positive");
        BallQuery out;
        for (int q = 0; q < n_samples(); ++q)
            if (model_distance(c.transpose(), coords.row(q)) < r) {
                out.ids.push_back(q);
                out.masses.push_back(mass(q));
                out.measure += mass(q);
            }
        return out;
    }

    // typical nearest-neighbor distance (median over a deterministic subset)
    double spacing() const {
        std::lock_guard<std::mutex> lock(cache_->mu);
        if (cache_->spacing >= 0.0) return cache_->spacing;
        const int P = n_samples();
        std::vector<double> nn;
        const int stride = std::max(1, P / 64);
        for (int p = 0; p < P; p += stride) {
            double best = std::numeric_limits<double>::infinity();
            if (kind == SpaceKind::mesh) {
                for (int e = adj_off[p]; e < adj_off[p + 1]; ++e)
                    best = std::min(best, adj_len[e]);
            } else {
                for (int q = 0; q < P; ++q) {
                    if (q == p) continue;
                    best = std::min(best, model_distance(coords.row(p), coords.row(q)));
                }
            }
            nn.push_back(best);
        }
        std::sort(nn.begin(), nn.end());
        cache_->spacing = nn[nn.size() / 2];
        return cache_->spacing;
    }

    // ------------------------------------------------ closed-form evaluation

    double eval_phi(int j, const Eigen::VectorXd& c) const {
        require_closed_form("eval_phi");
        check_eigen(j);
        double v;
        eval_impl(j, c, v, nullptr);
        return v;
    }

    Eigen::VectorXd eval_grad(int j, const Eigen::VectorXd& c) const {
        require_closed_form("eval_grad");
        check_eigen(j);
        Eigen::VectorXd g(dim);
        double v;
        eval_impl(j, c, v, &g);
        return g;
    }

    // ---------------------------------------------------- discrete operators

    // Δ_h applied to per-sample values, sign convention Δφ_i = −λ_i φ_i.
    // Closed-form backends project on the retained eigenbasis; meshes apply −M⁻¹S.
    Eigen::VectorXd apply_laplacian(const Eigen::VectorXd& values) const {
        if (values.size() != n_samples())
            throw std::invalid_argument("apply_laplacian: size mismatch");
        if (has_stiffness) {
            Eigen::VectorXd sv = stiffness * values;
            return -(sv.array() / mass.array()).matrix();
        }
        const Eigen::VectorXd coef = phi.transpose() * (mass.asDiagonal() * values);
        return -phi * (eigenvalues.asDiagonal() * coef);
    }

    // largest resolved eigenvalue, used for explicit flow-step bounds
    double lambda_max() const { return eigenvalues(eigenvalues.size() - 1); }

    // first-order discrete gradient of per-sample values, in the tangent frame
    Eigen::MatrixXd discrete_gradient(const Eigen::VectorXd& values) const {
        if (values.size() != n_samples())
            throw std::invalid_argument("discrete_gradient: size mismatch");
        switch (kind) {
            case SpaceKind::circle: return gradient_circle(values);
            case SpaceKind::interval: return gradient_interval(values);
            case SpaceKind::flat_torus: return gradient_torus(values);
            case SpaceKind::round_sphere: return gradient_sphere(values);
            case SpaceKind::mesh: return gradient_mesh(values);
        }
        throw std::logic_error("unreachable");
    }

    // eigenvalue multiplicity clusters: |λ_i − λ_j| ≤ max(1e-8, 1e-6 λ_i)
    std::vector<std::pair<int, int>> clusters() const {
        std::vector<std::pair<int, int>> out;
        const int n = static_cast<int>(eigenvalues.size());
        int begin = 0;
        for (int i = 1; i <= n; ++i) {
            if (i == n || eigenvalues(i) - eigenvalues(i - 1) >
                              std::max(1e-8, 1e-6 * std::abs(eigenvalues(i - 1)))) {
                out.emplace_back(begin, i);
                begin = i;
            }
        }
        return out;
    }

    // cluster containing eigenvalue λ, or throw
    std::pair<int, int> cluster_of(double lambda) const {
        for (const auto& [b, e] : clusters()) {
            const double rep = eigenvalues(b);
            if (std::abs(lambda - rep) <=
                std::max(1e-8, 1e-6 * std::max(std::abs(rep), std::abs(lambda))))
                return {b, e};
        }
        throw std::invalid_argument("cluster_of: " + std::to_string(lambda) +
                                    " is not in the spectrum");
    }

    // --------------------------------------------------------- constructors

    static SpectralSpace build_circle(int P, int L, double R = 1.0);
    static SpectralSpace build_interval(int P, int L, double len = M_PI);
    static SpectralSpace build_flat_torus(int nx, int ny, int L, double Lx = 1.0, double Ly = 1.0);
    static SpectralSpace build_round_sphere(int P, int L);
    static SpectralSpace build_from_mesh(const Mesh& mesh, int L);

    // shared validation (also run after JSON import)
    void finalize_checks() const {
        const int n = static_cast<int>(eigenvalues.size());
        if (eigenvalues(0) > 1e-9 * std::max(1.0, eigenvalues(n - 1)))
            throw std::runtime_error("space: lambda_0 is not numerically zero");
        for (int i = 0; i + 1 < n; ++i)
            if (eigenvalues(i) > eigenvalues(i + 1) + 1e-12 * (1.0 + eigenvalues(n - 1)))
                throw std::runtime_error("space: eigenvalues not nondecreasing");
        const Eigen::MatrixXd G = phi.transpose() * (mass.asDiagonal() * phi);
        const double res = (G - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
        if (res > 1e-6)
            throw std::runtime_error("space: orthonormality residual " + std::to_string(res));
    }

    double eval_phi_raw(int j, const Eigen::VectorXd& c, Eigen::VectorXd* g) const {
        double v;
        eval_impl(j, c, v, g);
        return v;
    }

  private:
    struct Cache {
        std::mutex mu;
        std::unordered_map<int, Eigen::VectorXd> rows;
        double spacing = -1.0;
    };
    mutable std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();

    void check_sample(int p) const {
        if (p < 0 || p >= n_samples())
            throw std::invalid_argument("sample id out of range: " + std::to_string(p));
    }
    void check_eigen(int j) const {
        if (j < 0 || j > cutoff())
            throw std::invalid_argument("eigen index out of range: " + std::to_string(j));
    }
    void require_closed_form(const char* who) const {
        if (!has_closed_form())
            throw std::runtime_error(std::string(who) + ": not available on mesh-backed spaces");
    }

    double model_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
        switch (kind) {
            case SpaceKind::circle: {
                double d = std::abs(detail::wrap_angle(a(0)) - detail::wrap_angle(b(0)));
                d = std::min(d, 2.0 * M_PI - d);
                return radius * d;
            }
            case SpaceKind::interval:
                return std::abs(a(0) - b(0));
            case SpaceKind::flat_torus: {
                double dx = std::abs(a(0) - b(0));
                dx = std::min(dx, Lx - dx);
                double dy = std::abs(a(1) - b(1));
                dy = std::min(dy, Ly - dy);
                return std::hypot(dx, dy);
            }
            case SpaceKind::round_sphere: {
                const auto unit = [](const Eigen::RowVectorXd& s) {
                    return Eigen::Vector3d(std::sin(s(0)) * std::cos(s(1)),
                                           std::sin(s(0)) * std::sin(s(1)), std::cos(s(0)));
                };
                const double dot = std::clamp(unit(a).dot(unit(b)), -1.0, 1.0);
                return radius * std::acos(dot);
            }
            case SpaceKind::mesh: break;
        }
        throw std::logic_error("model_distance on mesh space");
    }

    void eval_impl(int j, const Eigen::VectorXd& c, double& v, Eigen::VectorXd* g) const {
        const Mode m = modes[j];
        switch (kind) {
            case SpaceKind::circle: {
                const double th = c(0);
                if (m.a == 0) {
                    v = 1.0 / std::sqrt(2.0 * M_PI * radius);
                    if (g) (*g)(0) = 0.0;
                    return;
                }
                const double norm = 1.0 / std::sqrt(M_PI * radius);
                if (m.b == 0) {
                    v = std::cos(m.a * th) * norm;
                    if (g) (*g)(0) = -m.a * std::sin(m.a * th) * norm / radius;
                } else {
                    v = std::sin(m.a * th) * norm;
                    if (g) (*g)(0) = m.a * std::cos(m.a * th) * norm / radius;
                }
                return;
            }
            case SpaceKind::interval: {
                const double x = c(0);
                if (m.a == 0) {
                    v = 1.0 / std::sqrt(length);
                    if (g) (*g)(0) = 0.0;
                    return;
                }
                const double w = m.a * M_PI / length;
                const double norm = std::sqrt(2.0 / length);
                v = norm * std::cos(w * x);
                if (g) (*g)(0) = -norm * w * std::sin(w * x);
                return;
            }
            case SpaceKind::flat_torus: {
                if (m.a == 0 && m.b == 0 && m.c == 0) {
                    v = 1.0 / std::sqrt(Lx * Ly);
                    if (g) g->setZero();
                    return;
                }
                const double ang = 2.0 * M_PI * (m.a * c(0) / Lx + m.b * c(1) / Ly);
                const double norm = std::sqrt(2.0 / (Lx * Ly));
                const Eigen::Vector2d wave(2.0 * M_PI * m.a / Lx, 2.0 * M_PI * m.b / Ly);
                if (m.c == 0) {
                    v = norm * std::cos(ang);
                    if (g) *g = -norm * std::sin(ang) * wave;
                } else {
                    v = norm * std::sin(ang);
                    if (g) *g = norm * std::cos(ang) * wave;
                }
                return;
            }
            case SpaceKind::round_sphere: {
                const double th = c(0), ph = c(1);
                if (m.a == 0) {
                    v = 1.0 / std::sqrt(4.0 * M_PI);
                    if (g) g->setZero();
                    return;
                }
                double pb, dpb;
                detail::sph_pbar(m.a, m.b, th, pb, dpb);
                const double s2 = (m.b > 0) ? std::sqrt(2.0) : 1.0;
                double azim = 1.0, dazim = 0.0;
                if (m.c == 2) {
                    azim = std::sin(m.b * ph);
                    dazim = m.b * std::cos(m.b * ph);
                } else if (m.b > 0) {
                    azim = std::cos(m.b * ph);
                    dazim = -m.b * std::sin(m.b * ph);
                }
                v = s2 * pb * azim;
                if (g) {
                    (*g)(0) = s2 * dpb * azim;                 // e_θ component
                    (*g)(1) = s2 * pb * dazim / std::sin(th);  // e_φ component
                }
                return;
            }
            case SpaceKind::mesh: break;
        }
        throw std::logic_error("eval_impl on mesh space");
    }

    // -------------------------------------------------- gradient backends --

    Eigen::MatrixXd gradient_circle(const Eigen::VectorXd& u) const {
        const int P = n_samples();
        Eigen::MatrixXd g(P, 1);
        const double h = 2.0 * M_PI * radius / P;
        for (int p = 0; p < P; ++p)
            g(p, 0) = (u((p + 1) % P) - u((p + P - 1) % P)) / (2.0 * h);
        return g;
    }

    Eigen::MatrixXd gradient_interval(const Eigen::VectorXd& u) const {
        const int P = n_samples();
        Eigen::MatrixXd g(P, 1);
        const double h = length / (P - 1);
        for (int p = 1; p + 1 < P; ++p) g(p, 0) = (u(p + 1) - u(p - 1)) / (2.0 * h);
        g(0, 0) = (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * h);
        g(P - 1, 0) = (3.0 * u(P - 1) - 4.0 * u(P - 2) + u(P - 3)) / (2.0 * h);
        return g;
    }

    Eigen::MatrixXd gradient_torus(const Eigen::VectorXd& u) const {
        Eigen::MatrixXd g(n_samples(), 2);
        const double hx = Lx / nx, hy = Ly / ny;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const int p = j * nx + i;
                const int ip = j * nx + (i + 1) % nx, im = j * nx + (i + nx - 1) % nx;
                const int jp = ((j + 1) % ny) * nx + i, jm = ((j + ny - 1) % ny) * nx + i;
                g(p, 0) = (u(ip) - u(im)) / (2.0 * hx);
                g(p, 1) = (u(jp) - u(jm)) / (2.0 * hy);
            }
        return g;
    }

    Eigen::MatrixXd gradient_sphere(const Eigen::VectorXd& u) const {
        // grid index = i_theta * n_phi + i_phi; θ nodes non-uniform → 3-point stencil
        const int nt = nx, np = ny;
        Eigen::MatrixXd g(n_samples(), 2);
        for (int it = 0; it < nt; ++it) {
            const double th = coords(it * np, 0);
            const int a = std::clamp(it, 1, nt - 2);
            const double t0 = coords((a - 1) * np, 0), t1 = coords(a * np, 0),
                         t2 = coords((a + 1) * np, 0);
            const double d0 = (2 * th - t1 - t2) / ((t0 - t1) * (t0 - t2));
            const double d1 = (2 * th - t0 - t2) / ((t1 - t0) * (t1 - t2));
            const double d2 = (2 * th - t0 - t1) / ((t2 - t0) * (t2 - t1));
            const double hphi = 2.0 * M_PI / np;
            for (int ip = 0; ip < np; ++ip) {
                const int p = it * np + ip;
                g(p, 0) = d0 * u((a - 1) * np + ip) + d1 * u(a * np + ip) + d2 * u((a + 1) * np + ip);
                const int pp = it * np + (ip + 1) % np, pm = it * np + (ip + np - 1) % np;
                g(p, 1) = (u(pp) - u(pm)) / (2.0 * hphi * std::sin(th));
            }
        }
        return g;
    }

    Eigen::MatrixXd gradient_mesh(const Eigen::VectorXd& u) const {
        const int P = n_samples();
        if (face_grads.empty())
            throw std::runtime_error("discrete_gradient: mesh space has no face data (imported cache?)");
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(P, 3);
        Eigen::VectorXd wsum = Eigen::VectorXd::Zero(P);
        for (const auto& f : face_grads) {
            const Eigen::Vector3d gf = u(f.tri[0]) * f.grad_hat.row(0).transpose() +
                                       u(f.tri[1]) * f.grad_hat.row(1).transpose() +
                                       u(f.tri[2]) * f.grad_hat.row(2).transpose();
            for (int i = 0; i < 3; ++i) {
                acc.row(f.tri[i]) += f.area * gf.transpose();
                wsum(f.tri[i]) += f.area;
            }
        }
        Eigen::MatrixXd g(P, dim);
        for (int p = 0; p < P; ++p)
            g.row(p) = (frames[p] * (acc.row(p) / wsum(p)).transpose()).transpose();
        return g;
    }

    // ---------------------------------------------------- mesh geodesics --

    const Eigen::VectorXd& geodesic_row(int src) const {
        std::lock_guard<std::mutex> lock(cache_->mu);
        auto it = cache_->rows.find(src);
        if (it != cache_->rows.end()) return it->second;
        const int P = n_samples();
        Eigen::VectorXd dist =
            Eigen::VectorXd::Constant(P, std::numeric_limits<double>::infinity());
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        dist(src) = 0.0;
        pq.emplace(0.0, src);
        while (!pq.empty()) {
            const auto [d, v] = pq.top();
            pq.pop();
            if (d > dist(v)) continue;
            for (int e = adj_off[v]; e < adj_off[v + 1]; ++e) {
                const double nd = d + adj_len[e];
                if (nd < dist(adj_idx[e])) {
                    dist(adj_idx[e]) = nd;
                    pq.emplace(nd, adj_idx[e]);
                }
            }
        }
        return cache_->rows.emplace(src, std::move(dist)).first->second;
    }

    void dijkstra_ball(int src, double r, BallQuery& out) const {
        {
            std::lock_guard<std::mutex> lock(cache_->mu);
            auto it = cache_->rows.find(src);
            if (it != cache_->rows.end()) {
                for (int q = 0; q < n_samples(); ++q)
                    if (it->second(q) < r) {
                        out.ids.push_back(q);
                        out.masses.push_back(mass(q));
                        out.measure += mass(q);
                    }
                return;
            }
        }
        std::unordered_map<int, double> dist;
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        dist[src] = 0.0;
        pq.emplace(0.0, src);
        while (!pq.empty()) {
            const auto [d, v] = pq.top();
            pq.pop();
            const auto dv = dist.find(v);
            if (dv != dist.end() && d > dv->second) continue;
            for (int e = adj_off[v]; e < adj_off[v + 1]; ++e) {
                const double nd = d + adj_len[e];
                if (nd >= r) continue;
                auto it = dist.find(adj_idx[e]);
                if (it == dist.end() || nd < it->second) {
                    dist[adj_idx[e]] = nd;
                    pq.emplace(nd, adj_idx[e]);
                }
            }
        }
        for (const auto& [q, d] : dist)
            if (d < r) out.ids.push_back(q);
        std::sort(out.ids.begin(), out.ids.end());
        for (int q : out.ids) {
            out.masses.push_back(mass(q));
            out.measure += mass(q);
        }
    }
};

// --------------------------------------------------------- model builders --

inline SpectralSpace SpectralSpace::build_circle(int P, int L, double R) {
    if (P < 16) throw std::invalid_argument("build_circle: need P >= 16");
    if (L < 1) throw std::invalid_argument("build_circle: need L >= 1");
    if (R <= 0) throw std::invalid_argument("build_circle: radius must be positive");
    const int kmax = (L + 1) / 2;
    if (2 * kmax >= P)
        throw std::invalid_argument("build_circle: cutoff exceeds grid Nyquist; increase P");
    SpectralSpace s;
    s.kind = SpaceKind::circle;
    s.dim = 1;
    s.radius = R;
    s.coords.resize(P, 1);
    s.mass = Eigen::VectorXd::Constant(P, 2.0 * M_PI * R / P);
    for (int p = 0; p < P; ++p) s.coords(p, 0) = 2.0 * M_PI * p / P;
    s.total_measure = 2.0 * M_PI * R;
    s.diameter_bound = M_PI * R;
    s.eigenvalues.resize(L + 1);
    s.modes.resize(L + 1);
    s.eigenvalues(0) = 0.0;
    s.modes[0] = {0, 0, 0};
    for (int i = 1; i <= L; ++i) {
        const int k = (i + 1) / 2;
        s.eigenvalues(i) = double(k) * k / (R * R);
        s.modes[i] = {k, (i % 2 == 1) ? 0 : 1, 0};  // odd index cos, even sin
    }
    s.phi.resize(P, L + 1);
    s.grad.assign(L + 1, Eigen::MatrixXd(P, 1));
    Eigen::VectorXd g(1);
    for (int i = 0; i <= L; ++i)
        for (int p = 0; p < P; ++p) {
            s.phi(p, i) = s.eval_phi_raw(i, s.coords.row(p).transpose(), &g);
            s.grad[i](p, 0) = g(0);
        }
    s.id = "circle[P=" + std::to_string(P) + ",L=" + std::to_string(L) + "]";
    return s;
}

inline SpectralSpace SpectralSpace::build_interval(int P, int L, double len) {
    if (P < 16) throw std::invalid_argument("build_interval: need P >= 16");
    if (L < 1) throw std::invalid_argument("build_interval: need L >= 1");
    if (len <= 0) throw std::invalid_argument("build_interval: length must be positive");
    if (L >= P - 1)
        throw std::invalid_argument("build_interval: cutoff exceeds grid Nyquist; increase P");
    SpectralSpace s;
    s.kind = SpaceKind::interval;
    s.dim = 1;
    s.length = len;
    const double h = len / (P - 1);
    s.coords.resize(P, 1);
    s.mass.resize(P);
    for (int p = 0; p < P; ++p) {
        s.coords(p, 0) = p * h;
        s.mass(p) = (p == 0 || p == P - 1) ? 0.5 * h : h;  // even-extension trapezoid
    }
    s.total_measure = len;
    s.diameter_bound = len;
    s.eigenvalues.resize(L + 1);
    s.modes.resize(L + 1);
    for (int i = 0; i <= L; ++i) {
        const double w = i * M_PI / len;
        s.eigenvalues(i) = w * w;
        s.modes[i] = {i, 0, 0};
    }
    s.phi.resize(P, L + 1);
    s.grad.assign(L + 1, Eigen::MatrixXd(P, 1));
    Eigen::VectorXd g(1);
    for (int i = 0; i <= L; ++i)
        for (int p = 0; p < P; ++p) {
            s.phi(p, i) = s.eval_phi_raw(i, s.coords.row(p).transpose(), &g);
            s.grad[i](p, 0) = g(0);
        }
    s.id = "interval[P=" + std::to_string(P) + ",L=" + std::to_string(L) + "]";
    return s;
}

inline SpectralSpace SpectralSpace::build_flat_torus(int nx, int ny, int L, double Lx, double Ly) {
    if (nx < 8 || ny < 8) throw std::invalid_argument("build_flat_torus: grid too small");
    if (Lx <= 0 || Ly <= 0)
        throw std::invalid_argument("build_flat_torus: side lengths must be positive");
    if (L < 1) throw std::invalid_argument("build_flat_torus: need L >= 1");
    struct Rep {
        double lam;
        int k, m;
    };
    std::vector<Rep> reps;
    const int kcap = nx / 2 - 1, mcap = ny / 2 - 1;
    for (int k = 0; k <= kcap; ++k)
        for (int m = -mcap; m <= mcap; ++m) {
            if (k == 0 && m <= 0) continue;
            const double lam =
                4.0 * M_PI * M_PI * (double(k) * k / (Lx * Lx) + double(m) * m / (Ly * Ly));
            reps.push_back({lam, k, m});
        }
    std::sort(reps.begin(), reps.end(), [](const Rep& a, const Rep& b) {
        if (a.lam != b.lam) return a.lam < b.lam;
        if (a.k != b.k) return a.k < b.k;
        return a.m < b.m;
    });
    if (L > 2 * static_cast<int>(reps.size()))
        throw std::invalid_argument("build_flat_torus: cutoff exceeds grid Nyquist; increase grid");

    SpectralSpace s;
    s.kind = SpaceKind::flat_torus;
    s.dim = 2;
    s.Lx = Lx;
    s.Ly = Ly;
    s.nx = nx;
    s.ny = ny;
    const int P = nx * ny;
    s.coords.resize(P, 2);
    s.mass = Eigen::VectorXd::Constant(P, (Lx / nx) * (Ly / ny));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            s.coords(j * nx + i, 0) = i * Lx / nx;
            s.coords(j * nx + i, 1) = j * Ly / ny;
        }
    s.total_measure = Lx * Ly;
    s.diameter_bound = 0.5 * std::hypot(Lx, Ly);
    s.eigenvalues.resize(L + 1);
    s.modes.resize(L + 1);
    s.eigenvalues(0) = 0.0;
    s.modes[0] = {0, 0, 0};
    for (int i = 1; i <= L; ++i) {
        const Rep& r = reps[(i - 1) / 2];
        s.eigenvalues(i) = r.lam;
        s.modes[i] = {r.k, r.m, (i % 2 == 1) ? 0 : 1};
    }
    s.phi.resize(P, L + 1);
    s.grad.assign(L + 1, Eigen::MatrixXd(P, 2));
    Eigen::VectorXd g(2);
    for (int i = 0; i <= L; ++i)
        for (int p = 0; p < P; ++p) {
            s.phi(p, i) = s.eval_phi_raw(i, s.coords.row(p).transpose(), &g);
            s.grad[i].row(p) = g.transpose();
        }
    s.id = "flat_torus[nx=" + std::to_string(nx) + ",ny=" + std::to_string(ny) +
           ",L=" + std::to_string(L) + "]";
    return s;
}

inline SpectralSpace SpectralSpace::build_round_sphere(int P, int L) {
    if (P < 16) throw std::invalid_argument("build_round_sphere: need P >= 16");
    if (L < 1) throw std::invalid_argument("build_round_sphere: need L >= 1");
    int lmax = 0;  // harmonics with degree ≤ ℓ number (ℓ+1)²
    while ((lmax + 1) * (lmax + 1) < L + 1) ++lmax;
    if (lmax > kSphereDegreeCap)
        throw std::invalid_argument("build_round_sphere: cutoff needs harmonics of degree " +
                                    std::to_string(lmax) + ", table capped at degree " +
                                    std::to_string(kSphereDegreeCap));
    const int nt = std::max(lmax + 4, static_cast<int>(std::lround(std::sqrt(P / 2.0))));
    const int np = std::max(2 * lmax + 5, (P + nt - 1) / nt);

    SpectralSpace s;
    s.kind = SpaceKind::round_sphere;
    s.dim = 2;
    s.radius = 1.0;
    s.nx = nt;
    s.ny = np;
    std::vector<double> gx, gw;
    detail::gauss_legendre(nt, gx, gw);
    const int Pn = nt * np;
    s.coords.resize(Pn, 2);
    s.mass.resize(Pn);
    for (int it = 0; it < nt; ++it) {
        // x ascending → θ descending; reverse so θ ascends with the ring index
        const double theta = std::acos(std::clamp(gx[nt - 1 - it], -1.0, 1.0));
        for (int ip = 0; ip < np; ++ip) {
            const int p = it * np + ip;
            s.coords(p, 0) = theta;
            s.coords(p, 1) = 2.0 * M_PI * ip / np;
            s.mass(p) = gw[nt - 1 - it] * (2.0 * M_PI / np);
        }
    }
    s.total_measure = 4.0 * M_PI;
    s.diameter_bound = M_PI;
    s.eigenvalues.resize(L + 1);
    s.modes.resize(L + 1);
    int idx = 0;
    for (int l = 0; idx <= L; ++l)
        for (int m = 0; m <= l && idx <= L; ++m) {
            s.eigenvalues(idx) = double(l) * (l + 1);
            s.modes[idx++] = {l, m, m == 0 ? 0 : 1};
            if (m > 0 && idx <= L) {
                s.eigenvalues(idx) = double(l) * (l + 1);
                s.modes[idx++] = {l, m, 2};
            }
        }
    s.phi.resize(Pn, L + 1);
    s.grad.assign(L + 1, Eigen::MatrixXd(Pn, 2));
    Eigen::VectorXd g(2);
    for (int i = 0; i <= L; ++i)
        for (int p = 0; p < Pn; ++p) {
            s.phi(p, i) = s.eval_phi_raw(i, s.coords.row(p).transpose(), &g);
            s.grad[i].row(p) = g.transpose();
        }
    s.id = "round_sphere[P=" + std::to_string(Pn) + ",L=" + std::to_string(L) + "]";
    return s;
}

inline SpectralSpace SpectralSpace::build_from_mesh(const Mesh& mesh, int L) {
    validate_mesh(mesh);
    const int V = static_cast<int>(mesh.n_vertices());
    if (L + 1 > V) throw std::invalid_argument("build_from_mesh: cutoff exceeds vertex count");

    SpectralSpace s;
    s.kind = SpaceKind::mesh;
    s.dim = 2;
    const int P = V;
    s.coords.resize(P, 3);
    for (int p = 0; p < P; ++p) s.coords.row(p) = mesh.vertices[p].transpose();

    // cotangent stiffness, mixed-Voronoi lumped mass, per-face hat gradients
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd lumped = Eigen::VectorXd::Zero(P);
    Eigen::MatrixXd normal_acc = Eigen::MatrixXd::Zero(P, 3);
    s.face_grads.reserve(mesh.n_triangles());
    for (const auto& t : mesh.triangles) {
        const Eigen::Vector3d e0 = mesh.edge_vector(t[1], t[2]);  // edge opposite vertex 0
        const Eigen::Vector3d e1 = mesh.edge_vector(t[2], t[0]);
        const Eigen::Vector3d e2 = mesh.edge_vector(t[0], t[1]);
        const Eigen::Vector3d n = e2.cross(-e1);  // (p1−p0)×(p2−p0), |n| = 2A
        const double area = 0.5 * n.norm();
        const Eigen::Vector3d nh = n / (2.0 * area);
        const double c[3] = {-e1.dot(e2) / (2.0 * area), -e2.dot(e0) / (2.0 * area),
                             -e0.dot(e1) / (2.0 * area)};
        FaceGradient fg;
        fg.tri = t;
        fg.area = area;
        // mixed-Voronoi corner areas (obtuse corner takes half, its peers a quarter)
        const double l2[3] = {e0.squaredNorm(), e1.squaredNorm(), e2.squaredNorm()};
        int obtuse = -1;
        for (int i = 0; i < 3; ++i)
            if (c[i] < 0.0) obtuse = i;
        if (obtuse < 0) {
            for (int i = 0; i < 3; ++i) {
                const int j = (i + 1) % 3, k = (i + 2) % 3;
                fg.corner_weight[i] = 0.125 * (l2[j] * c[j] + l2[k] * c[k]);
            }
        } else {
            for (int i = 0; i < 3; ++i)
                fg.corner_weight[i] = (i == obtuse) ? 0.5 * area : 0.25 * area;
        }
        for (int i = 0; i < 3; ++i) {
            const int a = t[(i + 1) % 3], b = t[(i + 2) % 3];
            const double w = 0.5 * c[i];
            trip.emplace_back(a, b, -w);
            trip.emplace_back(b, a, -w);
            trip.emplace_back(a, a, w);
            trip.emplace_back(b, b, w);
            lumped(t[i]) += fg.corner_weight[i];
            normal_acc.row(t[i]) += area * nh.transpose();
        }
        fg.grad_hat.row(0) = nh.cross(e0).transpose() / (2.0 * area);
        fg.grad_hat.row(1) = nh.cross(e1).transpose() / (2.0 * area);
        fg.grad_hat.row(2) = nh.cross(e2).transpose() / (2.0 * area);
        s.face_grads.push_back(fg);
    }
    Eigen::SparseMatrix<double> S(P, P);
    S.setFromTriplets(trip.begin(), trip.end());
    s.stiffness = S;
    s.has_stiffness = true;
    s.mass = lumped;
    s.total_measure = lumped.sum();

    // tangent frames from area-weighted vertex normals
    s.frames.resize(P);
    for (int p = 0; p < P; ++p) {
        Eigen::Vector3d n = normal_acc.row(p).transpose();
        if (n.norm() < 1e-14) n = Eigen::Vector3d(0, 0, 1);
        n.normalize();
        const Eigen::Vector3d ref =
            std::abs(n(0)) < 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 1, 0);
        const Eigen::Vector3d e1 = (ref - ref.dot(n) * n).normalized();
        const Eigen::Vector3d e2 = n.cross(e1);
        s.frames[p].resize(2, 3);
        s.frames[p].row(0) = e1.transpose();
        s.frames[p].row(1) = e2.transpose();
    }

    // edge graph (CSR) with minimal-image Euclidean lengths
    {
        std::vector<std::vector<std::pair<int, double>>> adj(P);
        auto add_edge = [&](int a, int b) {
            for (const auto& [w, l] : adj[a])
                if (w == b) return;
            const double len = mesh.edge_vector(a, b).norm();
            adj[a].emplace_back(b, len);
            adj[b].emplace_back(a, len);
        };
        for (const auto& t : mesh.triangles) {
            add_edge(t[0], t[1]);
            add_edge(t[1], t[2]);
            add_edge(t[2], t[0]);
        }
        s.adj_off.assign(P + 1, 0);
        for (int p = 0; p < P; ++p)
            s.adj_off[p + 1] = s.adj_off[p] + static_cast<int>(adj[p].size());
        s.adj_idx.resize(s.adj_off[P]);
        s.adj_len.resize(s.adj_off[P]);
        for (int p = 0; p < P; ++p) {
            std::sort(adj[p].begin(), adj[p].end());
            int e = s.adj_off[p];
            for (const auto& [w, l] : adj[p]) {
                s.adj_idx[e] = w;
                s.adj_len[e] = l;
                ++e;
            }
        }
    }

    EigenPairs pairs = solve_spectrum(S, s.mass, L + 1);
    s.eigenvalues = pairs.values;
    if (s.eigenvalues(0) < 0.0) s.eigenvalues(0) = 0.0;
    s.phi = pairs.vectors;
    // deterministic sign: largest-|entry| coefficient positive
    for (int i = 0; i <= L; ++i) {
        int arg = 0;
        s.phi.col(i).cwiseAbs().maxCoeff(&arg);
        if (s.phi(arg, i) < 0) s.phi.col(i) *= -1.0;
    }

    // per-vertex eigenfunction gradients (area-weighted face average, framed)
    s.grad.assign(L + 1, Eigen::MatrixXd(P, 2));
    for (int i = 0; i <= L; ++i) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(P, 3);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(P);
        for (const auto& f : s.face_grads) {
            const Eigen::Vector3d gf = s.phi(f.tri[0], i) * f.grad_hat.row(0).transpose() +
                                       s.phi(f.tri[1], i) * f.grad_hat.row(1).transpose() +
                                       s.phi(f.tri[2], i) * f.grad_hat.row(2).transpose();
            for (int v = 0; v < 3; ++v) {
                acc.row(f.tri[v]) += f.area * gf.transpose();
                w(f.tri[v]) += f.area;
            }
        }
        for (int p = 0; p < P; ++p)
            s.grad[i].row(p) = (s.frames[p] * (acc.row(p) / w(p)).transpose()).transpose();
    }

    // two-sweep diameter estimate on the edge graph
    {
        int far = 0;
        s.geodesic_distances_from(0).maxCoeff(&far);
        s.diameter_bound = s.geodesic_distances_from(far).maxCoeff();
    }
    s.id = "mesh[V=" + std::to_string(V) + ",L=" + std::to_string(L) + "]";
    return s;
}

} // namespace hke
