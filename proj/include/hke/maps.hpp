/*
 * maps.hpp — maps between spectral spaces and their energies.
 *
 * A PointMap f : X → Y is either
 *   analytic — a closed-form map on model spaces carrying a Jacobian,
 *   vertex   — a sample → target-sample assignment,
 *   coords   — per-sample target parameter coordinates (model target).
 *
 * Energies follow the spectral route: for each retained target eigenfunction
 * φ_i the composition φ_i ∘ f is differentiated on the source (chain rule for
 * analytic maps, discrete gradients otherwise), and
 *
 *   e_Y^λ(f)      = Σ_{i ∈ E_λ} |∇(φ_i ∘ f)|²
 *   e_{Y,t}(f)    = Σ_i e^{−2λ_i t} |∇(φ_i ∘ f)|²
 *   f*g_{Y,t}     = Σ_i e^{−2λ_i t} d(φ_i∘f) ⊗ d(φ_i∘f)
 *   E_{Y,t}(f)    = ½ ∫ e_{Y,t}(f) dμ
 *
 * with the per-sample identities ⟨f*g_{Y,t}, g_X⟩ = e_{Y,t}(f) and
 * |f*g_{Y,t}|_HS ≤ e_{Y,t}(f) checked on construction.
 */
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hke/constants.hpp"
#include "hke/embed.hpp"
#include "hke/space.hpp"
#include "hke/tensor.hpp"

namespace hke {

enum class MapKind { analytic, vertex, coords };

inline const char* to_string(MapKind k) {
    switch (k) {
        case MapKind::analytic: return "analytic";
        case MapKind::vertex: return "vertex";
        case MapKind::coords: return "coords";
    }
    return "?";
}

namespace detail {

inline double wrap_signed(double d, double period) {
    d = std::fmod(d, period);
    if (d > 0.5 * period) d -= period;
    if (d < -0.5 * period) d += period;
    return d;
}

} // namespace detail

class PointMap {
  public:
    const SpectralSpace* source = nullptr;
    const SpectralSpace* target = nullptr;
    MapKind kind = MapKind::analytic;

    // analytic maps
    std::string name;          // identity | circle_degree | constant
    int degree = 1;            // circle_degree
    Eigen::VectorXd fixed;     // constant target coords

    std::vector<int> assignment;   // vertex
    Eigen::MatrixXd point_coords;  // coords: P × target coord dim

    static PointMap identity(const SpectralSpace& s, const SpectralSpace& t) {
        require_same_model(s, t);
        PointMap f;
        f.source = &s;
        f.target = &t;
        f.kind = MapKind::analytic;
        f.name = "identity";
        f.check_jacobian();
        return f;
    }

    // θ ↦ k·θ on circles
    static PointMap circle_degree(const SpectralSpace& s, const SpectralSpace& t, int k) {
        if (s.kind != SpaceKind::circle || t.kind != SpaceKind::circle)
            throw std::invalid_argument("circle_degree: endpoints must be circles");
        if (k == 0) throw std::invalid_argument("circle_degree: degree must be nonzero");
        PointMap f;
        f.source = &s;
        f.target = &t;
        f.kind = MapKind::analytic;
        f.name = "circle_degree";
        f.degree = k;
        f.check_jacobian();
        return f;
    }

    static PointMap constant(const SpectralSpace& s, const SpectralSpace& t,
                             const Eigen::VectorXd& target_point) {
        if (!t.has_closed_form())
            throw std::invalid_argument("constant: target must be a model space");
        if (target_point.size() != t.coords.cols())
            throw std::invalid_argument("constant: target point dimension mismatch");
        PointMap f;
        f.source = &s;
        f.target = &t;
        f.kind = MapKind::analytic;
        f.name = "constant";
        f.fixed = target_point;
        return f;
    }

    static PointMap vertex(const SpectralSpace& s, const SpectralSpace& t,
                           std::vector<int> assign) {
        if (static_cast<int>(assign.size()) != s.n_samples())
            throw std::invalid_argument("vertex map: assignment size mismatch");
        for (int q : assign)
            if (q < 0 || q >= t.n_samples())
                throw std::invalid_argument("vertex map: assignment indexes invalid target sample");
        PointMap f;
        f.source = &s;
        f.target = &t;
        f.kind = MapKind::vertex;
        f.assignment = std::move(assign);
        return f;
    }

    static PointMap from_coords(const SpectralSpace& s, const SpectralSpace& t,
                                Eigen::MatrixXd coords) {
        if (!t.has_closed_form())
            throw std::invalid_argument("coords map: target must be a model space");
        if (coords.rows() != s.n_samples() || coords.cols() != t.coords.cols())
            throw std::invalid_argument("coords map: coordinate matrix has wrong shape");
        PointMap f;
        f.source = &s;
        f.target = &t;
        f.kind = MapKind::coords;
        f.point_coords = std::move(coords);
        return f;
    }

    std::string describe() const {
        switch (kind) {
            case MapKind::analytic:
                return name == "circle_degree" ? name + "(k=" + std::to_string(degree) + ")" : name;
            case MapKind::vertex: return "vertex";
            case MapKind::coords: return "coords";
        }
        return "?";
    }

    // image of a sample in target parameter coordinates (vertex maps report
    // the assigned sample's coordinates)
    Eigen::VectorXd image_coords(int p) const {
        switch (kind) {
            case MapKind::analytic: return map_point(source->coords.row(p).transpose());
            case MapKind::vertex: return target->coords.row(assignment[p]).transpose();
            case MapKind::coords: return point_coords.row(p).transpose();
        }
        throw std::logic_error("unreachable");
    }

    // closed-form evaluation at an arbitrary source coordinate (analytic only)
    Eigen::VectorXd map_point(const Eigen::VectorXd& c) const {
        if (kind != MapKind::analytic)
            throw std::runtime_error("map_point: only analytic maps evaluate off-sample");
        if (name == "identity") return c;
        if (name == "circle_degree") {
            Eigen::VectorXd out(1);
            out(0) = detail::wrap_angle(degree * c(0));
            return out;
        }
        if (name == "constant") return fixed;
        throw std::logic_error("unknown analytic map " + name);
    }

    // Jacobian in orthonormal frames, target.dim × source.dim
    Eigen::MatrixXd jacobian(int p) const {
        if (kind != MapKind::analytic)
            throw std::runtime_error("jacobian: only analytic maps carry one");
        if (name == "constant") return Eigen::MatrixXd::Zero(target->dim, source->dim);
        if (name == "identity") return Eigen::MatrixXd::Identity(target->dim, source->dim);
        if (name == "circle_degree") {
            Eigen::MatrixXd J(1, 1);
            J(0, 0) = degree * target->radius / source->radius;
            return J;
        }
        throw std::logic_error("unknown analytic map " + name);
    }

    // d_Y(f(x_p), f(x_q)) through the target's distance oracle
    double image_distance(int p, int q) const {
        if (kind == MapKind::vertex) return target->distance(assignment[p], assignment[q]);
        return target->model_point_distance(image_coords(p), image_coords(q));
    }

    // μ_Y(B_r(f(x_p)))
    double image_ball_measure(int p, double r) const {
        if (kind == MapKind::vertex) return target->ball_query(assignment[p], r).measure;
        return target->ball_query_coord(image_coords(p), r).measure;
    }

  private:
    static void require_same_model(const SpectralSpace& s, const SpectralSpace& t) {
        if (!t.has_closed_form())
            throw std::invalid_argument("identity: target must be a model space");
        if (s.kind != t.kind)
            throw std::invalid_argument("identity: endpoints must share the model kind");
        const bool same = (s.kind == SpaceKind::circle && s.radius == t.radius) ||
                          (s.kind == SpaceKind::interval && s.length == t.length) ||
                          (s.kind == SpaceKind::flat_torus && s.Lx == t.Lx && s.Ly == t.Ly) ||
                          (s.kind == SpaceKind::round_sphere);
        if (!same) throw std::invalid_argument("identity: endpoint parameters differ");
    }

    // frame-space finite-difference consistency of the Jacobian, O(h²),
    // on 32 probe samples
    void check_jacobian() const {
        const int P = source->n_samples();
        const int stride = std::max(1, P / 32);
        const double h = 1e-5;
        for (int p = 0; p < P; p += stride) {
            const Eigen::VectorXd c = source->coords.row(p).transpose();
            const Eigen::MatrixXd J = jacobian(p);
            for (int d = 0; d < c.size(); ++d) {
                if (source->kind == SpaceKind::round_sphere && d == 0 &&
                    (c(0) < 0.1 || c(0) > M_PI - 0.1))
                    continue;  // polar caps: frame scaling degenerates
                Eigen::VectorXd cp = c, cm = c;
                cp(d) += h;
                cm(d) -= h;
                const Eigen::VectorXd fp = map_point(cp), fm = map_point(cm);
                const Eigen::VectorXd df = frame_delta(*target, map_point(c), fp, fm);
                const Eigen::VectorXd expect =
                    J * frame_dir(*source, c, d) * (2.0 * h * frame_scale(*source, c, d));
                if ((df - expect).norm() > 1e-6 * (1.0 + expect.norm()))
                    throw std::runtime_error("analytic map '" + name +
                                             "': Jacobian inconsistent with finite differences");
            }
        }
    }

    // coordinate direction d expressed in the orthonormal frame
    static Eigen::VectorXd frame_dir(const SpectralSpace& s, const Eigen::VectorXd&, int d) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(s.dim);
        e(d) = 1.0;
        return e;
    }
    // metric scale of coordinate d at c (arc length per unit coordinate)
    static double frame_scale(const SpectralSpace& s, const Eigen::VectorXd& c, int d) {
        switch (s.kind) {
            case SpaceKind::circle: return s.radius;
            case SpaceKind::interval: return 1.0;
            case SpaceKind::flat_torus: return 1.0;
            case SpaceKind::round_sphere: return d == 0 ? 1.0 : std::sin(c(0));
            case SpaceKind::mesh: break;
        }
        throw std::logic_error("frame_scale on mesh");
    }
    // frame displacement between two nearby target points (central difference)
    static Eigen::VectorXd frame_delta(const SpectralSpace& t, const Eigen::VectorXd& at,
                                       const Eigen::VectorXd& fp, const Eigen::VectorXd& fm) {
        Eigen::VectorXd out(t.dim);
        switch (t.kind) {
            case SpaceKind::circle:
                out(0) = t.radius * detail::wrap_signed(fp(0) - fm(0), 2.0 * M_PI);
                return out;
            case SpaceKind::interval:
                out(0) = fp(0) - fm(0);
                return out;
            case SpaceKind::flat_torus:
                out(0) = detail::wrap_signed(fp(0) - fm(0), t.Lx);
                out(1) = detail::wrap_signed(fp(1) - fm(1), t.Ly);
                return out;
            case SpaceKind::round_sphere:
                out(0) = fp(0) - fm(0);
                out(1) = std::sin(at(0)) * detail::wrap_signed(fp(1) - fm(1), 2.0 * M_PI);
                return out;
            case SpaceKind::mesh: break;
        }
        throw std::logic_error("frame_delta on mesh");
    }
};

struct ComposedEigenfunction {
    Eigen::VectorXd values;    // φ_j(f(x_p))
    Eigen::MatrixXd gradients; // ∇(φ_j ∘ f)(x_p), P × source.dim
};

inline ComposedEigenfunction compose_eigenfunction(const PointMap& f, int j) {
    const SpectralSpace& X = *f.source;
    const SpectralSpace& Y = *f.target;
    if (j < 0 || j > Y.cutoff())
        throw std::invalid_argument("compose_eigenfunction: eigen index out of range");
    const int P = X.n_samples();
    ComposedEigenfunction out;
    out.values.resize(P);
    if (f.kind == MapKind::vertex) {
        for (int p = 0; p < P; ++p) out.values(p) = Y.phi(f.assignment[p], j);
        out.gradients = X.discrete_gradient(out.values);
        return out;
    }
    for (int p = 0; p < P; ++p) out.values(p) = Y.eval_phi(j, f.image_coords(p));
    if (f.kind == MapKind::coords) {
        out.gradients = X.discrete_gradient(out.values);
        return out;
    }
    out.gradients.resize(P, X.dim);
    for (int p = 0; p < P; ++p) {
        const Eigen::VectorXd gy = Y.eval_grad(j, f.image_coords(p));
        out.gradients.row(p) = (f.jacobian(p).transpose() * gy).transpose();
    }
    return out;
}

// e_Y^λ(f) = Σ_{i ∈ E_{Y,λ}} |∇(φ_i ∘ f)|², invariant under re-mixing of the
// cluster basis
inline Eigen::VectorXd lambda_energy_density(const PointMap& f, double lambda) {
    const auto [b, e] = f.target->cluster_of(lambda);
    Eigen::VectorXd density = Eigen::VectorXd::Zero(f.source->n_samples());
    for (int i = b; i < e; ++i) {
        const ComposedEigenfunction c = compose_eigenfunction(f, i);
        density += c.gradients.rowwise().squaredNorm();
    }
    return density;
}

struct EnergyReport {
    double total = 0.0;
    Eigen::VectorXd density;
    std::string normalization = "none";
    int l = 0;
    double t = 0.0;
    std::string map_desc, source_id, target_id;
};

struct TEnergy {
    EnergyReport report;
    SymTensorField pullback;  // f*g_{Y,t}
};

inline TEnergy t_energy(const PointMap& f, double t, int l) {
    if (t <= 0.0) throw std::invalid_argument("t_energy: t must be positive");
    const SpectralSpace& X = *f.source;
    const SpectralSpace& Y = *f.target;
    if (l < 1 || l > Y.cutoff()) throw std::invalid_argument("t_energy: l out of range");
    const int P = X.n_samples();
    TEnergy out;
    out.pullback = SymTensorField(X.dim, P, X.id);
    out.report.density = Eigen::VectorXd::Zero(P);
    for (int i = 1; i <= l; ++i) {
        const double w = heat_weight(2.0 * Y.eigenvalues(i), t);
        if (w == 0.0) continue;
        const ComposedEigenfunction c = compose_eigenfunction(f, i);
        out.report.density += w * c.gradients.rowwise().squaredNorm();
        for (int p = 0; p < P; ++p) {
            const Eigen::VectorXd g = c.gradients.row(p).transpose();
            out.pullback.values[p].noalias() += w * g * g.transpose();
        }
    }
    // per-sample trace identity and density bound
    for (int p = 0; p < P; ++p) {
        const double tr = out.pullback.values[p].trace();
        const double scale = 1.0 + std::abs(out.report.density(p));
        if (std::abs(tr - out.report.density(p)) > 1e-10 * scale)
            throw std::runtime_error("t_energy: trace identity violated at sample " +
                                     std::to_string(p));
        if (out.pullback.values[p].norm() > out.report.density(p) + 1e-10 * scale)
            throw std::runtime_error("t_energy: density bound violated at sample " +
                                     std::to_string(p));
    }
    out.report.total = 0.5 * X.mass.dot(out.report.density);
    out.report.t = t;
    out.report.l = l;
    out.report.map_desc = f.describe();
    out.report.source_id = X.id;
    out.report.target_id = Y.id;
    return out;
}

struct NormalizedEnergyEntry {
    double t = 0.0;
    int l = 0;
    double raw = 0.0;       // E_{Y,t}(f)
    double a_value = 0.0;   // c_N t^{(N+2)/2} E_{Y,t}(f)
    double b_value = 0.0;   // t ∫ μ_Y(B_√t(f(x))) e_{Y,t}(f) dμ
    bool under_resolved = false;
};

struct NormalizedEnergy {
    std::vector<NormalizedEnergyEntry> entries;
    double extrapolated = 0.0;  // t → 0 limit of the A-normalized values
    bool bounded_on_schedule = false;
    std::string map_desc, source_id, target_id;
};

namespace detail {

// Aitken Δ² when three values are available (errors decay fast in t),
// linear-in-t Richardson for two, identity for one
inline double extrapolate_schedule(const std::vector<double>& t, const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0) throw std::invalid_argument("extrapolate_schedule: empty");
    if (n == 1) return v[0];
    if (n == 2) return v[1] + (v[1] - v[0]) * t[1] / (t[0] - t[1]);
    const double d1 = v[n - 2] - v[n - 3], d2 = v[n - 1] - v[n - 2];
    const double denom = d2 - d1;
    if (std::abs(denom) < 1e-12 * (std::abs(v[n - 1]) + 1.0)) return v[n - 1];
    const double aitken = v[n - 1] - d2 * d2 / denom;
    // fall back to the last value when the correction is not a contraction
    if (std::abs(aitken - v[n - 1]) > std::abs(d2)) return v[n - 1];
    return aitken;
}

} // namespace detail

inline NormalizedEnergy normalized_energy(const PointMap& f, const std::vector<double>& t_schedule,
                                          double delta) {
    if (t_schedule.empty()) throw std::invalid_argument("normalized_energy: empty schedule");
    for (std::size_t i = 0; i + 1 < t_schedule.size(); ++i)
        if (t_schedule[i + 1] >= t_schedule[i])
            throw std::invalid_argument("normalized_energy: t_schedule must be strictly decreasing");
    const SpectralSpace& Y = *f.target;
    const DimensionConstants dc(Y.dim);
    NormalizedEnergy out;
    out.map_desc = f.describe();
    out.source_id = f.source->id;
    out.target_id = Y.id;
    for (double t : t_schedule) {
        NormalizedEnergyEntry e;
        e.t = t;
        e.l = choose_truncation(Y, t, delta).l;
        const TEnergy te = t_energy(f, t, e.l);
        e.raw = te.report.total;
        e.a_value = dc.tensor_scale(t) * te.report.total;
        const double rt = std::sqrt(t);
        e.under_resolved = rt < 2.0 * Y.spacing();
        double b = 0.0;
        for (int p = 0; p < f.source->n_samples(); ++p)
            b += f.source->mass(p) * f.image_ball_measure(p, rt) * te.report.density(p);
        e.b_value = t * b;
        out.entries.push_back(e);
    }
    std::vector<double> ts, as, bs;
    for (const auto& e : out.entries)
        if (!e.under_resolved) {
            ts.push_back(e.t);
            as.push_back(e.a_value);
            bs.push_back(e.b_value);
        }
    if (ts.empty())
        throw std::runtime_error("normalized_energy: every schedule entry is under-resolved");
    out.extrapolated = detail::extrapolate_schedule(ts, as);
    out.bounded_on_schedule = true;
    for (std::size_t i = 0; i + 1 < bs.size(); ++i)
        if (bs[i + 1] > 1.10 * bs[i] + 1e-12) out.bounded_on_schedule = false;
    return out;
}

struct UpperGradient {
    Eigen::VectorXd estimate;             // (|A-normalized f*g_{Y,t}|_B)^{1/2}
    std::optional<Eigen::VectorXd> lip;   // exact |J^f|_op for analytic maps
};

inline UpperGradient upper_gradient_estimate(const PointMap& f, double t, int l) {
    const TEnergy te = t_energy(f, t, l);
    const DimensionConstants dc(f.target->dim);
    const double a = dc.tensor_scale(t);
    const int P = f.source->n_samples();
    UpperGradient out;
    out.estimate.resize(P);
    for (int p = 0; p < P; ++p) out.estimate(p) = std::sqrt(a * bound_norm(te.pullback.values[p]));
    if (f.kind == MapKind::analytic) {
        Eigen::VectorXd lip(P);
        for (int p = 0; p < P; ++p) {
            const Eigen::MatrixXd J = f.jacobian(p);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
            lip(p) = svd.singularValues()(0);
        }
        out.lip = lip;
    }
    return out;
}

// max-sample HS distance of the A-normalized pull-back from the identity,
// the working form of the isometric-map predicate f*g_Y = g_X
inline double isometry_defect(const PointMap& f, double t, int l) {
    const TEnergy te = t_energy(f, t, l);
    const DimensionConstants dc(f.target->dim);
    const double a = dc.tensor_scale(t);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(f.source->dim, f.source->dim);
    double worst = 0.0;
    for (const auto& T : te.pullback.values) worst = std::max(worst, (id - a * T).norm());
    return worst;
}

// ------------------------------------------------------------------- JSON --

inline nlohmann::ordered_json map_to_json(const PointMap& f) {
    nlohmann::ordered_json j;
    j["source_id"] = f.source->id;
    j["target_id"] = f.target->id;
    j["kind"] = to_string(f.kind);
    if (f.kind == MapKind::analytic) {
        j["name"] = f.name;
        if (f.name == "circle_degree") j["degree"] = f.degree;
        if (f.name == "constant")
            j["point"] = std::vector<double>(f.fixed.data(), f.fixed.data() + f.fixed.size());
    } else if (f.kind == MapKind::vertex) {
        j["assignment"] = f.assignment;
    } else {
        std::vector<double> c;
        for (int p = 0; p < f.point_coords.rows(); ++p)
            for (int d = 0; d < f.point_coords.cols(); ++d) c.push_back(f.point_coords(p, d));
        j["coords"] = c;
    }
    return j;
}

inline nlohmann::ordered_json energy_report_to_json(const EnergyReport& r,
                                                    bool with_density = false) {
    nlohmann::ordered_json j;
    j["total"] = r.total;
    j["normalization"] = r.normalization;
    j["l"] = r.l;
    j["t"] = r.t;
    j["map"] = r.map_desc;
    j["source_id"] = r.source_id;
    j["target_id"] = r.target_id;
    if (with_density)
        j["density"] = std::vector<double>(r.density.data(), r.density.data() + r.density.size());
    return j;
}

inline nlohmann::ordered_json normalized_energy_to_json(const NormalizedEnergy& n) {
    nlohmann::ordered_json j;
    j["map"] = n.map_desc;
    j["source_id"] = n.source_id;
    j["target_id"] = n.target_id;
    j["extrapolated"] = n.extrapolated;
    j["bounded_on_schedule"] = n.bounded_on_schedule;
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : n.entries)
        entries.push_back({{"t", e.t},
                           {"l", e.l},
                           {"raw", e.raw},
                           {"a_value", e.a_value},
                           {"b_value", e.b_value},
                           {"under_resolved", e.under_resolved}});
    j["entries"] = entries;
    return j;
}

} // namespace hke
