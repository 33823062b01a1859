/*
 * embed.hpp — heat kernel, truncated spectral embedding, pull-back metric,
 * distortion fields, smoothable points and bi-Lipschitz profiling.
 *
 * Heat kernel            p(x,y,t) = Σ_i e^{−λ_i t} φ_i(x) φ_i(y)
 * Truncated embedding    Φ̃_t^l(x) = (c_N^{1/2} t^{(N+2)/4} e^{−λ_i t} φ_i(x))_{i=1..l}
 * Pull-back metric       g_t = Σ_{i≥1} e^{−2λ_i t} ∇φ_i ⊗ ∇φ_i
 *
 * The constant eigenfunction (i = 0) never enters: its gradient vanishes and
 * it shifts the embedding by a constant vector.
 *
 * Two normalizations of g_t against g_X = Id:
 *   A:  c_N t^{(N+2)/2}
 *   B:  c̃_N t μ(B_√t(·)), falling back to ω_N t^{N/2} when √t is under-resolved
 */
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hke/constants.hpp"
#include "hke/rng.hpp"
#include "hke/space.hpp"
#include "hke/tensor.hpp"

namespace hke {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// e^{−λt} with a hard zero below the subnormal range
inline double heat_weight(double lambda, double t) {
    const double e = lambda * t;
    return (e > 690.0) ? 0.0 : std::exp(-e);
}

inline double heat_kernel(const SpectralSpace& X, int p, int q, double t) {
    if (t <= 0.0) throw std::invalid_argument("heat_kernel: t must be positive");
    double sum = 0.0;
    for (int i = 0; i <= X.cutoff(); ++i)
        sum += heat_weight(X.eigenvalues(i), t) * X.phi(p, i) * X.phi(q, i);
    return sum;
}

// Φ̃_t^l(x_p); component i−1 is c_N^{1/2} t^{(N+2)/4} e^{−λ_i t} φ_i(x_p)
inline Eigen::VectorXd embedding_coords(const SpectralSpace& X, int p, double t, int l) {
    if (t <= 0.0) throw std::invalid_argument("embedding_coords: t must be positive");
    if (l < 1 || l > X.cutoff())
        throw std::invalid_argument("embedding_coords: l out of range [1, L]");
    const DimensionConstants dc(X.dim);
    const double scale = dc.coordinate_scale(t);
    Eigen::VectorXd v(l);
    for (int i = 1; i <= l; ++i) v(i - 1) = scale * heat_weight(X.eigenvalues(i), t) * X.phi(p, i);
    return v;
}

// all samples at once, P × l
inline Eigen::MatrixXd embedding_matrix(const SpectralSpace& X, double t, int l) {
    if (t <= 0.0) throw std::invalid_argument("embedding_matrix: t must be positive");
    if (l < 1 || l > X.cutoff())
        throw std::invalid_argument("embedding_matrix: l out of range [1, L]");
    const DimensionConstants dc(X.dim);
    const double scale = dc.coordinate_scale(t);
    Eigen::MatrixXd E(X.n_samples(), l);
    for (int i = 1; i <= l; ++i)
        E.col(i - 1) = scale * heat_weight(X.eigenvalues(i), t) * X.phi.col(i);
    return E;
}

struct TruncationChoice {
    int l;        // smallest admissible cutoff
    double tail;  // c_N t^{(N+2)/2} Σ_{i>l} e^{−2λ_i t} ‖∇φ_i‖_∞² at that l
};

// smallest l with c_N t^{(N+2)/2} Σ_{i=l+1} e^{−2λ_i t} ‖∇φ_i‖_∞² < δ; the part
// of the sum above the resolved cutoff L is bounded by a geometric fit to the
// last retained terms.
inline TruncationChoice choose_truncation(const SpectralSpace& X, double t, double delta) {
    if (t <= 0.0) throw std::invalid_argument("choose_truncation: t must be positive");
    if (delta <= 0.0) throw std::invalid_argument("choose_truncation: delta must be positive");
    const int L = X.cutoff();
    const DimensionConstants dc(X.dim);
    const double scale = dc.tensor_scale(t);
    std::vector<double> term(L + 1, 0.0);
    for (int i = 1; i <= L; ++i) {
        const double sup = X.grad[i].rowwise().norm().maxCoeff();
        term[i] = heat_weight(2.0 * X.eigenvalues(i), t) * sup * sup;
    }
    // geometric bound for the unresolved part above L: least-squares fit of
    // log(term) against the index over the last terms (wide enough to span
    // multiplicity clusters), tail ≈ term_L q/(1−q)
    double beyond = 0.0;
    if (term[L] > 0.0) {
        const int W = std::min(24, std::max(4, L / 2));
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int npt = 0;
        for (int i = std::max(1, L - W + 1); i <= L; ++i) {
            if (term[i] <= 0.0) continue;
            const double x = i, y = std::log(term[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++npt;
        }
        if (npt >= 4) {
            const double slope = (npt * sxy - sx * sy) / (npt * sxx - sx * sx);
            const double q = std::exp(slope);
            beyond = (q < 1.0) ? term[L] * q / (1.0 - q) : kInf;
        } else {
            beyond = term[L];  // isolated nonzero stragglers above underflow
        }
    }
    double suffix = beyond;
    std::vector<double> tail_at(L + 1, 0.0);
    for (int l = L; l >= 1; --l) {
        tail_at[l] = scale * suffix;
        suffix += term[l];
    }
    for (int l = 1; l <= L; ++l)
        if (tail_at[l] < delta) return {l, tail_at[l]};
    throw std::runtime_error(
        "choose_truncation: tail bound " + std::to_string(tail_at[L]) +
        " not achievable within available cutoff; increase L");
}

// g_t = Σ_{i=1..l} e^{−2λ_i t} ∇φ_i ⊗ ∇φ_i, per sample
inline SymTensorField pullback_metric(const SpectralSpace& X, double t, int l) {
    if (t <= 0.0) throw std::invalid_argument("pullback_metric: t must be positive");
    if (l < 1 || l > X.cutoff()) throw std::invalid_argument("pullback_metric: l out of range");
    const int P = X.n_samples();
    SymTensorField g(X.dim, P, X.id);
    for (int i = 1; i <= l; ++i) {
        const double w = heat_weight(2.0 * X.eigenvalues(i), t);
        if (w == 0.0) continue;
        for (int p = 0; p < P; ++p) {
            const Eigen::VectorXd gr = X.grad[i].row(p).transpose();
            g.values[p].noalias() += w * gr * gr.transpose();
        }
    }
    return g;
}

enum class Normalization { A, B };

inline const char* to_string(Normalization n) { return n == Normalization::A ? "A" : "B"; }

struct DistortionField {
    Eigen::VectorXd values;       // per-sample |Id − normalized g_t|_HS
    Normalization normalization;
    double t;
    int l;
    bool under_resolved = false;  // B only: √t below twice the sample spacing
};

inline DistortionField distortion_field(const SpectralSpace& X, double t, int l,
                                        Normalization norm) {
    if (t <= 0.0) throw std::invalid_argument("distortion_field: t must be positive");
    const SymTensorField g = pullback_metric(X, t, l);
    const DimensionConstants dc(X.dim);
    const int P = X.n_samples();
    DistortionField out;
    out.normalization = norm;
    out.t = t;
    out.l = l;
    out.values.resize(P);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(X.dim, X.dim);
    if (norm == Normalization::A) {
        const double a = dc.tensor_scale(t);
        for (int p = 0; p < P; ++p) out.values(p) = (id - a * g.values[p]).norm();
    } else {
        const double rt = std::sqrt(t);
        out.under_resolved = rt < 2.0 * X.spacing();
        for (int p = 0; p < P; ++p) {
            const double vol =
                out.under_resolved ? dc.euclidean_ball_volume(rt) : X.ball_query(p, rt).measure;
            const double a = dc.tilde_c_N * t * vol;
            out.values(p) = (id - a * g.values[p]).norm();
        }
    }
    return out;
}

// mass-weighted L^p norm of a per-sample field; p = ∞ gives the max
inline double distortion_norm(const Eigen::VectorXd& field, double p, const SpectralSpace& X) {
    if (field.size() != X.n_samples())
        throw std::invalid_argument("distortion_norm: field size mismatch");
    if (p == kInf) return field.cwiseAbs().maxCoeff();
    if (p < 1.0) throw std::invalid_argument("distortion_norm: p must be in [1, inf]");
    double acc = 0.0;
    for (int i = 0; i < field.size(); ++i) acc += X.mass(i) * std::pow(std::abs(field(i)), p);
    return std::pow(acc, 1.0 / p);
}

// probability-normalized variant (monotone nondecreasing in p)
inline double distortion_norm_prob(const Eigen::VectorXd& field, double p,
                                   const SpectralSpace& X) {
    if (p == kInf) return field.cwiseAbs().maxCoeff();
    double acc = 0.0;
    for (int i = 0; i < field.size(); ++i) acc += X.mass(i) * std::pow(std::abs(field(i)), p);
    return std::pow(acc / X.total_measure, 1.0 / p);
}

// geometric radius grid, default 8 points from max(2·spacing, τ/64) to τ
inline std::vector<double> default_radius_grid(const SpectralSpace& X, double tau, int count = 8) {
    const double lo = std::max(2.0 * X.spacing(), tau / 64.0);
    std::vector<double> r(count);
    for (int i = 0; i < count; ++i)
        r[i] = lo * std::pow(tau / lo, double(i) / (count - 1));
    return r;
}

struct SmoothableResult {
    std::vector<char> mask;             // 1 = (ε, t, τ)-smoothable
    double fraction = 0.0;              // mass fraction of smoothable samples
    std::vector<double> radii_used;
    std::vector<double> radii_skipped;  // below sample spacing
    double epsilon = 0.0, t = 0.0, tau = 0.0;
};

// sample p is marked iff every kept radius r has the μ-average of the
// normalization-A distortion over B_r(p) bounded by ε
inline SmoothableResult smoothable_set(const SpectralSpace& X, double eps, double t, double tau,
                                       std::vector<double> radius_grid) {
    if (eps <= 0 || t <= 0 || tau <= 0)
        throw std::invalid_argument("smoothable_set: eps, t, tau must be positive");
    if (radius_grid.size() < 4)
        throw std::invalid_argument("smoothable_set: need at least 4 radii");
    std::sort(radius_grid.begin(), radius_grid.end());
    for (double r : radius_grid)
        if (r <= 0.0 || r > tau * (1.0 + 1e-12))
            throw std::invalid_argument("smoothable_set: radius grid must lie in (0, tau]");

    const int l = choose_truncation(X, t, 1e-8).l;
    const DistortionField field = distortion_field(X, t, l, Normalization::A);

    SmoothableResult out;
    out.epsilon = eps;
    out.t = t;
    out.tau = tau;
    const double h = X.spacing();
    for (double r : radius_grid)
        (r < h ? out.radii_skipped : out.radii_used).push_back(r);
    if (out.radii_used.empty())
        throw std::invalid_argument("smoothable_set: all radii below sample spacing");

    const int P = X.n_samples();
    out.mask.assign(P, 1);
    for (double r : out.radii_used)
        for (int p = 0; p < P; ++p) {
            if (!out.mask[p]) continue;
            const BallQuery b = X.ball_query(p, r);
            double avg = 0.0;
            for (std::size_t k = 0; k < b.ids.size(); ++k)
                avg += b.masses[k] * field.values(b.ids[k]);
            avg /= b.measure;
            if (avg > eps) out.mask[p] = 0;
        }
    double m = 0.0;
    for (int p = 0; p < P; ++p)
        if (out.mask[p]) m += X.mass(p);
    out.fraction = m / X.total_measure;
    return out;
}

// ------------------------------------------------------------------ report --

struct PairWitness {
    int p = -1, q = -1;
    double dist = 0.0, ratio = 0.0;
};

struct DistortionReport {
    std::string space_id;
    double t = 0.0;
    int l = 0;
    std::string normalization = "A";

    // norms section
    std::vector<double> requested_p;
    std::vector<double> lp_norms;       // mass-weighted
    std::vector<double> lp_norms_prob;  // probability-normalized
    double linf = 0.0;
    bool under_resolved = false;
    std::optional<std::vector<double>> per_sample;

    // bi-Lipschitz section
    double rho = 0.0;
    std::uint64_t seed = 0;
    int pairs_requested = 0;
    int local_pairs = 0, global_pairs = 0;
    double local_min = 0.0, local_max = 0.0;
    double global_min = 0.0, global_max = 0.0;
    PairWitness inverse_lipschitz_witness;   // local pair attaining the min ratio
    double injectivity_floor = 0.5;          // distance floor for the proxy
    double injectivity_min_gap = 0.0;        // min ‖ΔΦ̃‖ over far pairs
    bool has_bilip = false;

    double smoothable_fraction = -1.0;
};

// ratio statistics of ‖Φ̃_t^l(p) − Φ̃_t^l(q)‖ / d(p,q) over seeded local and
// global pair samples
inline DistortionReport bilipschitz_report(const SpectralSpace& X, double t, int l, double rho,
                                           int n_pairs, std::uint64_t seed) {
    if (rho <= 0.0) throw std::invalid_argument("bilipschitz_report: rho must be positive");
    if (n_pairs < 1) throw std::invalid_argument("bilipschitz_report: need at least one pair");
    const Eigen::MatrixXd E = embedding_matrix(X, t, l);
    const int P = X.n_samples();
    Rng rng(seed);

    DistortionReport rep;
    rep.space_id = X.id;
    rep.t = t;
    rep.l = l;
    rep.rho = rho;
    rep.seed = seed;
    rep.pairs_requested = n_pairs;
    rep.has_bilip = true;
    rep.local_min = rep.global_min = kInf;
    rep.local_max = rep.global_max = -kInf;
    rep.injectivity_min_gap = kInf;

    // local pairs: q drawn inside B_rho(p)
    for (int k = 0; k < n_pairs; ++k) {
        const int p = static_cast<int>(rng.index(P));
        const BallQuery b = X.ball_query(p, rho);
        if (b.ids.size() < 2) continue;
        const int q = b.ids[rng.index(b.ids.size())];
        const double d = X.distance(p, q);
        if (d <= 0.0) continue;  // skip d = 0 pairs
        const double ratio = (E.row(p) - E.row(q)).norm() / d;
        ++rep.local_pairs;
        if (ratio < rep.local_min) {
            rep.local_min = ratio;
            rep.inverse_lipschitz_witness = {p, q, d, ratio};
        }
        rep.local_max = std::max(rep.local_max, ratio);
    }
    // global pairs: unrestricted
    for (int k = 0; k < n_pairs; ++k) {
        const int p = static_cast<int>(rng.index(P));
        const int q = static_cast<int>(rng.index(P));
        const double d = (p == q) ? 0.0 : X.distance(p, q);
        if (d <= 0.0) continue;
        const double gap = (E.row(p) - E.row(q)).norm();
        const double ratio = gap / d;
        ++rep.global_pairs;
        rep.global_min = std::min(rep.global_min, ratio);
        rep.global_max = std::max(rep.global_max, ratio);
        if (d >= rep.injectivity_floor)
            rep.injectivity_min_gap = std::min(rep.injectivity_min_gap, gap);
    }
    return rep;
}

inline nlohmann::ordered_json report_to_json(const DistortionReport& r) {
    nlohmann::ordered_json j;
    j["space_id"] = r.space_id;
    j["t"] = r.t;
    j["l"] = r.l;
    j["normalization"] = r.normalization;
    if (!r.requested_p.empty()) {
        j["lp"] = {{"p", r.requested_p}, {"norms", r.lp_norms}, {"norms_prob", r.lp_norms_prob}};
        j["linf"] = r.linf;
        j["under_resolved"] = r.under_resolved;
    }
    if (r.per_sample) j["per_sample"] = *r.per_sample;
    if (r.has_bilip) {
        j["bilipschitz"] = {
            {"rho", r.rho},
            {"seed", r.seed},
            {"pairs_requested", r.pairs_requested},
            {"local_pairs", r.local_pairs},
            {"global_pairs", r.global_pairs},
            {"local_min", r.local_min},
            {"local_max", r.local_max},
            {"global_min", r.global_min},
            {"global_max", r.global_max},
            {"witness",
             {{"p", r.inverse_lipschitz_witness.p},
              {"q", r.inverse_lipschitz_witness.q},
              {"dist", r.inverse_lipschitz_witness.dist},
              {"ratio", r.inverse_lipschitz_witness.ratio}}},
            {"injectivity_floor", r.injectivity_floor},
            {"injectivity_min_gap", r.injectivity_min_gap}};
    }
    if (r.smoothable_fraction >= 0.0) j["smoothable_fraction"] = r.smoothable_fraction;
    return j;
}

// two-column CSV (t, norm) for a schedule of distortion norms
inline std::string schedule_csv(const std::vector<double>& ts, const std::vector<double>& norms,
                                const std::string& value_name = "norm") {
    std::ostringstream os;
    os.precision(17);
    os << "t," << value_name << "\n";
    for (std::size_t i = 0; i < ts.size(); ++i) os << ts[i] << "," << norms[i] << "\n";
    return os.str();
}

} // namespace hke
