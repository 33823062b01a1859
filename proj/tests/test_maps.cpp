#include <catch2/catch_amalgamated.hpp>

#include "hke/maps.hpp"
#include "hke/rng.hpp"

using namespace hke;

namespace {

double circle_gt_series(double t, int kmax = 4000) {
    double s = 0.0;
    for (int k = kmax; k >= 1; --k) s += double(k) * k * std::exp(-2.0 * k * k * t);
    return s / M_PI;
}

// orthogonally remix every multiplicity cluster of a copy of the space
SpectralSpace remix_clusters(const SpectralSpace& X, std::uint64_t seed) {
    SpectralSpace Y = X;
    Rng rng(seed);
    for (const auto& [b, e] : X.clusters()) {
        const int m = e - b;
        if (m < 2) continue;
        Eigen::MatrixXd A(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) A(i, j) = rng.normal();
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        Eigen::MatrixXd Q = qr.householderQ();
        Eigen::MatrixXd phi_block = X.phi.middleCols(b, m) * Q;
        Y.phi.middleCols(b, m) = phi_block;
        std::vector<Eigen::MatrixXd> gr(m);
        for (int j = 0; j < m; ++j) {
            gr[j] = Eigen::MatrixXd::Zero(X.n_samples(), X.dim);
            for (int i = 0; i < m; ++i) gr[j] += Q(i, j) * X.grad[b + i];
        }
        for (int j = 0; j < m; ++j) Y.grad[b + j] = gr[j];
    }
    return Y;
}

} // namespace

TEST_CASE("composed eigenfunctions") {
    const auto X = SpectralSpace::build_circle(256, 64);
    SECTION("identity reproduces stored values and gradients") {
        const auto id = PointMap::identity(X, X);
        const auto c = compose_eigenfunction(id, 1);  // cos θ / √π
        CHECK((c.values - X.phi.col(1)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((c.gradients - X.grad[1]).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("degree-2 map composes to the doubled frequency") {
        const auto f = PointMap::circle_degree(X, X, 2);
        const auto c = compose_eigenfunction(f, 1);
        for (int p = 0; p < 256; p += 17) {
            const double th = X.coords(p, 0);
            CHECK(c.values(p) == Catch::Approx(std::cos(2 * th) / std::sqrt(M_PI)).margin(1e-12));
            CHECK(std::abs(c.gradients(p, 0)) ==
                  Catch::Approx(2.0 * std::abs(std::sin(2 * th)) / std::sqrt(M_PI)).margin(1e-12));
        }
    }
    SECTION("constant map has vanishing gradients") {
        Eigen::VectorXd pt(1);
        pt << 1.0;
        const auto f = PointMap::constant(X, X, pt);
        const auto c = compose_eigenfunction(f, 3);
        CHECK(c.gradients.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("vertex assignment validation") {
        std::vector<int> bad(X.n_samples(), 0);
        bad[7] = 99999;
        CHECK_THROWS_AS(PointMap::vertex(X, X, bad), std::invalid_argument);
    }
}

TEST_CASE("lambda energy density") {
    const auto X = SpectralSpace::build_circle(256, 64);
    const auto id = PointMap::identity(X, X);
    SECTION("identity densities are k²/π") {
        for (int k : {1, 2, 3}) {
            const Eigen::VectorXd d = lambda_energy_density(id, double(k) * k);
            CHECK(d.minCoeff() == Catch::Approx(k * k / M_PI).epsilon(1e-10));
            CHECK(d.maxCoeff() == Catch::Approx(k * k / M_PI).epsilon(1e-10));
        }
    }
    SECTION("constant map gives zero") {
        Eigen::VectorXd pt(1);
        pt << 0.3;
        const auto f = PointMap::constant(X, X, pt);
        CHECK(lambda_energy_density(f, 1.0).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("unknown eigenvalue is rejected") {
        CHECK_THROWS_AS(lambda_energy_density(id, 2.5), std::invalid_argument);
    }
}

TEST_CASE("t-energy with pull-back identities") {
    const auto X = SpectralSpace::build_circle(256, 128);
    const double t = 0.02;
    const int l = choose_truncation(X, t, 1e-8).l;
    SECTION("identity total matches the series oracle") {
        const auto id = PointMap::identity(X, X);
        const auto te = t_energy(id, t, l);
        const double oracle = 0.5 * 2 * M_PI * circle_gt_series(t);
        CHECK(te.report.total == Catch::Approx(oracle).epsilon(1e-6));
        const DimensionConstants dc(1);
        CHECK(dc.tensor_scale(t) * te.report.total == Catch::Approx(M_PI).epsilon(0.01));
        // report total equals the recomputed mass-weighted half sum
        CHECK(te.report.total ==
              Catch::Approx(0.5 * X.mass.dot(te.report.density)).margin(1e-12));
    }
    SECTION("degree-2 total scales by four") {
        const auto f = PointMap::circle_degree(X, X, 2);
        const auto te = t_energy(f, t, l);
        const DimensionConstants dc(1);
        CHECK(dc.tensor_scale(t) * te.report.total == Catch::Approx(4 * M_PI).epsilon(0.01));
    }
    SECTION("constant map has exactly zero energy") {
        Eigen::VectorXd pt(1);
        pt << 2.0;
        const auto f = PointMap::constant(X, X, pt);
        CHECK(t_energy(f, t, l).report.total == 0.0);
    }
    SECTION("per-sample trace identity and HS bound") {
        const auto id = PointMap::identity(X, X);
        const auto te = t_energy(id, t, l);
        for (int p = 0; p < X.n_samples(); p += 31) {
            CHECK(te.pullback.values[p].trace() ==
                  Catch::Approx(te.report.density(p)).margin(1e-10));
            CHECK(te.pullback.values[p].norm() <= te.report.density(p) + 1e-10);
        }
    }
}

TEST_CASE("basis invariance of map energies") {
    const auto X = SpectralSpace::build_circle(128, 40);
    const auto Y = remix_clusters(X, 314159);
    const auto f1 = PointMap::circle_degree(X, X, 2);
    const auto f2 = PointMap::circle_degree(X, Y, 2);
    const double t = 0.03;
    const auto a = t_energy(f1, t, 30), b = t_energy(f2, t, 30);
    CHECK(std::abs(a.report.total - b.report.total) < 1e-10 * std::abs(a.report.total));
    for (int p = 0; p < X.n_samples(); p += 13) {
        CHECK(std::abs(a.report.density(p) - b.report.density(p)) <
              1e-10 * (1.0 + a.report.density(p)));
        CHECK((a.pullback.values[p] - b.pullback.values[p]).norm() <
              1e-10 * (1.0 + a.pullback.values[p].norm()));
    }
    const Eigen::VectorXd da = lambda_energy_density(f1, 1.0);
    const Eigen::VectorXd db = lambda_energy_density(f2, 1.0);
    CHECK((da - db).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("normalized energy schedule and extrapolation") {
    const auto X = SpectralSpace::build_circle(256, 128);
    const std::vector<double> ts{0.04, 0.02, 0.01};
    SECTION("identity extrapolates to pi") {
        const auto ne = normalized_energy(PointMap::identity(X, X), ts, 1e-8);
        CHECK(ne.extrapolated == Catch::Approx(M_PI).margin(0.02));
        CHECK(ne.bounded_on_schedule);
    }
    SECTION("degree-k family scales as k^2 within 1 percent") {
        std::vector<double> per_k;
        for (int k : {1, 2, 3}) {
            const auto ne = normalized_energy(PointMap::circle_degree(X, X, k), ts, 1e-8);
            CHECK(ne.extrapolated == Catch::Approx(M_PI * k * k).epsilon(0.01));
            per_k.push_back(ne.extrapolated / (k * k));
        }
        for (double v : per_k) CHECK(v == Catch::Approx(per_k[0]).epsilon(0.01));
    }
    SECTION("constant map is zero and bounded") {
        Eigen::VectorXd pt(1);
        pt << 0.0;
        const auto ne = normalized_energy(PointMap::constant(X, X, pt), ts, 1e-8);
        for (const auto& e : ne.entries) {
            CHECK(e.a_value == 0.0);
            CHECK(e.b_value == 0.0);
        }
        CHECK(ne.bounded_on_schedule);
        CHECK(ne.extrapolated == 0.0);
    }
    SECTION("schedule must decrease") {
        CHECK_THROWS_AS(normalized_energy(PointMap::identity(X, X), {0.01, 0.02}, 1e-8),
                        std::invalid_argument);
    }
}

TEST_CASE("upper gradient estimate reproduces Lipschitz constants") {
    const auto X = SpectralSpace::build_circle(256, 128);
    const int l = choose_truncation(X, 0.01, 1e-8).l;
    for (int k : {1, 2, 3}) {
        const auto f = PointMap::circle_degree(X, X, k);
        const auto ug = upper_gradient_estimate(f, 0.01, l);
        CHECK(ug.estimate.minCoeff() == Catch::Approx(double(k)).epsilon(0.02));
        CHECK(ug.estimate.maxCoeff() == Catch::Approx(double(k)).epsilon(0.02));
        REQUIRE(ug.lip.has_value());
        CHECK(ug.lip->minCoeff() == Catch::Approx(double(k)).margin(1e-12));
    }
    Eigen::VectorXd pt(1);
    pt << 0.0;
    const auto ug0 = upper_gradient_estimate(PointMap::constant(X, X, pt), 0.01, l);
    CHECK(ug0.estimate.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("chain rule and discrete gradients agree on refining grids") {
    double err_coarse = 0.0, err_fine = 0.0;
    for (int P : {256, 512}) {
        const auto X = SpectralSpace::build_circle(P, 64);
        const auto analytic = PointMap::identity(X, X);
        std::vector<int> assign(P);
        for (int p = 0; p < P; ++p) assign[p] = p;
        const auto vertex = PointMap::vertex(X, X, assign);
        const auto ta = t_energy(analytic, 0.02, 40), tv = t_energy(vertex, 0.02, 40);
        const double rel =
            (ta.report.density - tv.report.density).cwiseAbs().maxCoeff() /
            ta.report.density.maxCoeff();
        (P == 256 ? err_coarse : err_fine) = rel;
    }
    CHECK(err_fine < 0.6 * err_coarse);  // at least O(h)
    CHECK(err_coarse < 0.1);
}

TEST_CASE("energy is lower-semicontinuous along converging vertex maps") {
    const auto X = SpectralSpace::build_circle(128, 40);
    std::vector<int> id_assign(128);
    for (int p = 0; p < 128; ++p) id_assign[p] = p;
    const auto limit = t_energy(PointMap::vertex(X, X, id_assign), 0.05, 20).report.total;
    for (int moved : {16, 8, 4, 2, 0}) {
        auto assign = id_assign;
        for (int p = 0; p < moved; ++p) assign[p * 7 % 128] = (p * 7 + 1) % 128;
        const double e = t_energy(PointMap::vertex(X, X, assign), 0.05, 20).report.total;
        CHECK(e >= limit * (1.0 - 1e-9));
    }
}

TEST_CASE("isometric-map predicate via the pull-back") {
    const auto X = SpectralSpace::build_circle(256, 128);
    const int l = choose_truncation(X, 0.01, 1e-8).l;
    CHECK(isometry_defect(PointMap::identity(X, X), 0.01, l) < 0.05);
    CHECK(isometry_defect(PointMap::circle_degree(X, X, 2), 0.01, l) > 1.0);
}

TEST_CASE("map serialization carries the defining data") {
    const auto X = SpectralSpace::build_circle(64, 12);
    const auto j = map_to_json(PointMap::circle_degree(X, X, 3));
    CHECK(j.at("kind") == "analytic");
    CHECK(j.at("name") == "circle_degree");
    CHECK(j.at("degree") == 3);
    CHECK(j.at("source_id") == X.id);
}
