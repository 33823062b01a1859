#include <catch2/catch_amalgamated.hpp>

#include "hke/embed.hpp"
#include "hke/rng.hpp"
#include "hke/space.hpp"

using namespace hke;

namespace {

// independent series oracle (1/π) Σ k² e^{−2k²t}
double circle_gt_series(double t, int kmax = 4000) {
    double s = 0.0;
    for (int k = kmax; k >= 1; --k) s += double(k) * k * std::exp(-2.0 * k * k * t);
    return s / M_PI;
}

// direct heat-kernel series on the circle at p = q
double circle_hk_diag(double t, int kmax = 400) {
    double s = 1.0 / (2.0 * M_PI);
    for (int k = 1; k <= kmax; ++k) s += std::exp(-t * k * k) / M_PI;
    return s;
}

} // namespace

TEST_CASE("heat kernel on the circle") {
    const auto X = SpectralSpace::build_circle(256, 128);
    SECTION("large t leaves only the constant mode") {
        for (int q : {0, 17, 200})
            CHECK(heat_kernel(X, 3, q, 50.0) == Catch::Approx(1.0 / (2 * M_PI)).margin(1e-10));
    }
    SECTION("diagonal value matches the direct series to 1e-12") {
        CHECK(heat_kernel(X, 0, 0, 0.5) == Catch::Approx(circle_hk_diag(0.5)).margin(1e-12));
        CHECK(heat_kernel(X, 0, 0, 0.5) == Catch::Approx(0.39894228253600366).margin(1e-12));
    }
    SECTION("symmetry and stochastic completeness") {
        CHECK(heat_kernel(X, 5, 99, 0.07) == Catch::Approx(heat_kernel(X, 99, 5, 0.07)));
        for (double t : {0.05, 0.2}) {
            double total = 0.0;
            for (int q = 0; q < X.n_samples(); ++q) total += X.mass(q) * heat_kernel(X, 7, q, t);
            CHECK(total == Catch::Approx(1.0).margin(1e-6));
        }
    }
    SECTION("t must be positive") { CHECK_THROWS_AS(heat_kernel(X, 0, 0, 0.0), std::invalid_argument); }
}

TEST_CASE("embedding coordinates") {
    const auto X = SpectralSpace::build_circle(256, 128);
    SECTION("closed form at theta = 0") {
        const auto v = embedding_coords(X, 0, 0.02, 2);
        const DimensionConstants dc(1);
        const double expect = dc.coordinate_scale(0.02) * std::exp(-0.02) / std::sqrt(M_PI);
        CHECK(v(0) == Catch::Approx(expect).epsilon(1e-12));
        CHECK(expect == Catch::Approx(0.13170480854425100).epsilon(1e-10));
        CHECK(v(1) == Catch::Approx(0.0).margin(1e-300));
    }
    SECTION("huge lambda underflows to exact zero without faults") {
        const auto v = embedding_coords(X, 0, 60.0, X.cutoff());
        CHECK(std::isfinite(v.norm()));
        CHECK(v(X.cutoff() - 1) == 0.0);  // e^{-4096·60}
    }
    SECTION("rotation invariance of embedding distances") {
        const int l = choose_truncation(X, 0.02, 1e-8).l;
        const Eigen::MatrixXd E = embedding_matrix(X, 0.02, l);
        Rng rng(11);
        for (int trial = 0; trial < 100; ++trial) {
            const int p = static_cast<int>(rng.index(256)), q = static_cast<int>(rng.index(256));
            const int s = static_cast<int>(rng.index(256));
            const double d1 = (E.row(p) - E.row(q)).norm();
            const double d2 = (E.row((p + s) % 256) - E.row((q + s) % 256)).norm();
            CHECK(std::abs(d1 - d2) < 1e-10);
        }
    }
    SECTION("argument validation") {
        CHECK_THROWS_AS(embedding_coords(X, 0, -1.0, 2), std::invalid_argument);
        CHECK_THROWS_AS(embedding_coords(X, 0, 0.1, X.cutoff() + 1), std::invalid_argument);
    }
}

TEST_CASE("truncation choice") {
    const auto X = SpectralSpace::build_circle(256, 128);
    SECTION("reported tail is small and stable under doubling the cutoff") {
        const auto tc = choose_truncation(X, 0.05, 1e-6);
        CHECK(tc.l <= 41);
        CHECK(tc.tail < 1e-6);
        const auto X2 = SpectralSpace::build_circle(600, 256);
        const auto tc2 = choose_truncation(X2, 0.05, 1e-6);
        CHECK(tc2.l == tc.l);
        CHECK(std::abs(tc2.tail - tc.tail) < 0.10 * tc.tail);
    }
    SECTION("huge delta admits the smallest cutoff") {
        CHECK(choose_truncation(X, 0.05, 1e9).l == 1);
    }
    SECTION("monotone in t") {
        const int l1 = choose_truncation(X, 0.02, 1e-6).l;
        const int l2 = choose_truncation(X, 0.04, 1e-6).l;
        CHECK(l2 <= l1);
    }
    SECTION("unreachable bound reports increase-L") {
        const auto small = SpectralSpace::build_circle(64, 12);
        CHECK_THROWS_WITH(choose_truncation(small, 1e-5, 1e-9),
                          Catch::Matchers::ContainsSubstring("increase L"));
    }
}

TEST_CASE("pull-back metric g_t") {
    const auto X = SpectralSpace::build_circle(256, 128);
    const double t = 0.02;
    const int l = choose_truncation(X, t, 1e-8).l;
    const SymTensorField g = pullback_metric(X, t, l);
    const DimensionConstants dc(1);
    SECTION("constant over the circle, matches the series oracle") {
        const double oracle = circle_gt_series(t);
        for (int p : {0, 50, 128, 255}) {
            CHECK(dc.tensor_scale(t) * g.values[p](0, 0) == Catch::Approx(1.0).epsilon(0.01));
            CHECK(g.values[p](0, 0) == Catch::Approx(oracle).epsilon(1e-6));
        }
    }
    SECTION("interval endpoint has vanishing g_t") {
        const auto IV = SpectralSpace::build_interval(257, 64);
        const SymTensorField gi = pullback_metric(IV, 0.03, 40);
        CHECK(gi.values[0](0, 0) == 0.0);
        CHECK(gi.values[256](0, 0) == Catch::Approx(0.0).margin(1e-25));
    }
    SECTION("positive semidefinite everywhere") {
        const auto T = SpectralSpace::build_flat_torus(16, 16, 40);
        const SymTensorField gt = pullback_metric(T, 0.01, 40);
        for (const auto& m : gt.values) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
            CHECK(es.eigenvalues().minCoeff() >= -1e-12);
        }
    }
    SECTION("invariant under orthogonal remixing inside a multiplicity cluster") {
        SpectralSpace Y = X;
        Rng rng(5);
        const double a = rng.uniform(0.0, 2 * M_PI);
        const double c = std::cos(a), s = std::sin(a);
        // rotate the λ = 1 pair (indices 1, 2) together with its gradients
        const Eigen::VectorXd p1 = Y.phi.col(1), p2 = Y.phi.col(2);
        Y.phi.col(1) = c * p1 + s * p2;
        Y.phi.col(2) = -s * p1 + c * p2;
        const Eigen::MatrixXd g1 = Y.grad[1], g2 = Y.grad[2];
        Y.grad[1] = c * g1 + s * g2;
        Y.grad[2] = -s * g1 + c * g2;
        const SymTensorField gy = pullback_metric(Y, t, l);
        for (int p = 0; p < X.n_samples(); p += 37)
            CHECK(gy.values[p](0, 0) == Catch::Approx(g.values[p](0, 0)).margin(1e-12));
    }
}

TEST_CASE("distortion fields and norms") {
    const auto X = SpectralSpace::build_circle(256, 128);
    const auto IV = SpectralSpace::build_interval(257, 128);
    SECTION("circle is nearly undistorted at t = 0.02") {
        const int l = choose_truncation(X, 0.02, 1e-8).l;
        const auto f = distortion_field(X, 0.02, l, Normalization::A);
        CHECK(distortion_norm(f.values, kInf, X) < 0.02);
    }
    SECTION("interval endpoint distortion is exactly one") {
        const int l = choose_truncation(IV, 0.01, 1e-8).l;
        const auto f = distortion_field(IV, 0.01, l, Normalization::A);
        CHECK(f.values(0) == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("normalizations A and B agree on a resolved circle") {
        const auto XF = SpectralSpace::build_circle(2048, 128);
        const int l = choose_truncation(XF, 0.02, 1e-8).l;
        const auto fa = distortion_field(XF, 0.02, l, Normalization::A);
        const auto fb = distortion_field(XF, 0.02, l, Normalization::B);
        CHECK_FALSE(fb.under_resolved);
        CHECK((fa.values - fb.values).cwiseAbs().maxCoeff() < 0.03);
    }
    SECTION("under-resolved B falls back with a flag") {
        const auto XS = SpectralSpace::build_circle(64, 20);
        const auto fb = distortion_field(XS, 1e-4, 10, Normalization::B);
        CHECK(fb.under_resolved);
        CHECK(std::isfinite(fb.values.maxCoeff()));
    }
    SECTION("norm of the constant field") {
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(X.n_samples());
        CHECK(distortion_norm(ones, 1.0, X) == Catch::Approx(2 * M_PI));
        CHECK(distortion_norm(ones, kInf, X) == Catch::Approx(1.0));
    }
    SECTION("interval schedule: L1 decreases, Linf pinned at the endpoint") {
        double prev = kInf;
        for (double t : {0.04, 0.02, 0.01}) {
            const int l = choose_truncation(IV, t, 1e-8).l;
            const auto f = distortion_field(IV, t, l, Normalization::A);
            const double l1 = distortion_norm(f.values, 1.0, IV);
            CHECK(l1 < prev);
            prev = l1;
            CHECK(distortion_norm(f.values, kInf, IV) >= 0.99);
        }
    }
    SECTION("circle schedule: both norms fall below 0.05 by t = 0.01") {
        for (double t : {0.04, 0.02, 0.01}) {
            const int l = choose_truncation(X, t, 1e-8).l;
            const auto f = distortion_field(X, t, l, Normalization::A);
            if (t <= 0.01) {
                CHECK(distortion_norm(f.values, 1.0, X) < 0.05);
                CHECK(distortion_norm(f.values, kInf, X) < 0.05);
            }
        }
    }
    SECTION("probability-normalized norms are nondecreasing in p") {
        const int l = choose_truncation(IV, 0.02, 1e-8).l;
        const auto f = distortion_field(IV, 0.02, l, Normalization::A);
        double prev = 0.0;
        for (double p : {1.0, 2.0, 4.0, kInf}) {
            const double v = distortion_norm_prob(f.values, p, IV);
            CHECK(v >= prev - 1e-12);
            prev = v;
        }
    }
    SECTION("truncation stability: doubling l moves norms by less than 2 delta") {
        const double delta = 1e-6, t = 0.02;
        const auto tc = choose_truncation(X, t, delta);
        const int l2 = std::min(2 * tc.l, X.cutoff());
        const auto f1 = distortion_field(X, t, tc.l, Normalization::A);
        const auto f2 = distortion_field(X, t, l2, Normalization::A);
        CHECK(std::abs(distortion_norm(f1.values, 1.0, X) - distortion_norm(f2.values, 1.0, X)) <
              2 * delta * X.total_measure);
        CHECK(std::abs(distortion_norm(f1.values, kInf, X) -
                       distortion_norm(f2.values, kInf, X)) < 2 * delta);
    }
}

TEST_CASE("smoothable point detection") {
    SECTION("circle is entirely smoothable") {
        const auto X = SpectralSpace::build_circle(256, 128);
        const auto res = smoothable_set(X, 0.05, 0.01, 1.0, default_radius_grid(X, 1.0));
        CHECK(res.fraction == Catch::Approx(1.0));
    }
    SECTION("interval loses a boundary layer of width ~ sqrt(t)") {
        const auto IV = SpectralSpace::build_interval(257, 128);
        const auto res = smoothable_set(IV, 0.05, 0.01, 0.5, default_radius_grid(IV, 0.5));
        CHECK(res.fraction < 1.0);
        CHECK(res.fraction > 0.5);
        // endpoints excluded, middle kept
        CHECK(res.mask[0] == 0);
        CHECK(res.mask[256] == 0);
        CHECK(res.mask[128] == 1);
        // excluded set is within a few sqrt(t) of the ends
        const double cut = 6.0 * std::sqrt(0.01);
        for (int p = 0; p < 257; ++p)
            if (!res.mask[p]) {
                const double x = IV.coords(p, 0);
                CHECK(std::min(x, M_PI - x) < cut);
            }
    }
    SECTION("huge epsilon keeps everything") {
        const auto IV = SpectralSpace::build_interval(257, 64);
        const auto res = smoothable_set(IV, 10.0, 0.01, 0.5, default_radius_grid(IV, 0.5));
        CHECK(res.fraction == Catch::Approx(1.0));
    }
    SECTION("grid validation") {
        const auto X = SpectralSpace::build_circle(64, 12);
        CHECK_THROWS_AS(smoothable_set(X, 0.05, 0.01, 0.5, {0.1, 0.2, 0.3}),
                        std::invalid_argument);
        CHECK_THROWS_AS(smoothable_set(X, 0.05, 0.01, 0.5, {0.1, 0.2, 0.3, 0.9}),
                        std::invalid_argument);
    }
}

TEST_CASE("bi-Lipschitz profiling") {
    SECTION("circle local ratios hug 1") {
        const auto X = SpectralSpace::build_circle(256, 128);
        const int l = choose_truncation(X, 0.01, 1e-8).l;
        const auto rep = bilipschitz_report(X, 0.01, l, 0.1, 2000, 424242);
        CHECK(rep.local_pairs > 1000);
        CHECK(rep.local_min >= 0.95);
        CHECK(rep.local_max <= 1.05);
        CHECK(rep.injectivity_min_gap > 0.0);
        CHECK(rep.global_pairs > 1000);
    }
    SECTION("interval inverse-Lipschitz failure near the endpoints") {
        const auto IV = SpectralSpace::build_interval(257, 128);
        const int l = choose_truncation(IV, 0.01, 1e-8).l;
        const auto rep = bilipschitz_report(IV, 0.01, l, 0.1, 2000, 424242);
        CHECK(rep.local_min < 0.5);
        const double xw = IV.coords(rep.inverse_lipschitz_witness.p, 0);
        const double xq = IV.coords(rep.inverse_lipschitz_witness.q, 0);
        const double d_end = std::min({xw, M_PI - xw, xq, M_PI - xq});
        CHECK(d_end < 0.05);
    }
    SECTION("deterministic for a fixed seed") {
        const auto X = SpectralSpace::build_circle(128, 40);
        const auto a = bilipschitz_report(X, 0.02, 20, 0.2, 200, 7);
        const auto b = bilipschitz_report(X, 0.02, 20, 0.2, 200, 7);
        CHECK(a.local_min == b.local_min);
        CHECK(a.global_max == b.global_max);
        CHECK(a.inverse_lipschitz_witness.p == b.inverse_lipschitz_witness.p);
    }
}
