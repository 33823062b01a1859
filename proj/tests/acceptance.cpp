// Acceptance suite: one pass/fail line per criterion, exit code = #failures.
//
// Every tolerance below is pinned; the helper spaces and schedules are the
// smallest configurations that resolve the quantities being measured.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "hke/hke.hpp"

using namespace hke;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void criterion(int id, const std::string& label, const std::function<void()>& body) {
    try {
        body();
        std::cout << "[PASS] criterion " << id << ": " << label << "\n";
    } catch (const std::exception& e) {
        ++failures;
        std::cout << "[FAIL] criterion " << id << ": " << label << " — " << e.what() << "\n";
    }
}

void expect(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

double circle_gt_series(double t, int kmax = 4000) {
    double s = 0.0;
    for (int k = kmax; k >= 1; --k) s += double(k) * k * std::exp(-2.0 * k * k * t);
    return s / M_PI;
}

// brute-force Rayleigh bound: coarse directions plus cone refinement
double rayleigh_bound(const Eigen::MatrixXd& T, Rng& rng) {
    const int m = static_cast<int>(T.rows());
    Eigen::VectorXd best = Eigen::VectorXd::Zero(m);
    double val = -1.0;
    auto probe = [&](const Eigen::VectorXd& center, double cone, int count) {
        for (int i = 0; i < count; ++i) {
            Eigen::VectorXd v(m);
            for (int d = 0; d < m; ++d) v(d) = rng.normal();
            if (center.norm() > 0) v = center + cone * v;
            v /= v.norm();
            const double r = std::abs(v.dot(T * v));
            if (r > val) {
                val = r;
                best = v;
            }
        }
    };
    probe(Eigen::VectorXd::Zero(m), 1.0, 10000);
    double cone = 0.3;
    for (int round = 0; round < 4; ++round) {
        probe(best, cone, 1000);
        cone *= 0.2;
    }
    return val;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

SphereMap perturbed_identity(const SpectralSpace& X, double amp, const std::vector<int>& modes,
                             std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(X.n_samples());
    for (int k : modes) {
        const double a = rng.normal(), b = rng.normal();
        for (int p = 0; p < X.n_samples(); ++p)
            noise(p) += a * std::cos(k * X.coords(p, 0)) + b * std::sin(k * X.coords(p, 0));
    }
    noise *= amp / std::sqrt(noise.squaredNorm() / X.n_samples());
    Eigen::MatrixXd v(X.n_samples(), 2);
    for (int p = 0; p < X.n_samples(); ++p) {
        const double th = X.coords(p, 0) + noise(p);
        v(p, 0) = std::cos(th);
        v(p, 1) = std::sin(th);
    }
    return SphereMap(X, 1, v);
}

} // namespace

int main() {
    std::cout.setf(std::ios::fixed);
    std::cout.precision(6);

    const SpectralSpace circle = SpectralSpace::build_circle(256, 128);
    const SpectralSpace interval = SpectralSpace::build_interval(257, 128);

    criterion(1, "normalization constant c_1 end to end", [&] {
        const double t = 0.02;
        const int l = choose_truncation(circle, t, 1e-8).l;
        const SymTensorField g = pullback_metric(circle, t, l);
        const DimensionConstants dc(1);
        expect(std::abs(dc.c_N - 4.0 * std::sqrt(8.0 * M_PI)) < 1e-10, "c_1 formula");
        const double oracle = circle_gt_series(t);
        double worst = 0.0, worst_vs_oracle = 0.0;
        for (int p = 0; p < circle.n_samples(); ++p) {
            const double v = g.values[p](0, 0);
            worst = std::max(worst, std::abs(dc.tensor_scale(t) * v - 1.0));
            worst_vs_oracle =
                std::max(worst_vs_oracle, dc.tensor_scale(t) * std::abs(v - oracle));
        }
        expect(worst < 0.01, "max-sample |c1 t^{3/2} g_t − 1| = " + std::to_string(worst));
        expect(worst_vs_oracle < 1e-6,
               "series oracle gap = " + std::to_string(worst_vs_oracle));
    });

    criterion(2, "weak-smoothness dichotomy circle vs interval", [&] {
        const std::vector<double> ts{0.04, 0.02, 0.01, 0.005};
        std::vector<double> interval_l1;
        for (double t : ts) {
            const int lc = choose_truncation(circle, t, 1e-8).l;
            const auto fc = distortion_field(circle, t, lc, Normalization::A);
            expect(distortion_norm(fc.values, kInf, circle) < 0.05,
                   "circle Linf at t=" + std::to_string(t));
            const int li = choose_truncation(interval, t, 1e-8).l;
            const auto fi = distortion_field(interval, t, li, Normalization::A);
            expect(distortion_norm(fi.values, kInf, interval) >= 0.99,
                   "interval Linf at t=" + std::to_string(t));
            expect(std::abs(fi.values(0) - 1.0) < 1e-12, "interval distortion at x=0 not 1");
            interval_l1.push_back(distortion_norm(fi.values, 1.0, interval));
        }
        for (std::size_t i = 0; i + 1 < interval_l1.size(); ++i)
            expect(interval_l1[i + 1] < interval_l1[i], "interval L1 not monotone");
        // log-log slope of L1 against t
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const double x = std::log(ts[i]), y = std::log(interval_l1[i]);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
        }
        const double n = ts.size();
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        expect(std::abs(slope - 0.5) <= 0.15, "L1 slope = " + std::to_string(slope));
    });

    criterion(3, "bi-Lipschitz ratios: circle tight, interval fails at the ends", [&] {
        const int lc = choose_truncation(circle, 0.01, 1e-8).l;
        const auto rc = bilipschitz_report(circle, 0.01, lc, 0.1, 2000, 424242);
        expect(rc.local_min >= 0.95 && rc.local_max <= 1.05,
               "circle local ratios [" + std::to_string(rc.local_min) + ", " +
                   std::to_string(rc.local_max) + "]");
        const int li = choose_truncation(interval, 0.01, 1e-8).l;
        const auto ri = bilipschitz_report(interval, 0.01, li, 0.1, 2000, 424242);
        expect(ri.local_min < 0.5, "interval local min = " + std::to_string(ri.local_min));
        const double xp = interval.coords(ri.inverse_lipschitz_witness.p, 0);
        const double xq = interval.coords(ri.inverse_lipschitz_witness.q, 0);
        const double d_end = std::min({xp, M_PI - xp, xq, M_PI - xq});
        expect(d_end <= 0.05, "witness distance to endpoint = " + std::to_string(d_end));
    });

    criterion(4, "A-normalized energy of degree-k maps equals pi k^2", [&] {
        for (int k : {1, 2, 3}) {
            const auto ne =
                normalized_energy(PointMap::circle_degree(circle, circle, k), {0.04, 0.02, 0.01},
                                  1e-8);
            const double target = M_PI * k * k;
            expect(std::abs(ne.extrapolated - target) <= 0.01 * target,
                   "k=" + std::to_string(k) + " energy " + std::to_string(ne.extrapolated));
        }
    });

    criterion(5, "Korevaar-Schoen compatibility (n+2)/2", [&] {
        const auto Xk = SpectralSpace::build_circle(2048, 128);
        const auto rc =
            ks_compare(PointMap::identity(Xk, Xk), {0.04, 0.02, 0.01}, {0.4, 0.2, 0.1}, 1e-8);
        expect(std::abs(rc.ratio - 1.5) <= 0.05 * 1.5,
               "circle ratio = " + std::to_string(rc.ratio));
        expect(rc.density_l1_gap < 0.05, "circle density gap = " + std::to_string(rc.density_l1_gap));
        const auto T = SpectralSpace::build_flat_torus(48, 48, 200);
        const auto rt =
            ks_compare(PointMap::identity(T, T), {0.02, 0.01, 0.005}, {0.3, 0.2, 0.15}, 1e-6);
        expect(std::abs(rt.ratio - 2.0) <= 0.05 * 2.0,
               "torus ratio = " + std::to_string(rt.ratio));
        expect(rt.density_l1_gap < 0.05, "torus density gap = " + std::to_string(rt.density_l1_gap));
    });

    criterion(6, "tensor norm chain and Rayleigh oracle", [&] {
        Rng rng(0xacce97);
        for (int m : {1, 2, 3}) {
            const double root_m = std::sqrt(double(m));
            for (int trial = 0; trial < 1000; ++trial) {
                Eigen::MatrixXd T(m, m);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j <= i; ++j) T(i, j) = T(j, i) = rng.uniform(-1.0, 1.0);
                const double hs = hs_norm(T), b = bound_norm(T);
                expect(b <= hs + 1e-12, "bound > HS");
                expect(hs <= root_m * b + 1e-12, "HS > sqrt(m) bound");
                if (trial % 10 == 0) {
                    const double brute = rayleigh_bound(T, rng);
                    expect(std::abs(brute - b) < 1e-3,
                           "Rayleigh gap " + std::to_string(std::abs(brute - b)));
                }
            }
        }
    });

    criterion(7, "Takahashi equivalence on circle and meshed sphere", [&] {
        Eigen::MatrixXd v(circle.n_samples(), 2);
        for (int p = 0; p < circle.n_samples(); ++p) {
            v(p, 0) = std::cos(circle.coords(p, 0));
            v(p, 1) = std::sin(circle.coords(p, 0));
        }
        const auto rep1 = takahashi_check(SphereMap(circle, 1, v));
        expect(rep1.pass, "circle identity verdict");
        expect(rep1.eigen_residual_n < 1e-10,
               "circle eigen residual = " + std::to_string(rep1.eigen_residual_n));

        TakahashiConfig cfg;
        cfg.tol_eigen = 1e-5;
        cfg.tol_isometry = 0.25;
        cfg.tol_density = 0.05;
        std::vector<double> res;
        for (int lev : {3, 4}) {
            const auto M = SpectralSpace::build_from_mesh(make_icosphere(lev), 16);
            Eigen::MatrixXd pos = M.coords;
            const auto rep = takahashi_check(SphereMap(M, 2, pos), cfg);
            expect(rep.pass, "mesh level " + std::to_string(lev) + " verdict");
            res.push_back(rep.eigen_residual_n);
        }
        expect(res[0] / res[1] >= 3.0,
               "refinement residual factor = " + std::to_string(res[0] / res[1]));

        Eigen::MatrixXd v2(circle.n_samples(), 2);
        for (int p = 0; p < circle.n_samples(); ++p) {
            v2(p, 0) = std::cos(2 * circle.coords(p, 0));
            v2(p, 1) = std::sin(2 * circle.coords(p, 0));
        }
        const auto rep2 = takahashi_check(SphereMap(circle, 1, v2));
        expect(!rep2.pass, "degree-2 should fail");
        expect(std::find(rep2.violated.begin(), rep2.violated.end(), "isometry") !=
                   rep2.violated.end(),
               "degree-2 failure must name the isometry clause");
    });

    criterion(8, "harmonic flow from a 5 percent perturbed identity", [&] {
        const auto Xf = SpectralSpace::build_circle(256, 80);
        const auto f0 = perturbed_identity(Xf, 0.05, {4, 8, 12}, 7);
        const auto fr = harmonic_flow(f0, default_flow_step(Xf), 5000, 1e-6);
        expect(fr.converged, "flow did not converge in 5000 steps");
        for (std::size_t i = 1; i < fr.trace.size(); ++i)
            expect(fr.trace[i].energy <=
                       fr.trace[i - 1].energy + 1e-13 * (1.0 + fr.trace[i - 1].energy),
                   "energy trace increased at step " + std::to_string(i));
        expect(std::abs(fr.trace.back().energy - M_PI) <= 0.01 * M_PI,
               "final energy = " + std::to_string(fr.trace.back().energy));
        expect(fr.trace.back().residual < 1e-6,
               "final residual = " + std::to_string(fr.trace.back().residual));
    });

    criterion(9, "upper-gradient diagnostic reproduces Lipschitz constants", [&] {
        const int l = choose_truncation(circle, 0.01, 1e-8).l;
        for (int k : {1, 2, 3}) {
            const auto ug = upper_gradient_estimate(PointMap::circle_degree(circle, circle, k),
                                                    0.01, l);
            expect(std::abs(ug.estimate.minCoeff() - k) <= 0.02 * k &&
                       std::abs(ug.estimate.maxCoeff() - k) <= 0.02 * k,
                   "k=" + std::to_string(k) + " estimate [" +
                       std::to_string(ug.estimate.minCoeff()) + ", " +
                       std::to_string(ug.estimate.maxCoeff()) + "]");
        }
    });

    criterion(10, "CLI determinism across repeated runs", [&] {
        const fs::path dir = fs::temp_directory_path() / "hke_acceptance_cli";
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string cli = HKE_CLI_PATH;
        auto write = [&](const std::string& name, const std::string& body) {
            std::ofstream out(dir / name);
            out << body;
        };
        write("spectrum.json", R"({"space":{"kind":"circle","P":64,"L":12},"export_space":true})");
        write("embed.json", R"({"space":{"kind":"circle","P":128,"L":64},"t":0.02})");
        write("distortion.json",
              R"({"space":{"kind":"interval","P":257,"L":128},"t_schedule":[0.04,0.02,0.01]})");
        write("bilip.json",
              R"({"space":{"kind":"circle","P":128,"L":64},"t":0.02,"rho":0.2,"pairs":400,"seed":5})");
        write("energy.json",
              R"({"source":{"kind":"circle","P":128,"L":64},"map":{"kind":"analytic","name":"circle_degree","degree":2},"t_schedule":[0.04,0.02]})");
        write("ks.json",
              R"({"source":{"kind":"circle","P":512,"L":64},"map":{"kind":"analytic","name":"identity"},"t_schedule":[0.04,0.02],"r_schedule":[0.4,0.2],"tolerance":0.2})");
        write("flow.json",
              R"({"space":{"kind":"circle","P":128,"L":40},"map":{"kind":"perturbed_circle_identity","amplitude":0.05,"modes":[4,8],"seed":3},"max_steps":3000,"tol":1e-5})");
        write("takahashi.json",
              R"({"space":{"kind":"circle","P":128,"L":64},"map":{"kind":"circle_identity"}})");
        const std::vector<std::string> subs{"spectrum", "embed",  "distortion", "bilip",
                                            "energy",   "ks",     "flow",       "takahashi"};
        for (const auto& sub : subs) {
            for (const char* run : {"a", "b"}) {
                const std::string cmd = cli + " " + sub + " --config " +
                                        (dir / (sub + ".json")).string() + " --out " +
                                        (dir / (sub + "_" + run)).string() + " > /dev/null 2>&1";
                const int rc = WEXITSTATUS(std::system(cmd.c_str()));
                expect(rc == 0 || rc == 2, sub + " exited with " + std::to_string(rc));
            }
            for (const auto& entry : fs::directory_iterator(dir / (sub + "_a"))) {
                const fs::path other = dir / (sub + "_b") / entry.path().filename();
                expect(fs::exists(other), sub + ": missing artifact " + entry.path().filename().string());
                expect(slurp(entry.path()) == slurp(other),
                       sub + ": artifact " + entry.path().filename().string() + " differs");
            }
        }
    });

    if (failures == 0) std::cout << "all acceptance criteria passed\n";
    else std::cout << failures << " acceptance criteria failed\n";
    return failures;
}
