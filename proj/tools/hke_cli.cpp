// hke_cli — experiment runner for the heat-kernel embedding laboratory.
//
// Subcommands: spectrum, embed, distortion, bilip, energy, ks, flow, takahashi.
// Each takes --config PATH and --out DIR, plus repeatable --set key.path=value
// overrides. Every run writes its artifacts plus a manifest.json echoing the
// configuration, the library version and artifact checksums. Outputs are
// byte-stable for a fixed (config, seed).
//
// Exit codes: 0 pass, 2 verdict-fail, 1 error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "hke/hke.hpp"
#include "sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config error: field '" + field + "': " + what) {}
};

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const std::exception& e) {
        throw std::runtime_error("config parse failure in " + path + ": " + e.what());
    }
    for (const std::string& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError(ov, "override must look like key.path=value");
        const std::string keypath = ov.substr(0, eq), raw = ov.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (...) {
            value = raw;  // bare strings allowed
        }
        json* node = &cfg;
        std::size_t pos = 0;
        while (true) {
            const auto dot = keypath.find('.', pos);
            const std::string key = keypath.substr(pos, dot - pos);
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            pos = dot + 1;
        }
    }
    return cfg;
}

double require_positive(const json& j, const std::string& field) {
    if (!j.contains(field)) throw ConfigError(field, "missing");
    const double v = j.at(field).get<double>();
    if (!(v > 0.0)) throw ConfigError(field, "must be positive");
    return v;
}

std::vector<double> get_schedule(const json& j, const std::string& field, bool decreasing) {
    if (!j.contains(field)) throw ConfigError(field, "missing");
    std::vector<double> s;
    try {
        s = j.at(field).get<std::vector<double>>();
    } catch (...) {
        throw ConfigError(field, "must be an array of numbers");
    }
    if (s.empty()) throw ConfigError(field, "must be non-empty");
    for (double v : s)
        if (!(v > 0.0)) throw ConfigError(field, "entries must be positive");
    if (decreasing)
        for (std::size_t i = 0; i + 1 < s.size(); ++i)
            if (s[i + 1] >= s[i]) throw ConfigError(field, "must be strictly decreasing");
    return s;
}

hke::SpectralSpace build_space(const json& spec, const std::string& field) {
    if (!spec.contains("kind")) throw ConfigError(field + ".kind", "missing");
    const std::string kind = spec.at("kind").get<std::string>();
    try {
        if (kind == "circle")
            return hke::SpectralSpace::build_circle(spec.at("P").get<int>(),
                                                    spec.at("L").get<int>(),
                                                    spec.value("radius", 1.0));
        if (kind == "interval")
            return hke::SpectralSpace::build_interval(spec.at("P").get<int>(),
                                                      spec.at("L").get<int>(),
                                                      spec.value("length", M_PI));
        if (kind == "flat_torus")
            return hke::SpectralSpace::build_flat_torus(spec.at("nx").get<int>(),
                                                        spec.at("ny").get<int>(),
                                                        spec.at("L").get<int>(),
                                                        spec.value("Lx", 1.0),
                                                        spec.value("Ly", 1.0));
        if (kind == "round_sphere")
            return hke::SpectralSpace::build_round_sphere(spec.at("P").get<int>(),
                                                          spec.at("L").get<int>());
        if (kind == "icosphere")
            return hke::SpectralSpace::build_from_mesh(
                hke::make_icosphere(spec.at("level").get<int>()), spec.at("L").get<int>());
        if (kind == "torus_mesh")
            return hke::SpectralSpace::build_from_mesh(
                hke::make_grid_torus(spec.at("nx").get<int>(), spec.at("ny").get<int>(),
                                     spec.value("Lx", 1.0), spec.value("Ly", 1.0)),
                spec.at("L").get<int>());
        if (kind == "mesh") {
            const std::string path = spec.at("path").get<std::string>();
            const hke::Mesh mesh = path.size() > 4 && path.substr(path.size() - 4) == ".obj"
                                       ? hke::load_obj(path)
                                       : hke::load_off(path);
            return hke::SpectralSpace::build_from_mesh(mesh, spec.at("L").get<int>());
        }
        if (kind == "cached") return hke::import_space_json(spec.at("path").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(field, std::string("bad space spec: ") + e.what());
    }
    throw ConfigError(field + ".kind", "unknown space kind '" + kind + "'");
}

hke::PointMap build_map(const json& spec, const hke::SpectralSpace& src,
                        const hke::SpectralSpace& tgt) {
    if (!spec.contains("kind")) throw ConfigError("map.kind", "missing");
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "analytic") {
        const std::string name = spec.value("name", "");
        if (name == "identity") return hke::PointMap::identity(src, tgt);
        if (name == "circle_degree")
            return hke::PointMap::circle_degree(src, tgt, spec.at("degree").get<int>());
        if (name == "constant") {
            const auto pt = spec.at("point").get<std::vector<double>>();
            return hke::PointMap::constant(
                src, tgt, Eigen::Map<const Eigen::VectorXd>(pt.data(), pt.size()));
        }
        throw ConfigError("map.name", "unknown analytic map '" + name + "'");
    }
    if (kind == "vertex")
        return hke::PointMap::vertex(src, tgt, spec.at("assignment").get<std::vector<int>>());
    if (kind == "coords") {
        const auto flat = spec.at("coords").get<std::vector<double>>();
        const int cd = static_cast<int>(tgt.coords.cols());
        if (flat.size() != static_cast<std::size_t>(src.n_samples()) * cd)
            throw ConfigError("map.coords", "expected P*coord_dim values");
        Eigen::MatrixXd c(src.n_samples(), cd);
        for (int p = 0; p < src.n_samples(); ++p)
            for (int d = 0; d < cd; ++d) c(p, d) = flat[p * cd + d];
        return hke::PointMap::from_coords(src, tgt, c);
    }
    throw ConfigError("map.kind", "unknown map kind '" + kind + "'");
}

hke::SphereMap build_sphere_map(const json& spec, const hke::SpectralSpace& X) {
    if (!spec.contains("kind")) throw ConfigError("map.kind", "missing");
    const std::string kind = spec.at("kind").get<std::string>();
    const int P = X.n_samples();
    if (kind == "circle_identity" || kind == "circle_degree") {
        if (X.kind != hke::SpaceKind::circle)
            throw ConfigError("map.kind", kind + " needs a circle space");
        const int k = (kind == "circle_identity") ? 1 : spec.at("degree").get<int>();
        Eigen::MatrixXd v(P, 2);
        for (int p = 0; p < P; ++p) {
            v(p, 0) = std::cos(k * X.coords(p, 0));
            v(p, 1) = std::sin(k * X.coords(p, 0));
        }
        return hke::SphereMap(X, 1, v);
    }
    if (kind == "perturbed_circle_identity") {
        if (X.kind != hke::SpaceKind::circle)
            throw ConfigError("map.kind", "perturbed_circle_identity needs a circle space");
        const double amp = spec.value("amplitude", 0.05);
        const auto modes = spec.value("modes", std::vector<int>{4, 8, 12});
        hke::Rng rng(spec.value("seed", 7ull));
        Eigen::VectorXd noise = Eigen::VectorXd::Zero(P);
        for (int k : modes) {
            const double a = rng.normal(), b = rng.normal();
            for (int p = 0; p < P; ++p)
                noise(p) += a * std::cos(k * X.coords(p, 0)) + b * std::sin(k * X.coords(p, 0));
        }
        noise *= amp / std::sqrt(noise.squaredNorm() / P);
        Eigen::MatrixXd v(P, 2);
        for (int p = 0; p < P; ++p) {
            const double th = X.coords(p, 0) + noise(p);
            v(p, 0) = std::cos(th);
            v(p, 1) = std::sin(th);
        }
        return hke::SphereMap(X, 1, v);
    }
    if (kind == "mesh_positions") {
        if (X.kind != hke::SpaceKind::mesh)
            throw ConfigError("map.kind", "mesh_positions needs a mesh space");
        Eigen::MatrixXd v = X.coords;
        return hke::SphereMap(X, 2, v);
    }
    if (kind == "eigenmap") {
        const auto em = hke::eigenmap(X, spec.at("lambda").get<double>(),
                                      spec.at("count").get<int>(),
                                      spec.value("constancy_threshold", 0.05));
        if (!em.ok)
            throw std::runtime_error("eigenmap construction failed: constancy deviation " +
                                     std::to_string(em.constancy_deviation));
        return *em.map;
    }
    if (kind == "values") {
        const int k = spec.at("k").get<int>();
        const auto flat = spec.at("values").get<std::vector<double>>();
        if (flat.size() != static_cast<std::size_t>(P) * (k + 1))
            throw ConfigError("map.values", "expected P*(k+1) values");
        Eigen::MatrixXd v(P, k + 1);
        for (int p = 0; p < P; ++p)
            for (int c = 0; c <= k; ++c) v(p, c) = flat[p * (k + 1) + c];
        return hke::SphereMap(X, k, v);
    }
    throw ConfigError("map.kind", "unknown sphere map kind '" + kind + "'");
}

// collects artifacts, writes them, emits manifest.json
class Artifacts {
  public:
    Artifacts(fs::path dir, std::string experiment, json config)
        : dir_(std::move(dir)), experiment_(std::move(experiment)), config_(std::move(config)) {
        fs::create_directories(dir_);
    }

    void add(const std::string& name, const std::string& content) {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
        out << content;
        entries_.push_back({name, hke::tools::Sha256::of(content)});
    }

    void add_json(const std::string& name, const ordered_json& j) { add(name, j.dump(2) + "\n"); }

    void finish(int exit_code) {
        ordered_json m;
        m["experiment"] = experiment_;
        m["version"] = hke::version();
        m["exit_code"] = exit_code;
        m["config"] = config_;
        ordered_json arts = ordered_json::array();
        for (const auto& [name, sha] : entries_)
            arts.push_back({{"path", name}, {"sha256", sha}});
        m["artifacts"] = arts;
        std::ofstream out(dir_ / "manifest.json", std::ios::binary);
        out << m.dump(2) << "\n";
    }

  private:
    fs::path dir_;
    std::string experiment_;
    json config_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

// ------------------------------------------------------------ experiments --

int run_spectrum(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace X = build_space(cfg.at("space"), "space");
    std::ostringstream csv;
    csv.precision(17);
    csv << "i,lambda\n";
    for (int i = 0; i <= X.cutoff(); ++i) csv << i << "," << X.eigenvalues(i) << "\n";
    art.add("spectrum.csv", csv.str());
    const int n = X.cutoff() + 1;
    const Eigen::MatrixXd G = X.phi.transpose() * (X.mass.asDiagonal() * X.phi);
    ordered_json rep;
    rep["space_id"] = X.id;
    rep["dim"] = X.dim;
    rep["samples"] = X.n_samples();
    rep["cutoff"] = X.cutoff();
    rep["total_measure"] = X.total_measure;
    rep["diameter_bound"] = X.diameter_bound;
    rep["lambda0"] = X.eigenvalues(0);
    rep["orthonormality_residual"] =
        (G - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    art.add_json("spectrum.json", rep);
    if (cfg.value("export_space", false)) art.add("space.json", hke::space_to_json(X).dump(2) + "\n");
    return 0;
}

int run_embed(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace X = build_space(cfg.at("space"), "space");
    const double t = require_positive(cfg, "t");
    const double delta = cfg.value("delta", 1e-8);
    const auto tc = hke::choose_truncation(X, t, delta);
    const Eigen::MatrixXd E = hke::embedding_matrix(X, t, tc.l);
    std::ostringstream csv;
    csv.precision(17);
    csv << "sample";
    for (int i = 0; i < E.cols(); ++i) csv << ",x" << (i + 1);
    csv << "\n";
    for (int p = 0; p < E.rows(); ++p) {
        csv << p;
        for (int i = 0; i < E.cols(); ++i) csv << "," << E(p, i);
        csv << "\n";
    }
    art.add("embedding.csv", csv.str());
    ordered_json rep;
    rep["space_id"] = X.id;
    rep["t"] = t;
    rep["delta"] = delta;
    rep["l"] = tc.l;
    rep["tail"] = tc.tail;
    art.add_json("embed.json", rep);
    return 0;
}

int run_distortion(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace X = build_space(cfg.at("space"), "space");
    const auto ts = get_schedule(cfg, "t_schedule", true);
    const double delta = cfg.value("delta", 1e-8);
    const std::string norm_s = cfg.value("normalization", "A");
    if (norm_s != "A" && norm_s != "B") throw ConfigError("normalization", "must be A or B");
    const hke::Normalization norm =
        norm_s == "A" ? hke::Normalization::A : hke::Normalization::B;
    std::ostringstream csv;
    csv.precision(17);
    csv << "t,l,l1,linf\n";
    ordered_json entries = ordered_json::array();
    for (double t : ts) {
        const auto tc = hke::choose_truncation(X, t, delta);
        const auto field = hke::distortion_field(X, t, tc.l, norm);
        const double l1 = hke::distortion_norm(field.values, 1.0, X);
        const double linf = hke::distortion_norm(field.values, hke::kInf, X);
        csv << t << "," << tc.l << "," << l1 << "," << linf << "\n";
        hke::DistortionReport rep;
        rep.space_id = X.id;
        rep.t = t;
        rep.l = tc.l;
        rep.normalization = norm_s;
        rep.requested_p = {1.0};
        rep.lp_norms = {l1};
        rep.lp_norms_prob = {hke::distortion_norm_prob(field.values, 1.0, X)};
        rep.linf = linf;
        rep.under_resolved = field.under_resolved;
        if (cfg.value("per_sample", false))
            rep.per_sample =
                std::vector<double>(field.values.data(), field.values.data() + field.values.size());
        entries.push_back(hke::report_to_json(rep));
    }
    art.add("distortion.csv", csv.str());
    ordered_json rep;
    rep["space_id"] = X.id;
    rep["normalization"] = norm_s;
    rep["delta"] = delta;
    rep["entries"] = entries;
    art.add_json("distortion.json", rep);
    return 0;
}

int run_bilip(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace X = build_space(cfg.at("space"), "space");
    const double t = require_positive(cfg, "t");
    const double rho = require_positive(cfg, "rho");
    const int pairs = cfg.value("pairs", 2000);
    const std::uint64_t seed = cfg.value("seed", 1234ull);
    const double delta = cfg.value("delta", 1e-8);
    const int l = cfg.contains("l") ? cfg.at("l").get<int>() : hke::choose_truncation(X, t, delta).l;
    auto rep = hke::bilipschitz_report(X, t, l, rho, pairs, seed);
    art.add_json("bilip.json", hke::report_to_json(rep));
    return 0;
}

int run_energy(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace src = build_space(cfg.at("source"), "source");
    const bool same = !cfg.contains("target");
    const hke::SpectralSpace tgt = same ? build_space(cfg.at("source"), "source")
                                        : build_space(cfg.at("target"), "target");
    const hke::PointMap f = build_map(cfg.at("map"), src, tgt);
    const auto ts = get_schedule(cfg, "t_schedule", true);
    const double delta = cfg.value("delta", 1e-6);
    const auto ne = hke::normalized_energy(f, ts, delta);
    art.add_json("energy.json", hke::normalized_energy_to_json(ne));
    std::ostringstream csv;
    csv.precision(17);
    csv << "t,normalized_energy\n";
    for (const auto& e : ne.entries) csv << e.t << "," << e.a_value << "\n";
    art.add("energy.csv", csv.str());
    return 0;
}

int run_ks(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace src = build_space(cfg.at("source"), "source");
    const bool same = !cfg.contains("target");
    const hke::SpectralSpace tgt = same ? build_space(cfg.at("source"), "source")
                                        : build_space(cfg.at("target"), "target");
    const hke::PointMap f = build_map(cfg.at("map"), src, tgt);
    const auto ts = get_schedule(cfg, "t_schedule", true);
    const auto rs = get_schedule(cfg, "r_schedule", false);
    const double delta = cfg.value("delta", 1e-6);
    const double tol = cfg.value("tolerance", 0.05);
    const auto rep = hke::ks_compare(f, ts, rs, delta, tol);
    art.add_json("ks.json", hke::ks_report_to_json(rep, cfg.value("with_densities", false)));
    art.add("ks.csv", hke::ks_report_csv(rep));
    return rep.pass ? 0 : 2;
}

int run_flow(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace X = build_space(cfg.at("space"), "space");
    const hke::SphereMap f0 = build_sphere_map(cfg.at("map"), X);
    const double eta = cfg.contains("eta") ? require_positive(cfg, "eta")
                                           : hke::default_flow_step(X);
    const int max_steps = cfg.value("max_steps", 5000);
    const double tol = cfg.value("tol", 1e-6);
    const auto fr = hke::harmonic_flow(f0, eta, max_steps, tol);
    art.add("flow_trace.csv", hke::flow_trace_csv(fr.trace));
    art.add_json("final_map.json", hke::sphere_map_to_json(fr.final_map));
    ordered_json rep;
    rep["space_id"] = X.id;
    rep["eta0"] = eta;
    rep["max_steps"] = max_steps;
    rep["tol"] = tol;
    rep["converged"] = fr.converged;
    rep["diverged"] = fr.diverged;
    rep["steps"] = fr.steps;
    rep["final_energy"] = fr.trace.back().energy;
    rep["final_residual"] = fr.trace.back().residual;
    art.add_json("flow.json", rep);
    return fr.converged ? 0 : 2;
}

int run_takahashi(const json& cfg, Artifacts& art) {
    const hke::SpectralSpace X = build_space(cfg.at("space"), "space");
    const hke::SphereMap f = build_sphere_map(cfg.at("map"), X);
    hke::TakahashiConfig tc;
    if (cfg.contains("t_schedule")) tc.t_schedule = get_schedule(cfg, "t_schedule", true);
    tc.truncation_delta = cfg.value("delta", tc.truncation_delta);
    if (cfg.contains("tolerances")) {
        const auto& t = cfg.at("tolerances");
        tc.tol_eigen = t.value("eigen", tc.tol_eigen);
        tc.tol_isometry = t.value("isometry", tc.tol_isometry);
        tc.tol_density = t.value("density", tc.tol_density);
    }
    const auto rep = hke::takahashi_check(f, tc);
    art.add_json("takahashi.json", hke::takahashi_report_to_json(rep));
    return rep.pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hke — heat-kernel embedding laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    const std::vector<std::string> names = {"spectrum", "embed", "distortion", "bilip",
                                            "energy",   "ks",    "flow",       "takahashi"};
    for (const auto& n : names) {
        auto* sub = app.add_subcommand(n);
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--set", overrides, "dotted-path config override key.path=value");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    // HKE_THREADS is accepted for compatibility with parallel builds of the
    // numeric kernels; the reference implementation is single-threaded and
    // bit-stable regardless of its value.
    (void)std::getenv("HKE_THREADS");

    try {
        const json cfg = load_config(config_path, overrides);
        Artifacts art(out_dir, cmd, cfg);
        int rc = 1;
        if (cmd == "spectrum") rc = run_spectrum(cfg, art);
        else if (cmd == "embed") rc = run_embed(cfg, art);
        else if (cmd == "distortion") rc = run_distortion(cfg, art);
        else if (cmd == "bilip") rc = run_bilip(cfg, art);
        else if (cmd == "energy") rc = run_energy(cfg, art);
        else if (cmd == "ks") rc = run_ks(cfg, art);
        else if (cmd == "flow") rc = run_flow(cfg, art);
        else if (cmd == "takahashi") rc = run_takahashi(cfg, art);
        art.finish(rc);
        return rc;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
