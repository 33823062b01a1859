/*
 * space_io.hpp — JSON cache for SpectralSpace.
 *
 * Schema v1: dim, masses, eigenvalues, eigenfunctions (row-major), gradients,
 * frames, parameter coords and kind/params. Distances are omitted and
 * recomputed on import (closed form for model spaces, edge-graph Dijkstra for
 * meshes, whose edges are stored). Mesh face data and the stiffness matrix are
 * not cached; imported mesh spaces are for embedding/distortion work and fall
 * back to the spectral Laplacian.
 */
#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "hke/space.hpp"

namespace hke {

inline constexpr int kSpaceSchemaVersion = 1;

inline nlohmann::ordered_json space_to_json(const SpectralSpace& s) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSpaceSchemaVersion;
    j["id"] = s.id;
    j["kind"] = to_string(s.kind);
    j["dim"] = s.dim;
    j["params"] = {{"radius", s.radius}, {"length", s.length}, {"Lx", s.Lx},
                   {"Ly", s.Ly},         {"nx", s.nx},         {"ny", s.ny}};
    j["total_measure"] = s.total_measure;
    j["diameter_bound"] = s.diameter_bound;
    const int P = s.n_samples(), n = s.cutoff() + 1;
    j["samples"] = P;
    j["cutoff"] = s.cutoff();
    std::vector<double> coords(s.coords.data(), s.coords.data() + s.coords.size());
    // Eigen stores column-major; emit row-major explicitly
    std::vector<double> coords_rm, phi_rm;
    coords_rm.reserve(s.coords.size());
    for (int p = 0; p < P; ++p)
        for (int c = 0; c < s.coords.cols(); ++c) coords_rm.push_back(s.coords(p, c));
    j["coord_dim"] = s.coords.cols();
    j["coords"] = coords_rm;
    j["masses"] = std::vector<double>(s.mass.data(), s.mass.data() + P);
    j["eigenvalues"] = std::vector<double>(s.eigenvalues.data(), s.eigenvalues.data() + n);
    phi_rm.reserve(static_cast<std::size_t>(P) * n);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i < n; ++i) phi_rm.push_back(s.phi(p, i));
    j["eigenfunctions"] = phi_rm;
    std::vector<double> grads;
    grads.reserve(static_cast<std::size_t>(n) * P * s.dim);
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < P; ++p)
            for (int d = 0; d < s.dim; ++d) grads.push_back(s.grad[i](p, d));
    j["gradients"] = grads;
    if (!s.frames.empty()) {
        std::vector<double> fr;
        fr.reserve(static_cast<std::size_t>(P) * s.dim * 3);
        for (int p = 0; p < P; ++p)
            for (int d = 0; d < s.dim; ++d)
                for (int c = 0; c < 3; ++c) fr.push_back(s.frames[p](d, c));
        j["frames"] = fr;
    }
    if (!s.modes.empty()) {
        std::vector<int> md;
        for (const auto& m : s.modes) {
            md.push_back(m.a);
            md.push_back(m.b);
            md.push_back(m.c);
        }
        j["modes"] = md;
    }
    if (s.kind == SpaceKind::mesh) {
        std::vector<double> edges;
        for (int p = 0; p < P; ++p)
            for (int e = s.adj_off[p]; e < s.adj_off[p + 1]; ++e)
                if (s.adj_idx[e] > p) {
                    edges.push_back(p);
                    edges.push_back(s.adj_idx[e]);
                    edges.push_back(s.adj_len[e]);
                }
        j["edges"] = edges;
    }
    return j;
}

inline void export_space_json(const SpectralSpace& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_space_json: cannot open " + path);
    out << space_to_json(s).dump(2) << "\n";
}

inline SpectralSpace space_from_json(const nlohmann::json& j) {
    if (!j.contains("schema_version"))
        throw std::runtime_error("space_from_json: missing schema_version");
    if (j.at("schema_version").get<int>() != kSpaceSchemaVersion)
        throw std::runtime_error("space_from_json: unsupported schema_version");
    SpectralSpace s;
    s.id = j.value("id", std::string("imported"));
    s.kind = space_kind_from_string(j.at("kind").get<std::string>());
    s.dim = j.at("dim").get<int>();
    const auto& pr = j.at("params");
    s.radius = pr.value("radius", 1.0);
    s.length = pr.value("length", M_PI);
    s.Lx = pr.value("Lx", 1.0);
    s.Ly = pr.value("Ly", 1.0);
    s.nx = pr.value("nx", 0);
    s.ny = pr.value("ny", 0);
    s.total_measure = j.at("total_measure").get<double>();
    s.diameter_bound = j.at("diameter_bound").get<double>();
    const int P = j.at("samples").get<int>();
    const int n = j.at("cutoff").get<int>() + 1;
    const int cd = j.at("coord_dim").get<int>();
    const auto coords = j.at("coords").get<std::vector<double>>();
    if (static_cast<int>(coords.size()) != P * cd)
        throw std::runtime_error("space_from_json: coords size mismatch");
    s.coords.resize(P, cd);
    for (int p = 0; p < P; ++p)
        for (int c = 0; c < cd; ++c) s.coords(p, c) = coords[p * cd + c];
    const auto masses = j.at("masses").get<std::vector<double>>();
    s.mass = Eigen::Map<const Eigen::VectorXd>(masses.data(), P);
    const auto ev = j.at("eigenvalues").get<std::vector<double>>();
    s.eigenvalues = Eigen::Map<const Eigen::VectorXd>(ev.data(), n);
    const auto ef = j.at("eigenfunctions").get<std::vector<double>>();
    if (static_cast<int>(ef.size()) != P * n)
        throw std::runtime_error("space_from_json: eigenfunctions size mismatch");
    s.phi.resize(P, n);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i < n; ++i) s.phi(p, i) = ef[p * n + i];
    const auto gr = j.at("gradients").get<std::vector<double>>();
    if (static_cast<int>(gr.size()) != n * P * s.dim)
        throw std::runtime_error("space_from_json: gradients size mismatch");
    s.grad.assign(n, Eigen::MatrixXd(P, s.dim));
    std::size_t c = 0;
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < P; ++p)
            for (int d = 0; d < s.dim; ++d) s.grad[i](p, d) = gr[c++];
    if (j.contains("frames")) {
        const auto fr = j.at("frames").get<std::vector<double>>();
        s.frames.resize(P);
        std::size_t f = 0;
        for (int p = 0; p < P; ++p) {
            s.frames[p].resize(s.dim, 3);
            for (int d = 0; d < s.dim; ++d)
                for (int cc = 0; cc < 3; ++cc) s.frames[p](d, cc) = fr[f++];
        }
    }
    if (j.contains("modes")) {
        const auto md = j.at("modes").get<std::vector<int>>();
        s.modes.resize(md.size() / 3);
        for (std::size_t i = 0; i < s.modes.size(); ++i)
            s.modes[i] = {md[3 * i], md[3 * i + 1], md[3 * i + 2]};
    }
    if (s.kind == SpaceKind::mesh) {
        const auto edges = j.at("edges").get<std::vector<double>>();
        std::vector<std::vector<std::pair<int, double>>> adj(P);
        for (std::size_t e = 0; e + 2 < edges.size() + 1; e += 3) {
            const int a = static_cast<int>(edges[e]), b = static_cast<int>(edges[e + 1]);
            adj[a].emplace_back(b, edges[e + 2]);
            adj[b].emplace_back(a, edges[e + 2]);
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
    s.finalize_checks();
    return s;
}

inline SpectralSpace import_space_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("import_space_json: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return space_from_json(j);
}

} // namespace hke
