/*
 * mesh.hpp — triangle-mesh carrier and generators.
 *
 * Meshes are plain vertex/triangle soups. An optional periodic box turns the
 * vertex coordinates into a flat torus chart: edge vectors are taken with the
 * minimal-image convention, which is what the grid-torus generator relies on.
 */
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hke {

struct Mesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> triangles;
    bool has_boundary = false;
    // if set, coordinates wrap modulo (box[0], box[1]) in x and y (flat chart)
    std::optional<std::array<double, 2>> periodic_box;

    std::size_t n_vertices() const { return vertices.size(); }
    std::size_t n_triangles() const { return triangles.size(); }

    // edge vector from a to b under the minimal-image convention
    Eigen::Vector3d edge_vector(int a, int b) const {
        Eigen::Vector3d d = vertices[b] - vertices[a];
        if (periodic_box) {
            for (int c = 0; c < 2; ++c) {
                const double L = (*periodic_box)[c];
                d(c) -= L * std::round(d(c) / L);
            }
        }
        return d;
    }
};

inline void validate_mesh(const Mesh& mesh) {
    const int V = static_cast<int>(mesh.n_vertices());
    if (V < 3 || mesh.triangles.empty())
        throw std::invalid_argument("mesh: too few vertices or no triangles");
    double max_edge2 = 0.0;
    for (const auto& t : mesh.triangles)
        for (int i = 0; i < 3; ++i) {
            if (t[i] < 0 || t[i] >= V)
                throw std::invalid_argument("mesh: triangle index out of range");
            max_edge2 = std::max(max_edge2,
                                 mesh.edge_vector(t[i], t[(i + 1) % 3]).squaredNorm());
        }
    std::size_t ti = 0;
    for (const auto& t : mesh.triangles) {
        const Eigen::Vector3d e1 = mesh.edge_vector(t[0], t[1]);
        const Eigen::Vector3d e2 = mesh.edge_vector(t[0], t[2]);
        const double area = 0.5 * e1.cross(e2).norm();
        if (area <= 1e-10 * max_edge2)
            throw std::invalid_argument("mesh: degenerate triangle " + std::to_string(ti) +
                                        " (area " + std::to_string(area) + ")");
        ++ti;
    }
    // edge-graph connectivity
    std::vector<std::vector<int>> adj(V);
    for (const auto& t : mesh.triangles)
        for (int i = 0; i < 3; ++i) {
            adj[t[i]].push_back(t[(i + 1) % 3]);
            adj[t[(i + 1) % 3]].push_back(t[i]);
        }
    std::vector<char> seen(V, 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    int count = 1;
    while (!bfs.empty()) {
        const int v = bfs.front();
        bfs.pop();
        for (int w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                bfs.push(w);
            }
    }
    if (count != V) throw std::invalid_argument("mesh: edge graph is not connected");
}

// ---------------------------------------------------------------- loaders --

inline Mesh load_off(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_off: cannot open " + path);
    std::string tok;
    in >> tok;
    if (tok != "OFF") throw std::runtime_error("load_off: missing OFF header in " + path);
    std::size_t nv = 0, nf = 0, ne = 0;
    in >> nv >> nf >> ne;
    Mesh mesh;
    mesh.vertices.resize(nv);
    for (std::size_t i = 0; i < nv; ++i)
        in >> mesh.vertices[i](0) >> mesh.vertices[i](1) >> mesh.vertices[i](2);
    for (std::size_t i = 0; i < nf; ++i) {
        int deg = 0;
        in >> deg;
        if (deg != 3)
            throw std::runtime_error("load_off: only triangle faces supported (face " +
                                     std::to_string(i) + " has " + std::to_string(deg) + " vertices)");
        std::array<int, 3> t{};
        in >> t[0] >> t[1] >> t[2];
        mesh.triangles.push_back(t);
    }
    if (!in) throw std::runtime_error("load_off: truncated file " + path);
    validate_mesh(mesh);
    return mesh;
}

inline Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);
    Mesh mesh;
    std::string line;
    auto face_index = [](const std::string& s) {
        return std::stoi(s.substr(0, s.find('/')));
    };
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "v") {
            Eigen::Vector3d v;
            ls >> v(0) >> v(1) >> v(2);
            mesh.vertices.push_back(v);
        } else if (key == "f") {
            std::vector<int> idx;
            std::string s;
            while (ls >> s) idx.push_back(face_index(s));
            if (idx.size() != 3)
                throw std::runtime_error("load_obj: only triangle faces supported in " + path);
            mesh.triangles.push_back({idx[0] - 1, idx[1] - 1, idx[2] - 1});
        }
    }
    validate_mesh(mesh);
    return mesh;
}

inline void save_off(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_off: cannot open " + path);
    out << "OFF\n" << mesh.n_vertices() << " " << mesh.n_triangles() << " 0\n";
    out.precision(17);
    for (const auto& v : mesh.vertices) out << v(0) << " " << v(1) << " " << v(2) << "\n";
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

// ------------------------------------------------------------- generators --

// unit icosphere: icosahedron subdivided `level` times, vertices on S^2
inline Mesh make_icosphere(int level) {
    if (level < 0 || level > 7) throw std::invalid_argument("make_icosphere: level out of range");
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    std::vector<Eigen::Vector3d> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int s = 0; s < level; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Eigen::Vector3d m = (verts[a] + verts[b]).normalized();
            verts.push_back(m);
            const int id = static_cast<int>(verts.size()) - 1;
            midpoint[key] = id;
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        faces = std::move(next);
    }
    Mesh mesh;
    mesh.vertices = std::move(verts);
    mesh.triangles = std::move(faces);
    validate_mesh(mesh);
    return mesh;
}

// flat torus [0,Lx)×[0,Ly) as an nx×ny grid with diagonal splits
inline Mesh make_grid_torus(int nx, int ny, double Lx, double Ly) {
    if (nx < 3 || ny < 3) throw std::invalid_argument("make_grid_torus: grid too small");
    if (Lx <= 0 || Ly <= 0) throw std::invalid_argument("make_grid_torus: side lengths must be positive");
    Mesh mesh;
    mesh.periodic_box = {{Lx, Ly}};
    const double hx = Lx / nx, hy = Ly / ny;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            mesh.vertices.push_back({i * hx, j * hy, 0.0});
    auto id = [&](int i, int j) { return ((j % ny + ny) % ny) * nx + ((i % nx + nx) % nx); };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    validate_mesh(mesh);
    return mesh;
}

} // namespace hke
