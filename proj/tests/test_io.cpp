#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hke/mesh.hpp"
#include "hke/space.hpp"
#include "hke/space_io.hpp"

using namespace hke;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / "hke_io_test";
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("OFF round trip") {
    const Mesh m = make_icosphere(1);
    const fs::path p = scratch() / "ico.off";
    save_off(m, p.string());
    const Mesh back = load_off(p.string());
    REQUIRE(back.n_vertices() == m.n_vertices());
    REQUIRE(back.n_triangles() == m.n_triangles());
    for (std::size_t i = 0; i < m.n_vertices(); ++i)
        CHECK((back.vertices[i] - m.vertices[i]).norm() < 1e-15);
}

TEST_CASE("OBJ loader handles slash-form faces, rejects polygons") {
    const fs::path p = scratch() / "tri.obj";
    {
        std::ofstream out(p);
        out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n"
            << "f 1/1 2/2 3/3\nf 2//1 4//2 3//3\n";
    }
    const Mesh m = load_obj(p.string());
    REQUIRE(m.n_vertices() == 4);
    REQUIRE(m.n_triangles() == 2);

    const fs::path q = scratch() / "quad.obj";
    {
        std::ofstream out(q);
        out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    }
    CHECK_THROWS(load_obj(q.string()));
}

TEST_CASE("degenerate and disconnected meshes are rejected") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    m.triangles = {{0, 1, 2}};  // collinear
    CHECK_THROWS_AS(validate_mesh(m), std::invalid_argument);

    Mesh two;
    two.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}, {6, 5, 5}, {5, 6, 5}};
    two.triangles = {{0, 1, 2}, {3, 4, 5}};
    CHECK_THROWS_AS(validate_mesh(two), std::invalid_argument);
}

TEST_CASE("space JSON cache round-trips model spaces") {
    const auto X = SpectralSpace::build_circle(64, 12);
    const fs::path p = scratch() / "circle.json";
    export_space_json(X, p.string());
    const auto Y = import_space_json(p.string());
    CHECK(Y.kind == SpaceKind::circle);
    CHECK(Y.dim == X.dim);
    CHECK((Y.eigenvalues - X.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
    CHECK((Y.phi - X.phi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((Y.mass - X.mass).cwiseAbs().maxCoeff() == 0.0);
    // distances recomputed from the closed form
    for (int p2 : {0, 10, 33})
        CHECK(Y.distance(3, p2) == Catch::Approx(X.distance(3, p2)).margin(1e-15));
    // closed-form evaluation still works (modes restored)
    Eigen::VectorXd c(1);
    c << 0.7;
    CHECK(Y.eval_phi(1, c) == Catch::Approx(X.eval_phi(1, c)));
}

TEST_CASE("space JSON cache round-trips mesh spaces with edge graph") {
    const auto X = SpectralSpace::build_from_mesh(make_icosphere(2), 6);
    const fs::path p = scratch() / "mesh.json";
    export_space_json(X, p.string());
    const auto Y = import_space_json(p.string());
    CHECK(Y.kind == SpaceKind::mesh);
    CHECK((Y.eigenvalues - X.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
    for (int q : {1, 50, 120}) CHECK(Y.distance(0, q) == Catch::Approx(X.distance(0, q)));
    const auto b = Y.ball_query(0, 0.5);
    const auto bx = X.ball_query(0, 0.5);
    CHECK(b.ids == bx.ids);
}

TEST_CASE("schema version is required and checked") {
    nlohmann::json j;
    j["kind"] = "circle";
    CHECK_THROWS_WITH(space_from_json(j), Catch::Matchers::ContainsSubstring("schema_version"));
    const auto X = SpectralSpace::build_circle(64, 6);
    nlohmann::json good = space_to_json(X);
    good["schema_version"] = 999;
    CHECK_THROWS_WITH(space_from_json(good),
                      Catch::Matchers::ContainsSubstring("schema_version"));
}
