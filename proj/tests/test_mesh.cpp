#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "temnn/mesh.hpp"
#include "temnn/random.hpp"

using namespace temnn;

namespace {

Mesh unit_cube() {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    // 12 triangles, outward winding
    std::vector<std::array<int, 3>> f = {
        {0, 2, 1}, {0, 3, 2},  // bottom (-z)
        {4, 5, 6}, {4, 6, 7},  // top (+z)
        {0, 1, 5}, {0, 5, 4},  // -y
        {3, 7, 6}, {3, 6, 2},  // +y
        {0, 4, 7}, {0, 7, 3},  // -x
        {1, 2, 6}, {1, 6, 5},  // +x
    };
    return make_mesh(v, f);
}

}  // namespace

TEST_CASE("parse minimal OFF") {
    Mesh m = parse_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", MeshFormat::off);
    CHECK(m.num_vertices() == 3);
    CHECK(m.num_faces() == 1);
    CHECK(m.num_edges() == 3);
}

TEST_CASE("parse OFF with comments and CRLF") {
    Mesh m = parse_mesh("OFF\r\n# comment\n3 1 0\r\n0 0 0\n1 0 0\n0 1 0\n\n3 0 1 2\n",
                        MeshFormat::off);
    CHECK(m.num_vertices() == 3);
}

TEST_CASE("OFF errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n", MeshFormat::off),
                         doctest::Contains("line 6"), error);
    CHECK_THROWS_WITH_AS(parse_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", MeshFormat::off),
                         doctest::Contains("out of range"), error);
    CHECK_THROWS_WITH_AS(parse_mesh("PLY\n", MeshFormat::off), doctest::Contains("OFF header"),
                         error);
}

TEST_CASE("parse OBJ subset") {
    Mesh m = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\ns off\nf 1 2 3\n", MeshFormat::obj);
    CHECK(m.num_vertices() == 3);
    CHECK(m.num_faces() == 1);
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});  // 1-based converted

    CHECK_THROWS_WITH_AS(
        parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n", MeshFormat::obj),
        doctest::Contains("non-triangle"), error);
    Mesh slashed = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n", MeshFormat::obj);
    CHECK(slashed.num_faces() == 1);
}

TEST_CASE("cube edge count matches brute-force enumeration") {
    Mesh cube = unit_cube();
    CHECK(cube.num_edges() == oracles::count_edges_bruteforce(cube.faces));
    CHECK(cube.num_edges() == 18);
}

TEST_CASE("derived edge set has no duplicates and is sorted") {
    Mesh cube = unit_cube();
    for (size_t e = 1; e < cube.edges.size(); ++e) CHECK(cube.edges[e - 1] < cube.edges[e]);
    for (const auto& e : cube.edges) CHECK(e[0] < e[1]);
}

TEST_CASE("watertight validation") {
    Mesh tri = parse_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", MeshFormat::off);
    WatertightReport r1 = validate_watertight(tri);
    CHECK_FALSE(r1.watertight);
    CHECK(r1.boundary_edges.size() == 3);

    Mesh cube = unit_cube();
    WatertightReport r2 = validate_watertight(cube);
    CHECK(r2.watertight);
    CHECK(oracles::watertight_bruteforce(cube.faces));

    // cube with one face removed: 3 boundary edges
    auto faces = cube.faces;
    faces.pop_back();
    Mesh open_cube = make_mesh(cube.vertices, faces);
    WatertightReport r3 = validate_watertight(open_cube);
    CHECK_FALSE(r3.watertight);
    CHECK(r3.boundary_edges.size() == 3);
    CHECK_FALSE(oracles::watertight_bruteforce(open_cube.faces));
}

TEST_CASE("face normals") {
    Mesh m = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
    auto fn = face_normals(m);
    CHECK(fn[0].x == doctest::Approx(0));
    CHECK(fn[0].y == doctest::Approx(0));
    CHECK(fn[0].z == doctest::Approx(1));

    Mesh rev = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 2, 1}});
    CHECK(face_normals(rev)[0].z == doctest::Approx(-1));

    // cross product by hand: (1,0,0)-(0,0,0) x (0,0,1)-(0,0,0) = (0,-1,0)
    Mesh slant = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 0, 1}}, {{0, 1, 2}});
    auto sn = face_normals(slant)[0];
    CHECK(sn.x == doctest::Approx(0));
    CHECK(sn.y == doctest::Approx(-1));
    CHECK(sn.z == doctest::Approx(0));
}

TEST_CASE("degenerate face rejected by name") {
    Mesh m = make_mesh({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{0, 1, 2}});
    CHECK_THROWS_WITH_AS(face_normals(m), doctest::Contains("face 0"), error);
}

TEST_CASE("node normals") {
    // two faces meeting at a right angle: normals (0,0,1) and (0,1,0)
    Mesh m = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 1, 2}, {0, 3, 1}});
    auto fn = face_normals(m);
    CHECK(fn[1].y == doctest::Approx(1.0));
    auto nn = node_normals(m, fn);
    Vec3 expect = normalized(Vec3{0, 1, 1});
    CHECK(nn[0].x == doctest::Approx(expect.x));
    CHECK(nn[0].y == doctest::Approx(expect.y));
    CHECK(nn[0].z == doctest::Approx(expect.z));
    for (const Vec3& v : nn) CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cube corner node normal by hand enumeration") {
    Mesh cube = unit_cube();
    auto fn = face_normals(cube);
    auto nn = node_normals(cube, fn);
    // corner 0 touches faces {0,1,4,5,8,9}: two -z, two -y, two -x
    Vec3 sum{};
    for (int k : cube.vertex_faces[0]) sum += fn[k];
    Vec3 expect = normalized(sum / static_cast<double>(cube.vertex_faces[0].size()));
    CHECK(nn[0].x == doctest::Approx(expect.x).epsilon(1e-12));
    CHECK(nn[0].y == doctest::Approx(expect.y).epsilon(1e-12));
    CHECK(nn[0].z == doctest::Approx(expect.z).epsilon(1e-12));
    Vec3 diag = normalized(Vec3{-1, -1, -1});
    CHECK(dot(nn[0], diag) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("isolated vertex is an error") {
    Mesh m = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}}, {{0, 1, 2}});
    auto fn = face_normals(m);
    CHECK_THROWS_WITH_AS(node_normals(m, fn), doctest::Contains("vertex 3"), error);
}

TEST_CASE("cancelling normals are an error naming the vertex") {
    // two coincident triangles with opposite winding share all vertices
    Mesh m = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 1}});
    auto fn = face_normals(m);
    CHECK_THROWS_WITH_AS(node_normals(m, fn), doctest::Contains("cancel"), error);
}

TEST_CASE("property: rotating vertices rotates face normals exactly") {
    Mesh cube = unit_cube();
    auto fn = face_normals(cube);
    std::mt19937_64 rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        Mat3 q = rnd::random_orthogonal(rng);
        std::vector<Vec3> rotated(cube.vertices.size());
        for (size_t i = 0; i < rotated.size(); ++i) rotated[i] = q.mul(cube.vertices[i]);
        Mesh rot = make_mesh(rotated, cube.faces);
        auto fn_rot = face_normals(rot);
        double worst = 0;
        for (size_t k = 0; k < fn.size(); ++k) {
            Vec3 expect = q.mul(fn[k]);
            if (q.det() < 0) expect = expect * -1.0;  // winding flips under reflection
            worst = std::max(worst, norm(fn_rot[k] - expect));
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("OFF writer round-trips bit-exactly") {
    Mesh cube = unit_cube();
    for (Vec3& v : cube.vertices) v = v * (1.0 / 3.0) + Vec3{0.1234567890123456, -7.5e-13, 2e17};
    Mesh back = parse_mesh(write_off(cube), MeshFormat::off);
    REQUIRE(back.num_vertices() == cube.num_vertices());
    for (int i = 0; i < cube.num_vertices(); ++i) CHECK(back.vertices[i] == cube.vertices[i]);
}
