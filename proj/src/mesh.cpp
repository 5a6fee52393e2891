#include "temnn/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace temnn {

Vec3 Mesh::bbox_min() const {
    if (vertices.empty()) throw error("bbox_min: empty mesh");
    Vec3 lo = vertices[0];
    for (const Vec3& v : vertices) {
        lo.x = std::min(lo.x, v.x);
        lo.y = std::min(lo.y, v.y);
        lo.z = std::min(lo.z, v.z);
    }
    return lo;
}

Vec3 Mesh::bbox_max() const {
    if (vertices.empty()) throw error("bbox_max: empty mesh");
    Vec3 hi = vertices[0];
    for (const Vec3& v : vertices) {
        hi.x = std::max(hi.x, v.x);
        hi.y = std::max(hi.y, v.y);
        hi.z = std::max(hi.z, v.z);
    }
    return hi;
}

double Mesh::bbox_diagonal() const { return norm(bbox_max() - bbox_min()); }

Mesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
    Mesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.faces = std::move(faces);
    const int nv = mesh.num_vertices();

    for (size_t k = 0; k < mesh.faces.size(); ++k) {
        const auto& f = mesh.faces[k];
        for (int i : f)
            if (i < 0 || i >= nv)
                throw error("face " + std::to_string(k) + ": vertex index " + std::to_string(i) +
                            " out of range (mesh has " + std::to_string(nv) + " vertices)");
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw error("face " + std::to_string(k) + ": repeated vertex index");
    }

    mesh.edges.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces)
        for (int i = 0; i < 3; ++i) {
            int a = f[i], b = f[(i + 1) % 3];
            if (a > b) std::swap(a, b);
            mesh.edges.push_back({a, b});
        }
    std::sort(mesh.edges.begin(), mesh.edges.end());
    mesh.edges.erase(std::unique(mesh.edges.begin(), mesh.edges.end()), mesh.edges.end());

    mesh.vertex_faces.assign(nv, {});
    for (size_t k = 0; k < mesh.faces.size(); ++k)
        for (int i : mesh.faces[k]) mesh.vertex_faces[i].push_back(static_cast<int>(k));

    return mesh;
}

namespace {

struct LineReader {
    std::istringstream in;
    int line_no = 0;
    explicit LineReader(const std::string& s) : in(s) {}

    // next non-empty, non-comment line; returns false at EOF
    bool next(std::string& out) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            size_t h = line.find('#');
            if (h != std::string::npos) line = line.substr(0, h);
            size_t b = line.find_first_not_of(" \t\r\n");
            if (b == std::string::npos) continue;
            out = line;
            return true;
        }
        return false;
    }
};

[[noreturn]] void parse_fail(int line_no, const std::string& what) {
    throw error("parse error at line " + std::to_string(line_no) + ": " + what);
}

Mesh parse_off(const std::string& content) {
    LineReader rd(content);
    std::string line;
    if (!rd.next(line)) parse_fail(rd.line_no, "empty file");
    {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag != "OFF") parse_fail(rd.line_no, "expected OFF header, got '" + tag + "'");
    }
    if (!rd.next(line)) parse_fail(rd.line_no, "missing count line");
    long nv = 0, nf = 0, ne = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> nv >> nf >> ne)) parse_fail(rd.line_no, "malformed count line '" + line + "'");
        if (nv < 0 || nf < 0) parse_fail(rd.line_no, "negative counts");
    }
    std::vector<Vec3> vertices;
    vertices.reserve(nv);
    for (long i = 0; i < nv; ++i) {
        if (!rd.next(line)) parse_fail(rd.line_no, "unexpected EOF in vertex list");
        std::istringstream ls(line);
        Vec3 v;
        if (!(ls >> v.x >> v.y >> v.z)) parse_fail(rd.line_no, "malformed vertex '" + line + "'");
        vertices.push_back(v);
    }
    std::vector<std::array<int, 3>> faces;
    faces.reserve(nf);
    for (long k = 0; k < nf; ++k) {
        if (!rd.next(line)) parse_fail(rd.line_no, "unexpected EOF in face list");
        std::istringstream ls(line);
        int cnt = 0;
        if (!(ls >> cnt)) parse_fail(rd.line_no, "malformed face '" + line + "'");
        if (cnt != 3) parse_fail(rd.line_no, "non-triangle face with " + std::to_string(cnt) + " vertices");
        std::array<int, 3> f{};
        if (!(ls >> f[0] >> f[1] >> f[2])) parse_fail(rd.line_no, "malformed face '" + line + "'");
        for (int idx : f)
            if (idx < 0 || idx >= nv)
                parse_fail(rd.line_no, "vertex index " + std::to_string(idx) + " out of range");
        faces.push_back(f);
    }
    return make_mesh(std::move(vertices), std::move(faces));
}

Mesh parse_obj(const std::string& content) {
    LineReader rd(content);
    std::string line;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    while (rd.next(line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) parse_fail(rd.line_no, "malformed vertex '" + line + "'");
            vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string ref;
            while (ls >> ref) {
                // accept "i", "i/t", "i//n", "i/t/n"; only the vertex index is used
                size_t slash = ref.find('/');
                std::string head = slash == std::string::npos ? ref : ref.substr(0, slash);
                int i = 0;
                try {
                    i = std::stoi(head);
                } catch (...) {
                    parse_fail(rd.line_no, "malformed face reference '" + ref + "'");
                }
                if (i < 1 || i > static_cast<int>(vertices.size()))
                    parse_fail(rd.line_no, "vertex index " + std::to_string(i) + " out of range");
                idx.push_back(i - 1);  // OBJ is 1-based
            }
            if (idx.size() != 3)
                parse_fail(rd.line_no, "non-triangle face with " + std::to_string(idx.size()) + " vertices");
            faces.push_back({idx[0], idx[1], idx[2]});
        }
        // other record types (vn, vt, g, o, s, usemtl, ...) carry no geometry; skip
    }
    return make_mesh(std::move(vertices), std::move(faces));
}

}  // namespace

Mesh parse_mesh(const std::string& content, MeshFormat format) {
    return format == MeshFormat::off ? parse_off(content) : parse_obj(content);
}

MeshFormat format_from_path(const std::string& path) {
    auto ends_with = [&](const char* suf) {
        std::string s = path;
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        std::string e(suf);
        return s.size() >= e.size() && s.compare(s.size() - e.size(), e.size(), e) == 0;
    };
    if (ends_with(".off")) return MeshFormat::off;
    if (ends_with(".obj")) return MeshFormat::obj;
    throw error("cannot infer mesh format from path '" + path + "' (expected .off or .obj)");
}

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open mesh file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_mesh(ss.str(), format_from_path(path));
}

std::string write_off(const Mesh& mesh) {
    std::ostringstream out;
    out << "OFF\n" << mesh.num_vertices() << " " << mesh.num_faces() << " 0\n";
    char buf[96];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& f : mesh.faces) out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    return out.str();
}

WatertightReport validate_watertight(const Mesh& mesh) {
    WatertightReport rep;
    std::vector<int> incidence(mesh.edges.size(), 0);
    auto edge_index = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        std::array<int, 2> key{a, b};
        auto it = std::lower_bound(mesh.edges.begin(), mesh.edges.end(), key);
        return static_cast<int>(it - mesh.edges.begin());
    };
    for (const auto& f : mesh.faces)
        for (int i = 0; i < 3; ++i) ++incidence[edge_index(f[i], f[(i + 1) % 3])];
    for (size_t e = 0; e < mesh.edges.size(); ++e) {
        if (incidence[e] == 1) rep.boundary_edges.push_back(mesh.edges[e]);
        else if (incidence[e] > 2) rep.non_manifold_edges.push_back(mesh.edges[e]);
    }
    rep.watertight = rep.boundary_edges.empty() && rep.non_manifold_edges.empty() && !mesh.faces.empty();
    return rep;
}

std::vector<Vec3> face_normals(const Mesh& mesh) {
    std::vector<Vec3> out(mesh.faces.size());
    for (size_t k = 0; k < mesh.faces.size(); ++k) {
        const auto& f = mesh.faces[k];
        Vec3 c = cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                       mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        double n = norm(c);
        if (n <= 1e-12)
            throw error("degenerate face " + std::to_string(k) + " (zero area)");
        out[k] = c / n;
    }
    return out;
}

std::vector<Vec3> node_normals(const Mesh& mesh, const std::vector<Vec3>& face_normals) {
    std::vector<Vec3> out(mesh.vertices.size());
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const auto& inc = mesh.vertex_faces[i];
        if (inc.empty()) throw error("vertex " + std::to_string(i) + " has no incident face");
        Vec3 sum{};
        for (int k : inc) sum += face_normals[k];
        Vec3 mean = sum / static_cast<double>(inc.size());
        double n = norm(mean);
        if (n < 1e-9)
            throw error("vertex " + std::to_string(i) + ": incident face normals cancel");
        out[i] = mean / n;
    }
    return out;
}

NormalField compute_normals(const Mesh& mesh) {
    NormalField nf;
    nf.face = face_normals(mesh);
    nf.node = node_normals(mesh, nf.face);
    return nf;
}

}  // namespace temnn
