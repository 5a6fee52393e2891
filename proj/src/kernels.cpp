#include "temnn/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef TEMNN_USE_OPENMP
#include <omp.h>
#endif

namespace temnn::kernels {

int max_threads() {
#ifdef TEMNN_USE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

inline void matmul_row(const double* a, int k, const double* b, int m, double* c_row) {
    std::memset(c_row, 0, sizeof(double) * m);
    for (int p = 0; p < k; ++p) {
        double av = a[p];
        const double* brow = b + static_cast<size_t>(p) * m;
        for (int j = 0; j < m; ++j) c_row[j] += av * brow[j];
    }
}

}  // namespace

void matmul_serial(const double* a, int n, int k, const double* b, int m, double* c) {
    for (int i = 0; i < n; ++i)
        matmul_row(a + static_cast<size_t>(i) * k, k, b, m, c + static_cast<size_t>(i) * m);
}

void matmul(const double* a, int n, int k, const double* b, int m, double* c) {
#ifdef TEMNN_USE_OPENMP
#pragma omp parallel for schedule(static) if (n > 16)
#endif
    for (int i = 0; i < n; ++i)
        matmul_row(a + static_cast<size_t>(i) * k, k, b, m, c + static_cast<size_t>(i) * m);
}

void matmul_tn_serial(const double* a, int n, int k, const double* b, int m, double* c) {
    for (int i = 0; i < k; ++i) {
        double* crow = c + static_cast<size_t>(i) * m;
        std::memset(crow, 0, sizeof(double) * m);
        for (int r = 0; r < n; ++r) {
            double av = a[static_cast<size_t>(r) * k + i];
            const double* brow = b + static_cast<size_t>(r) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_tn(const double* a, int n, int k, const double* b, int m, double* c) {
#ifdef TEMNN_USE_OPENMP
#pragma omp parallel for schedule(static) if (k > 16)
#endif
    for (int i = 0; i < k; ++i) {
        double* crow = c + static_cast<size_t>(i) * m;
        std::memset(crow, 0, sizeof(double) * m);
        for (int r = 0; r < n; ++r) {
            double av = a[static_cast<size_t>(r) * k + i];
            const double* brow = b + static_cast<size_t>(r) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_serial(const double* a, int n, int m, const double* b, int k, double* c) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<size_t>(i) * m;
        double* crow = c + static_cast<size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<size_t>(j) * m;
            double s = 0.0;
            for (int p = 0; p < m; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void matmul_nt(const double* a, int n, int m, const double* b, int k, double* c) {
#ifdef TEMNN_USE_OPENMP
#pragma omp parallel for schedule(static) if (n > 16)
#endif
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<size_t>(i) * m;
        double* crow = c + static_cast<size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<size_t>(j) * m;
            double s = 0.0;
            for (int p = 0; p < m; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

ScatterPlan make_scatter_plan(const std::vector<int>& idx, int out_rows) {
    ScatterPlan plan;
    plan.out_rows = out_rows;
    plan.starts.assign(out_rows + 1, 0);
    for (int d : idx) {
        if (d < 0 || d >= out_rows) throw error("scatter_add: index out of range");
        ++plan.starts[d + 1];
    }
    for (int d = 0; d < out_rows; ++d) plan.starts[d + 1] += plan.starts[d];
    plan.src.resize(idx.size());
    std::vector<int> cursor(plan.starts.begin(), plan.starts.end() - 1);
    // source rows visited ascending, so each group lists sources ascending
    for (int r = 0; r < static_cast<int>(idx.size()); ++r) plan.src[cursor[idx[r]]++] = r;
    return plan;
}

namespace {

inline void scatter_row(const ScatterPlan& plan, const double* x, int cols, double* out, int d) {
    double* orow = out + static_cast<size_t>(d) * cols;
    std::memset(orow, 0, sizeof(double) * cols);
    for (int s = plan.starts[d]; s < plan.starts[d + 1]; ++s) {
        const double* xrow = x + static_cast<size_t>(plan.src[s]) * cols;
        for (int j = 0; j < cols; ++j) orow[j] += xrow[j];
    }
}

}  // namespace

void scatter_add_serial(const ScatterPlan& plan, const double* x, int cols, double* out) {
    for (int d = 0; d < plan.out_rows; ++d) scatter_row(plan, x, cols, out, d);
}

void scatter_add(const ScatterPlan& plan, const double* x, int cols, double* out) {
#ifdef TEMNN_USE_OPENMP
#pragma omp parallel for schedule(static) if (plan.out_rows > 16)
#endif
    for (int d = 0; d < plan.out_rows; ++d) scatter_row(plan, x, cols, out, d);
}

bool ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& v1,
                  const Vec3& v2, double& t_out) {
    // Moller-Trumbore with inclusive edge tests, so rays through shared mesh
    // edges or vertices register on every adjacent face. The determinant
    // cutoff is relative to the edge scale: a ray lying in the triangle's
    // plane must stay a miss no matter how the mesh is posed.
    constexpr double kDetEps = 1e-12;
    constexpr double kBaryEps = 1e-12;
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 h = cross(dir, e2);
    const double det = dot(e1, h);
    if (det * det < kDetEps * kDetEps * dot(e1, e1) * dot(e2, e2)) return false;
    const double inv = 1.0 / det;
    const Vec3 s = origin - v0;
    const double u = inv * dot(s, h);
    if (u < -kBaryEps || u > 1.0 + kBaryEps) return false;
    const Vec3 q = cross(s, e1);
    const double v = inv * dot(dir, q);
    if (v < -kBaryEps || u + v > 1.0 + kBaryEps) return false;
    t_out = inv * dot(e2, q);
    return true;
}

namespace {

inline RayHit cast_one(const Mesh& mesh, const Vec3& origin, const Vec3& dir, int exclude_node,
                       double t_min) {
    RayHit best;
    const auto& faces = mesh.faces;
    for (int k = 0; k < static_cast<int>(faces.size()); ++k) {
        const auto& f = faces[k];
        if (exclude_node >= 0 && (f[0] == exclude_node || f[1] == exclude_node || f[2] == exclude_node))
            continue;
        double t;
        if (!ray_triangle(origin, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                          mesh.vertices[f[2]], t))
            continue;
        if (t <= t_min) continue;
        if (!best.hit() || t < best.t) best = {k, t};
    }
    return best;
}

}  // namespace

std::vector<RayHit> raycast_first_hit_serial(const Mesh& mesh, const RaySet& rays, double t_min) {
    std::vector<RayHit> hits(rays.origins.size());
    for (int r = 0; r < static_cast<int>(rays.origins.size()); ++r)
        hits[r] = cast_one(mesh, rays.origins[r], rays.directions[r], rays.exclude_node[r], t_min);
    return hits;
}

std::vector<RayHit> raycast_first_hit(const Mesh& mesh, const RaySet& rays, double t_min) {
    std::vector<RayHit> hits(rays.origins.size());
    const int n = static_cast<int>(rays.origins.size());
#ifdef TEMNN_USE_OPENMP
#pragma omp parallel for schedule(static) if (n > 8)
#endif
    for (int r = 0; r < n; ++r)
        hits[r] = cast_one(mesh, rays.origins[r], rays.directions[r], rays.exclude_node[r], t_min);
    return hits;
}

}  // namespace temnn::kernels
