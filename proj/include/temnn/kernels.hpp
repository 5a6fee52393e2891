#pragma once

#include <vector>

#include "temnn/geom.hpp"
#include "temnn/mesh.hpp"

// Data-parallel inner loops, each with an OpenMP version and a serial
// reference. Every output element is owned by exactly one iteration, so the
// parallel results are bit-identical to the serial ones for any thread count.
namespace temnn::kernels {

// C(n x m) = A(n x k) * B(k x m), row-major
void matmul(const double* a, int n, int k, const double* b, int m, double* c);
void matmul_serial(const double* a, int n, int k, const double* b, int m, double* c);

// C(k x m) = A(n x k)^T * B(n x m)
void matmul_tn(const double* a, int n, int k, const double* b, int m, double* c);
void matmul_tn_serial(const double* a, int n, int k, const double* b, int m, double* c);

// C(n x k) = A(n x m) * B(k x m)^T
void matmul_nt(const double* a, int n, int m, const double* b, int k, double* c);
void matmul_nt_serial(const double* a, int n, int m, const double* b, int k, double* c);

// Row accumulation out[idx[r]] += x[r]. The plan groups source rows by
// destination in ascending (destination, source) order; accumulation follows
// that canonical order, so results do not depend on scheduling.
struct ScatterPlan {
    int out_rows = 0;
    std::vector<int> starts;   // out_rows + 1 offsets into src
    std::vector<int> src;      // source rows, ascending within each group
};
ScatterPlan make_scatter_plan(const std::vector<int>& idx, int out_rows);

void scatter_add(const ScatterPlan& plan, const double* x, int cols, double* out);
void scatter_add_serial(const ScatterPlan& plan, const double* x, int cols, double* out);

// First ray-triangle hit per ray (Moller-Trumbore with inclusive edges).
// Faces incident to exclude_node[r] are skipped, as are hits with parameter
// t <= t_min. Ties on t keep the lowest face index.
struct RayHit {
    int face = -1;
    double t = 0.0;
    bool hit() const { return face >= 0; }
};

struct RaySet {
    std::vector<Vec3> origins;
    std::vector<Vec3> directions;   // unit
    std::vector<int> exclude_node;  // -1 to skip exclusion
};

// Intersection parameter of one ray with one triangle; returns false on miss.
bool ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& v1,
                  const Vec3& v2, double& t_out);

std::vector<RayHit> raycast_first_hit(const Mesh& mesh, const RaySet& rays, double t_min);
std::vector<RayHit> raycast_first_hit_serial(const Mesh& mesh, const RaySet& rays, double t_min);

int max_threads();

}  // namespace temnn::kernels
