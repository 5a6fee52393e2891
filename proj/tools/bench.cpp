#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "temnn/kernels.hpp"
#include "temnn/random.hpp"
#include "temnn/synth.hpp"

using namespace temnn;
namespace chrono = std::chrono;

namespace {

double ms_since(chrono::high_resolution_clock::time_point t0) {
    return chrono::duration<double, std::milli>(chrono::high_resolution_clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = chrono::high_resolution_clock::now();
        f();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-24s serial %8.2f ms   omp %8.2f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", kernels::max_threads());

    {
        const int n = 4096, k = 96, m = 64;
        std::mt19937_64 rng(7);
        std::vector<double> a(static_cast<size_t>(n) * k), b(static_cast<size_t>(k) * m);
        for (double& v : a) v = rnd::gaussian(rng);
        for (double& v : b) v = rnd::gaussian(rng);
        std::vector<double> c1(static_cast<size_t>(n) * m), c2(c1.size());
        double ts = time_best_of(5, [&] { kernels::matmul_serial(a.data(), n, k, b.data(), m, c1.data()); });
        double tp = time_best_of(5, [&] { kernels::matmul(a.data(), n, k, b.data(), m, c2.data()); });
        report("matmul 4096x96x64", ts, tp);
        if (c1 != c2) std::printf("  MISMATCH between serial and parallel matmul!\n");
    }

    {
        const int rows = 200000, cols = 32, out_rows = 30000;
        std::mt19937_64 rng(11);
        std::vector<int> idx(rows);
        for (int& i : idx) i = static_cast<int>(rng() % out_rows);
        kernels::ScatterPlan plan = kernels::make_scatter_plan(idx, out_rows);
        std::vector<double> x(static_cast<size_t>(rows) * cols);
        for (double& v : x) v = rnd::gaussian(rng);
        std::vector<double> o1(static_cast<size_t>(out_rows) * cols), o2(o1.size());
        double ts = time_best_of(5, [&] { kernels::scatter_add_serial(plan, x.data(), cols, o1.data()); });
        double tp = time_best_of(5, [&] { kernels::scatter_add(plan, x.data(), cols, o2.data()); });
        report("scatter_add 200k rows", ts, tp);
        if (o1 != o2) std::printf("  MISMATCH between serial and parallel scatter_add!\n");
    }

    {
        ShapeSpec spec;
        spec.family = ShapeFamily::hollow_box;
        spec.res_x = 6;
        spec.res_y = 6;
        spec.res_z = 5;
        GeneratedShape shape = gen_shape(spec);
        NormalField normals = compute_normals(shape.mesh);
        kernels::RaySet rays;
        rays.origins = shape.mesh.vertices;
        rays.directions.resize(shape.mesh.num_vertices());
        rays.exclude_node.resize(shape.mesh.num_vertices());
        for (int i = 0; i < shape.mesh.num_vertices(); ++i) {
            rays.directions[i] = normals.node[i] * -1.0;
            rays.exclude_node[i] = i;
        }
        double eps = 1e-9 * shape.mesh.bbox_diagonal();
        std::vector<kernels::RayHit> h1, h2;
        double ts = time_best_of(5, [&] { h1 = kernels::raycast_first_hit_serial(shape.mesh, rays, eps); });
        double tp = time_best_of(5, [&] { h2 = kernels::raycast_first_hit(shape.mesh, rays, eps); });
        std::printf("raycast: %d rays x %d faces\n", shape.mesh.num_vertices(),
                    shape.mesh.num_faces());
        report("raycast first hit", ts, tp);
        for (size_t i = 0; i < h1.size(); ++i)
            if (h1[i].face != h2[i].face || h1[i].t != h2[i].t) {
                std::printf("  MISMATCH between serial and parallel raycast!\n");
                break;
            }
    }
    return 0;
}
