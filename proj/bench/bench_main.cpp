// Benchmark comparing the serial reference kernels against the OpenMP
// variants, plus an end-to-end solve at both settings.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fmo/dosegen.hpp"
#include "fmo/kernels.hpp"
#include "fmo/solver.hpp"

using namespace fmo;
using clock_type = std::chrono::steady_clock;

namespace {

template <class F>
double time_ms(int reps, F&& f) {
    // warm-up
    f();
    const auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) f();
    const auto t1 = clock_type::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

// Large banded matrix standing in for a clinical-scale dose-influence map.
SparseMatrix synthetic_matrix(std::int64_t rows, std::int64_t cols, int per_row) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(rows * per_row));
    std::uint64_t state = 0x853c49e6748fea9bULL;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int k = 0; k < per_row; ++k) {
            state = state * 6364136223846793005ULL + 1442695040888963407ULL;
            const std::int64_t c =
                static_cast<std::int64_t>(state % static_cast<std::uint64_t>(cols));
            t.push_back({r, c, 1e-3 + static_cast<double>(state >> 40) * 1e-9});
        }
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

ProblemSpec bench_phantom() {
    PhantomSpec spec;
    spec.nx = 192;
    spec.ny = 192;
    spec.beam_angles_deg = {0, 52, 104, 156, 208, 260, 312};
    spec.beamlets_per_beam = 40;
    spec.lateral_sigma = 1.5;
    spec.lambda = 1e-8;
    PhantomStructure ptv;
    ptv.name = "ptv";
    ptv.kind = StructureKind::PTV;
    ptv.regions = {{Region::Shape::Disk, 96.0, 108.0, 26.0, 0.0, 0.0}};
    ptv.prescription = 81.0;
    PhantomStructure oar;
    oar.name = "oar";
    oar.kind = StructureKind::OAR;
    oar.regions = {{Region::Shape::Disk, 96.0, 70.0, 19.0, 0.0, 0.0}};
    DoseVolumeConstraint c;
    c.direction = ConstraintDirection::Upper;
    c.d = {25.0};
    c.p = 25.0;
    oar.constraints.push_back(c);
    spec.structures = {ptv, oar};
    return generate_phantom(spec);
}

}  // namespace

int main() {
    const auto big = synthetic_matrix(300000, 1024, 16);
    std::printf("kernel matrix: %lld x %lld, %.1fM nonzeros\n",
                static_cast<long long>(big.rows()), static_cast<long long>(big.cols()),
                static_cast<double>(big.nnz()) / 1e6);

    std::vector<double> x(static_cast<std::size_t>(big.cols()), 1.0);
    std::vector<double> y(static_cast<std::size_t>(big.rows()), 0.0);
    std::vector<double> r(static_cast<std::size_t>(big.rows()), 1.0);
    std::vector<double> xt(static_cast<std::size_t>(big.cols()), 0.0);
    std::vector<double> v(1 << 22, 1.00000001);

    struct Row {
        const char* name;
        double serial_ms;
        double parallel_ms;
    };
    std::vector<Row> rows;
    rows.push_back({"spmv", time_ms(50, [&] { kernels::serial::spmv(big, x, y); }),
                    time_ms(50, [&] { kernels::parallel::spmv(big, x, y); })});
    rows.push_back(
        {"spmv_transpose", time_ms(50, [&] { kernels::serial::spmv_transpose(big, r, xt); }),
         time_ms(50, [&] { kernels::parallel::spmv_transpose(big, r, xt); })});
    rows.push_back({"dot (4M)", time_ms(50, [&] { (void)kernels::serial::dot(v, v); }),
                    time_ms(50, [&] { (void)kernels::parallel::dot(v, v); })});
    rows.push_back({"axpby (4M)",
                    time_ms(50, [&] { kernels::serial::axpby(1.1, v, 0.9, v, v); }),
                    time_ms(50, [&] { kernels::parallel::axpby(1.1, v, 0.9, v, v); })});

    std::printf("\n%-16s %12s %12s %10s   (%d threads)\n", "kernel", "serial ms", "openmp ms",
                "speedup", kernels::threads());
    for (const auto& row : rows) {
        std::printf("%-16s %12.4f %12.4f %9.2fx\n", row.name, row.serial_ms, row.parallel_ms,
                    row.serial_ms / row.parallel_ms);
    }

    std::printf("\nbuilding 192x192 phantom, 7 beams x 40 beamlets...\n");
    const auto problem = bench_phantom();
    std::int64_t nnz = 0;
    for (std::size_t s = 0; s < structure_count(problem); ++s) nnz += matrix_at(problem, s).nnz();
    std::printf("%lld beamlets, %lld + %lld voxels, %lld nonzeros total\n",
                static_cast<long long>(problem.beamlet_count),
                static_cast<long long>(problem.ptvs[0].structure.voxel_count),
                static_cast<long long>(problem.oars[0].structure.voxel_count),
                static_cast<long long>(nnz));

    SolverConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.inner_tol = 1e-8;

    std::printf("\nend-to-end BCD solve (epsilon 1e-3):\n");
    const int hw = kernels::threads();
    kernels::set_threads(1);
    const auto t0 = clock_type::now();
    const auto serial_rep = run_bcd(problem, cfg);
    const double serial_s = std::chrono::duration<double>(clock_type::now() - t0).count();

    kernels::set_threads(hw);
    const auto t1 = clock_type::now();
    const auto parallel_rep = run_bcd(problem, cfg);
    const double parallel_s = std::chrono::duration<double>(clock_type::now() - t1).count();

    std::printf("%-16s %12.2fs   (%d outer iterations)\n", "1 thread", serial_s,
                serial_rep.outer_iters);
    std::printf("%-16s %12.2fs   (%d outer iterations, %.2fx)\n", "openmp", parallel_s,
                parallel_rep.outer_iters, serial_s / parallel_s);
    const double dg = std::fabs(serial_rep.g_history.back() - parallel_rep.g_history.back());
    std::printf("final objective difference between settings: %.3e\n", dg);
    return 0;
}
