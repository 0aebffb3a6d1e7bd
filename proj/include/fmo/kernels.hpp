#pragma once

#include <span>
#include <vector>

#include "fmo/sparse.hpp"

namespace fmo::kernels {

/// Number of threads the parallel kernels may use. Resolved once from the
/// FMO_THREADS environment variable (0 or unset = all hardware threads);
/// set_threads overrides it, e.g. from the CLI or tests.
int threads();
void set_threads(int n);

/// Serial reference kernels. Plain textbook loops, kept as the ground truth
/// the parallel variants are tested and benchmarked against.
namespace serial {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> out);
void spmv_transpose(const SparseMatrix& a, std::span<const double> r, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double norm2sq(std::span<const double> a);
double norm2(std::span<const double> a);
// out = alpha*x + beta*y
void axpby(double alpha, std::span<const double> x, double beta, std::span<const double> y,
           std::span<double> out);
void clamp_nonneg(std::span<double> x);

}  // namespace serial

/// OpenMP kernels. Reductions use fixed-size blocks summed in block order,
/// so results are bit-identical for any thread count.
namespace parallel {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> out);
void spmv_transpose(const SparseMatrix& a, std::span<const double> r, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double norm2sq(std::span<const double> a);
double norm2(std::span<const double> a);
void axpby(double alpha, std::span<const double> x, double beta, std::span<const double> y,
           std::span<double> out);
void clamp_nonneg(std::span<double> x);

}  // namespace parallel

// Dispatching entry points used by the solvers: parallel when the problem is
// large enough to amortize thread startup, serial otherwise.
void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> out);
void spmv_transpose(const SparseMatrix& a, std::span<const double> r, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double norm2sq(std::span<const double> a);
double norm2(std::span<const double> a);
void axpby(double alpha, std::span<const double> x, double beta, std::span<const double> y,
           std::span<double> out);
void clamp_nonneg(std::span<double> x);

}  // namespace fmo::kernels
