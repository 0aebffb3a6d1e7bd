#include "fmo/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fmo::kernels {

namespace {

int resolve_threads_from_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("FMO_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::atomic<int> g_threads{-1};

// Reductions are summed block-by-block in index order; the block size fixes
// the summation tree independently of the thread count.
constexpr std::size_t kReductionBlock = 4096;
// Below these sizes the fork/join overhead outweighs the work and the serial
// path wins (measured on 2-core x86; conservative for wider machines).
constexpr std::int64_t kParallelNnzCutoff = 262144;
constexpr std::size_t kParallelLenCutoff = 262144;

}  // namespace

int threads() {
    int t = g_threads.load(std::memory_order_relaxed);
    if (t < 0) {
        t = resolve_threads_from_env();
        g_threads.store(t, std::memory_order_relaxed);
    }
    return t;
}

void set_threads(int n) { g_threads.store(n > 0 ? n : resolve_threads_from_env(), std::memory_order_relaxed); }

namespace serial {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> out) {
    const auto& rp = a.row_ptr();
    const auto& ci = a.col_idx();
    const auto& v = a.values();
    for (std::int64_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::int64_t k = rp[r]; k < rp[r + 1]; ++k) {
            s += v[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(ci[static_cast<std::size_t>(k)])];
        }
        out[static_cast<std::size_t>(r)] = s;
    }
}

void spmv_transpose(const SparseMatrix& a, std::span<const double> r, std::span<double> out) {
    const auto& rp = a.t_row_ptr();
    const auto& ci = a.t_col_idx();
    const auto& v = a.t_values();
    for (std::int64_t c = 0; c < a.cols(); ++c) {
        double s = 0.0;
        for (std::int64_t k = rp[c]; k < rp[c + 1]; ++k) {
            s += v[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(ci[static_cast<std::size_t>(k)])];
        }
        out[static_cast<std::size_t>(c)] = s;
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2sq(std::span<const double> a) { return dot(a, a); }

double norm2(std::span<const double> a) { return std::sqrt(norm2sq(a)); }

void axpby(double alpha, std::span<const double> x, double beta, std::span<const double> y,
           std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i] + beta * y[i];
}

void clamp_nonneg(std::span<double> x) {
    for (double& v : x) v = std::max(0.0, v);
}

}  // namespace serial

namespace parallel {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> out) {
    const auto& rp = a.row_ptr();
    const auto& ci = a.col_idx();
    const auto& v = a.values();
    const std::int64_t rows = a.rows();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t k = rp[r]; k < rp[r + 1]; ++k) {
            s += v[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(ci[static_cast<std::size_t>(k)])];
        }
        out[static_cast<std::size_t>(r)] = s;
    }
}

void spmv_transpose(const SparseMatrix& a, std::span<const double> r, std::span<double> out) {
    const auto& rp = a.t_row_ptr();
    const auto& ci = a.t_col_idx();
    const auto& v = a.t_values();
    const std::int64_t cols = a.cols();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::int64_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (std::int64_t k = rp[c]; k < rp[c + 1]; ++k) {
            s += v[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(ci[static_cast<std::size_t>(k)])];
        }
        out[static_cast<std::size_t>(c)] = s;
    }
}

namespace {

template <class BlockOp>
double blocked_reduce(std::size_t n, BlockOp&& op) {
    const std::size_t nblocks = (n + kReductionBlock - 1) / kReductionBlock;
    std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::int64_t blk = 0; blk < static_cast<std::int64_t>(nblocks); ++blk) {
        const std::size_t lo = static_cast<std::size_t>(blk) * kReductionBlock;
        const std::size_t hi = std::min(n, lo + kReductionBlock);
        partial[static_cast<std::size_t>(blk)] = op(lo, hi);
    }
    double s = 0.0;
    for (double p : partial) s += p;
    return s;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    return blocked_reduce(a.size(), [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        return s;
    });
}

double norm2sq(std::span<const double> a) { return dot(a, a); }

double norm2(std::span<const double> a) { return std::sqrt(norm2sq(a)); }

void axpby(double alpha, std::span<const double> x, double beta, std::span<const double> y,
           std::span<double> out) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            alpha * x[static_cast<std::size_t>(i)] + beta * y[static_cast<std::size_t>(i)];
    }
}

void clamp_nonneg(std::span<double> x) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::int64_t i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = std::max(0.0, x[static_cast<std::size_t>(i)]);
    }
}

}  // namespace parallel

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> out) {
    if (threads() > 1 && a.nnz() >= kParallelNnzCutoff) {
        parallel::spmv(a, x, out);
    } else {
        serial::spmv(a, x, out);
    }
}

void spmv_transpose(const SparseMatrix& a, std::span<const double> r, std::span<double> out) {
    if (threads() > 1 && a.nnz() >= kParallelNnzCutoff) {
        parallel::spmv_transpose(a, r, out);
    } else {
        serial::spmv_transpose(a, r, out);
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    // Both paths use the blocked order so switching the cutoff or the thread
    // count never changes the rounding.
    if (threads() > 1 && a.size() >= kParallelLenCutoff) return parallel::dot(a, b);
    const std::size_t n = a.size();
    double s = 0.0;
    for (std::size_t lo = 0; lo < n; lo += kReductionBlock) {
        const std::size_t hi = std::min(n, lo + kReductionBlock);
        double p = 0.0;
        for (std::size_t i = lo; i < hi; ++i) p += a[i] * b[i];
        s += p;
    }
    return s;
}

double norm2sq(std::span<const double> a) { return dot(a, a); }

double norm2(std::span<const double> a) { return std::sqrt(norm2sq(a)); }

void axpby(double alpha, std::span<const double> x, double beta, std::span<const double> y,
           std::span<double> out) {
    if (threads() > 1 && x.size() >= kParallelLenCutoff) {
        parallel::axpby(alpha, x, beta, y, out);
    } else {
        serial::axpby(alpha, x, beta, y, out);
    }
}

void clamp_nonneg(std::span<double> x) {
    if (threads() > 1 && x.size() >= kParallelLenCutoff) {
        parallel::clamp_nonneg(x);
    } else {
        serial::clamp_nonneg(x);
    }
}

}  // namespace fmo::kernels
