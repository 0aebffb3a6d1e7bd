#pragma once

#include <cstdint>
#include <vector>

namespace fmo {

struct Triplet {
    std::int64_t row;
    std::int64_t col;
    double value;
};

/// Sparse non-negative matrix in compressed-row form. The transpose is stored
/// alongside so that both A*x and A^T*r are row-parallel products with a
/// fixed per-entry summation order (results do not depend on thread count).
class SparseMatrix {
public:
    SparseMatrix() = default;

    /// Builds from triplets; duplicate (row, col) pairs are summed.
    /// Entries are sorted by row then column.
    static SparseMatrix from_triplets(std::int64_t rows, std::int64_t cols,
                                      std::vector<Triplet> triplets);

    std::int64_t rows() const noexcept { return rows_; }
    std::int64_t cols() const noexcept { return cols_; }
    std::int64_t nnz() const noexcept { return static_cast<std::int64_t>(values_.size()); }

    const std::vector<std::int64_t>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<std::int64_t>& col_idx() const noexcept { return col_idx_; }
    const std::vector<double>& values() const noexcept { return values_; }

    const std::vector<std::int64_t>& t_row_ptr() const noexcept { return t_row_ptr_; }
    const std::vector<std::int64_t>& t_col_idx() const noexcept { return t_col_idx_; }
    const std::vector<double>& t_values() const noexcept { return t_values_; }

    /// Entries as sorted triplets (row-major), e.g. for serialization.
    std::vector<Triplet> to_triplets() const;

    double max_abs() const;

    bool operator==(const SparseMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ &&
               row_ptr_ == other.row_ptr_ && col_idx_ == other.col_idx_ &&
               values_ == other.values_;
    }

private:
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<std::int64_t> row_ptr_;
    std::vector<std::int64_t> col_idx_;
    std::vector<double> values_;
    // transpose, same storage scheme
    std::vector<std::int64_t> t_row_ptr_;
    std::vector<std::int64_t> t_col_idx_;
    std::vector<double> t_values_;

    void build_transpose();
};

}  // namespace fmo
