#include "fmo/sparse.hpp"

#include <algorithm>
#include <cmath>

#include "fmo/errors.hpp"

namespace fmo {

SparseMatrix SparseMatrix::from_triplets(std::int64_t rows, std::int64_t cols,
                                         std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
            raise(ErrorCode::IndexOutOfRange,
                  "triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                      ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.row_ptr_.assign(static_cast<std::size_t>(rows) + 1, 0);
    m.col_idx_.reserve(triplets.size());
    m.values_.reserve(triplets.size());

    for (std::size_t i = 0; i < triplets.size();) {
        const std::int64_t r = triplets[i].row;
        const std::int64_t c = triplets[i].col;
        double v = 0.0;
        while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) {
            v += triplets[i].value;
            ++i;
        }
        m.col_idx_.push_back(c);
        m.values_.push_back(v);
        m.row_ptr_[static_cast<std::size_t>(r) + 1] = static_cast<std::int64_t>(m.values_.size());
    }
    // fill gaps for empty rows
    for (std::size_t r = 1; r < m.row_ptr_.size(); ++r) {
        m.row_ptr_[r] = std::max(m.row_ptr_[r], m.row_ptr_[r - 1]);
    }
    m.build_transpose();
    return m;
}

void SparseMatrix::build_transpose() {
    t_row_ptr_.assign(static_cast<std::size_t>(cols_) + 1, 0);
    t_col_idx_.assign(values_.size(), 0);
    t_values_.assign(values_.size(), 0.0);

    for (std::int64_t c : col_idx_) {
        ++t_row_ptr_[static_cast<std::size_t>(c) + 1];
    }
    for (std::size_t c = 1; c < t_row_ptr_.size(); ++c) {
        t_row_ptr_[c] += t_row_ptr_[c - 1];
    }
    std::vector<std::int64_t> cursor(t_row_ptr_.begin(), t_row_ptr_.end() - 1);
    for (std::int64_t r = 0; r < rows_; ++r) {
        for (std::int64_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const std::int64_t c = col_idx_[static_cast<std::size_t>(k)];
            const std::int64_t dst = cursor[static_cast<std::size_t>(c)]++;
            t_col_idx_[static_cast<std::size_t>(dst)] = r;
            t_values_[static_cast<std::size_t>(dst)] = values_[static_cast<std::size_t>(k)];
        }
    }
}

std::vector<Triplet> SparseMatrix::to_triplets() const {
    std::vector<Triplet> out;
    out.reserve(values_.size());
    for (std::int64_t r = 0; r < rows_; ++r) {
        for (std::int64_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            out.push_back({r, col_idx_[static_cast<std::size_t>(k)],
                           values_[static_cast<std::size_t>(k)]});
        }
    }
    return out;
}

double SparseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::fabs(v));
    return m;
}

}  // namespace fmo
