#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sspe/matrix.hpp"
#include "sspe/rng.hpp"

namespace sspe {

enum class PeKind { none, sinusoidal_1d, grid_2d, relative };

inline const char* to_string(PeKind k) {
    switch (k) {
        case PeKind::none: return "none";
        case PeKind::sinusoidal_1d: return "sinusoidal-1d";
        case PeKind::grid_2d: return "grid-2d";
        case PeKind::relative: return "relative";
    }
    return "?";
}

inline PeKind pe_kind_from_string(const std::string& s) {
    if (s == "none") return PeKind::none;
    if (s == "sinusoidal-1d") return PeKind::sinusoidal_1d;
    if (s == "grid-2d") return PeKind::grid_2d;
    if (s == "relative") return PeKind::relative;
    throw std::invalid_argument("unknown pe kind: " + s);
}

// For absolute kinds the table has P+1 rows with the class token at row 0.
// For the relative kind the table has one row per 2-D offset plus a final
// dedicated row used for any pair involving the class token (or a PE hole).
struct PositionTable {
    PeKind kind = PeKind::none;
    Matrix table;
    int grid_rows = 0;
    int grid_cols = 0;
};

// Entry (i, j): sin(i / 10000^(2j/d)) for even j, cos(i / 10000^(2(j-1)/d)) for odd j.
inline Matrix sinusoidal_table(std::size_t num_positions, std::size_t d) {
    if (d % 2 != 0) throw std::invalid_argument("sinusoidal_pe: d must be even");
    Matrix out(num_positions, d);
    for (std::size_t i = 0; i < num_positions; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double expo = (j % 2 == 0) ? static_cast<double>(2 * j) / static_cast<double>(d)
                                             : static_cast<double>(2 * (j - 1)) / static_cast<double>(d);
            const double angle = static_cast<double>(i) / std::pow(10000.0, expo);
            out(i, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return out;
}

inline PositionTable sinusoidal_pe(std::size_t num_positions, std::size_t d) {
    PositionTable pt;
    pt.kind = PeKind::sinusoidal_1d;
    pt.table = sinusoidal_table(num_positions, d);
    return pt;
}

// Row coordinate encoded in the first d/2 columns, column coordinate in the
// last d/2; the class-token row stays all zeros.
inline PositionTable grid_2d_pe(int grid_rows, int grid_cols, std::size_t d) {
    if (d % 4 != 0) throw std::invalid_argument("grid_2d_pe: d must be divisible by 4");
    const std::size_t half = d / 2;
    const std::size_t max_coord =
        static_cast<std::size_t>(std::max(grid_rows, grid_cols));
    const Matrix coord = sinusoidal_table(max_coord, half);
    PositionTable pt;
    pt.kind = PeKind::grid_2d;
    pt.grid_rows = grid_rows;
    pt.grid_cols = grid_cols;
    pt.table = Matrix(static_cast<std::size_t>(grid_rows * grid_cols) + 1, d);
    for (int k = 0; k < grid_rows * grid_cols; ++k) {
        const int r = k / grid_cols;
        const int c = k % grid_cols;
        double* dst = pt.table.row_ptr(static_cast<std::size_t>(k) + 1);
        for (std::size_t j = 0; j < half; ++j) {
            dst[j] = coord(static_cast<std::size_t>(r), j);
            dst[half + j] = coord(static_cast<std::size_t>(c), j);
        }
    }
    return pt;
}

// Offset index helpers for the relative kind. Cells are 0-based (r, c);
// offsets (dr, dc) with dr, dc in [-(gr-1), gr-1] map to a dense row index.
inline int relative_offset_rows(int grid_rows, int grid_cols) {
    return (2 * grid_rows - 1) * (2 * grid_cols - 1);
}

inline int relative_offset_index(int grid_rows, int grid_cols, int dr, int dc) {
    const int w = 2 * grid_cols - 1;
    return (dr + grid_rows - 1) * w + (dc + grid_cols - 1);
}

// Index of the dedicated row for class-token pairs and PE holes.
inline int relative_unknown_index(int grid_rows, int grid_cols) {
    return relative_offset_rows(grid_rows, grid_cols);
}

inline PositionTable relative_pe(int grid_rows, int grid_cols, std::size_t d, Rng& rng) {
    if (d % 2 != 0) throw std::invalid_argument("relative_pe: d must be even");
    PositionTable pt;
    pt.kind = PeKind::relative;
    pt.grid_rows = grid_rows;
    pt.grid_cols = grid_cols;
    const int rows = relative_offset_rows(grid_rows, grid_cols) + 1;
    pt.table = Matrix(static_cast<std::size_t>(rows), d);
    for (double& v : pt.table.data) v = rng.gauss(0.0, 0.02);
    return pt;
}

inline PositionTable no_pe() { return PositionTable{}; }

}  // namespace sspe
