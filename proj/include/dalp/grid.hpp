#pragma once

#include <cstddef>
#include <vector>

namespace dalp {

/// Penalty gains H_0 < H_1 < ... < H_K searched by the meta-algorithms.
struct HGrid {
    double beta = 0.0;
    double v_max = 0.0;
    double epsilon = 0.0;
    std::vector<double> points;

    /// Index of the last point.
    std::size_t last_index() const noexcept { return points.empty() ? 0 : points.size() - 1; }
};

/// H_0 = beta / sqrt(v_max), H_{k+1} = H_k + epsilon / (v_max + beta / H_k^2), stopping at
/// the first point >= 2 beta / epsilon. Throws ParameterError when H_0 already reaches it.
HGrid build_h_grid(double v_max, double beta, double epsilon);

/// v_max (H_{k+1} - H_k) + beta (1/H_k - 1/H_{k+1}) for consecutive points.
double grid_gap(const HGrid& grid, std::size_t k);

/// Upper bound on the last index from the smoothness argument:
/// log(2 sqrt(v_max) / eps) / log(1 + eps / (2 beta v_max / eps + sqrt(v_max))).
double grid_index_bound(double v_max, double beta, double epsilon);

}  // namespace dalp
