#include "dalp/grid.hpp"

#include "dalp/error.hpp"

#include <cmath>
#include <string>

namespace dalp {

HGrid build_h_grid(double v_max, double beta, double epsilon) {
    if (!(v_max > 0.0) || !(beta > 0.0) || !(epsilon > 0.0) || !std::isfinite(v_max) || !std::isfinite(beta)) {
        throw ParameterError("grid needs v_max > 0, beta > 0 and epsilon > 0");
    }
    HGrid grid{beta, v_max, epsilon, {}};
    const double stop = 2.0 * beta / epsilon;
    double h = beta / std::sqrt(v_max);
    if (h >= stop) {
        throw ParameterError("degenerate grid: H_0 = " + std::to_string(h) + " already reaches 2 beta / epsilon");
    }
    grid.points.push_back(h);
    while (h < stop) {
        h += epsilon / (v_max + beta / (h * h));
        grid.points.push_back(h);
    }
    return grid;
}

double grid_gap(const HGrid& grid, std::size_t k) {
    const double lo = grid.points.at(k);
    const double hi = grid.points.at(k + 1);
    return grid.v_max * (hi - lo) + grid.beta * (1.0 / lo - 1.0 / hi);
}

double grid_index_bound(double v_max, double beta, double epsilon) {
    const double sv = std::sqrt(v_max);
    return std::log(2.0 * sv / epsilon) / std::log1p(epsilon / (2.0 * beta * v_max / epsilon + sv));
}

}  // namespace dalp
