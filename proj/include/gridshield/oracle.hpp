#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "gridshield/network.hpp"

namespace gridshield::oracle {

/// Square grid over the two free phases of a three-bus network.
struct AngleGrid2D {
    int resolution = 2001;  ///< points per axis; odd so that 0 lies on the grid
    double half_width = 1.5707963267948966;

    double spacing() const { return 2.0 * half_width / (resolution - 1); }
    double coordinate(int k) const { return -half_width + k * spacing(); }
    /// Throws DomainError unless resolution is odd and at least 101.
    void validate() const;
};

struct GridPoint {
    double theta_a = 0.0;  ///< first non-reference bus
    double theta_b = 0.0;  ///< second non-reference bus
    double potential = 0.0;
};

/// U tabulated on the grid, restricted to the box where every line angle is
/// within pi/2. Requires exactly two non-reference buses.
class PotentialGrid {
public:
    PotentialGrid(const PowerNetwork& net, AngleGrid2D grid = {});

    const AngleGrid2D& grid() const noexcept { return grid_; }
    std::size_t free_a() const noexcept { return a_; }
    std::size_t free_b() const noexcept { return b_; }

    /// Minimum of U over the grid points of the box.
    GridPoint min_potential() const;

    /// Minimum of U over grid points inside the relay box that lie within one
    /// cell of some |theta_kh| = limit_kh. Limits are indexed like net.lines().
    double boundary_min_potential(std::span<const double> limits) const;

    /// max |theta_i - theta_j| over grid points with U <= e_star inside the
    /// relay box; nullopt when no grid point qualifies.
    std::optional<double> max_angle(double e_star, std::span<const double> limits,
                                    std::size_t line) const;

    /// theta, u rows for contour plotting; every `stride`-th point per axis.
    void write_csv(std::ostream& out, int stride = 1) const;

private:
    double line_angle(std::size_t line, double x, double y) const;
    bool inside(std::span<const double> limits, double x, double y) const;

    const PowerNetwork* net_;
    AngleGrid2D grid_;
    std::size_t a_ = 0;
    std::size_t b_ = 0;
    std::vector<double> potential_;  // row-major [ia * res + ib], NaN outside the box
};

std::vector<double> relay_limits(const PowerNetwork& net);

GridPoint grid_min_potential(const PowerNetwork& net, AngleGrid2D grid = {});
double boundary_min_potential(const PowerNetwork& net, std::span<const double> limits,
                              AngleGrid2D grid = {});
std::optional<double> grid_max_angle(const PowerNetwork& net, double e_star,
                                     std::span<const double> limits, std::size_t line,
                                     AngleGrid2D grid = {});

}  // namespace gridshield::oracle
