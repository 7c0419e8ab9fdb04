#include "gridshield/oracle.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>

#include "gridshield/errors.hpp"

namespace gridshield::oracle {

void AngleGrid2D::validate() const {
    if (resolution < 101 || resolution % 2 == 0)
        throw DomainError("grid resolution must be odd and at least 101");
    if (!(half_width > 0.0)) throw DomainError("grid half width must be positive");
}

PotentialGrid::PotentialGrid(const PowerNetwork& net, AngleGrid2D grid) : net_(&net), grid_(grid) {
    grid_.validate();
    if (net.size() != 3) throw DimensionError("grid oracle needs exactly two non-reference buses");
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < 3; ++i)
        if (i != net.reference_bus()) free.push_back(i);
    a_ = free[0];
    b_ = free[1];

    const int res = grid_.resolution;
    potential_.assign(static_cast<std::size_t>(res) * res, std::numeric_limits<double>::quiet_NaN());
    const double half_pi = std::numbers::pi / 2;
    const double pa = net.bus(a_).p;
    const double pb = net.bus(b_).p;
    for (int ia = 0; ia < res; ++ia) {
        const double x = grid_.coordinate(ia);
        for (int ib = 0; ib < res; ++ib) {
            const double y = grid_.coordinate(ib);
            double u = -pa * x - pb * y;
            bool in_box = true;
            for (std::size_t l = 0; l < net.line_count(); ++l) {
                const double angle = line_angle(l, x, y);
                if (std::abs(angle) > half_pi + 1e-12) {
                    in_box = false;
                    break;
                }
                u += net.coupling(l) * (1.0 - std::cos(angle));
            }
            if (in_box) potential_[static_cast<std::size_t>(ia) * res + ib] = u;
        }
    }
}

double PotentialGrid::line_angle(std::size_t line, double x, double y) const {
    const auto& l = net_->line(line);
    auto phase = [&](std::size_t i) { return i == a_ ? x : (i == b_ ? y : 0.0); };
    return phase(l.from) - phase(l.to);
}

bool PotentialGrid::inside(std::span<const double> limits, double x, double y) const {
    for (std::size_t l = 0; l < net_->line_count(); ++l)
        if (std::abs(line_angle(l, x, y)) > limits[l] + 1e-12) return false;
    return true;
}

GridPoint PotentialGrid::min_potential() const {
    GridPoint best;
    best.potential = std::numeric_limits<double>::infinity();
    const int res = grid_.resolution;
    for (int ia = 0; ia < res; ++ia)
        for (int ib = 0; ib < res; ++ib) {
            const double u = potential_[static_cast<std::size_t>(ia) * res + ib];
            if (u < best.potential) best = {grid_.coordinate(ia), grid_.coordinate(ib), u};
        }
    return best;
}

double PotentialGrid::boundary_min_potential(std::span<const double> limits) const {
    if (limits.size() != net_->line_count()) throw DimensionError("one relay limit per line expected");
    const int res = grid_.resolution;
    const double h = grid_.spacing();
    double best = std::numeric_limits<double>::infinity();
    for (int ia = 0; ia < res; ++ia) {
        const double x = grid_.coordinate(ia);
        for (int ib = 0; ib < res; ++ib) {
            const double u = potential_[static_cast<std::size_t>(ia) * res + ib];
            if (!(u < best)) continue;
            const double y = grid_.coordinate(ib);
            if (!inside(limits, x, y)) continue;
            bool near_boundary = false;
            for (std::size_t l = 0; l < net_->line_count() && !near_boundary; ++l)
                near_boundary = std::abs(line_angle(l, x, y)) >= limits[l] - h;
            if (near_boundary) best = u;
        }
    }
    return best;
}

std::optional<double> PotentialGrid::max_angle(double e_star, std::span<const double> limits,
                                               std::size_t line) const {
    if (limits.size() != net_->line_count()) throw DimensionError("one relay limit per line expected");
    if (line >= net_->line_count()) throw DomainError("line out of range");
    const int res = grid_.resolution;
    double best = -1.0;
    for (int ia = 0; ia < res; ++ia) {
        const double x = grid_.coordinate(ia);
        for (int ib = 0; ib < res; ++ib) {
            const double u = potential_[static_cast<std::size_t>(ia) * res + ib];
            if (!(u <= e_star)) continue;
            const double y = grid_.coordinate(ib);
            const double angle = std::abs(line_angle(line, x, y));
            if (angle <= best || !inside(limits, x, y)) continue;
            best = angle;
        }
    }
    if (best < 0.0) return std::nullopt;
    return best;
}

void PotentialGrid::write_csv(std::ostream& out, int stride) const {
    if (stride < 1) stride = 1;
    const int res = grid_.resolution;
    out << "theta_" << net_->bus(a_).id << ",theta_" << net_->bus(b_).id << ",U\n";
    const auto old_precision = out.precision(10);
    for (int ia = 0; ia < res; ia += stride)
        for (int ib = 0; ib < res; ib += stride) {
            const double u = potential_[static_cast<std::size_t>(ia) * res + ib];
            if (std::isnan(u)) continue;
            out << grid_.coordinate(ia) << ',' << grid_.coordinate(ib) << ',' << u << '\n';
        }
    out.precision(old_precision);
}

std::vector<double> relay_limits(const PowerNetwork& net) {
    std::vector<double> limits;
    for (const auto& l : net.lines()) limits.push_back(l.relay_limit);
    return limits;
}

GridPoint grid_min_potential(const PowerNetwork& net, AngleGrid2D grid) {
    return PotentialGrid(net, grid).min_potential();
}

double boundary_min_potential(const PowerNetwork& net, std::span<const double> limits, AngleGrid2D grid) {
    return PotentialGrid(net, grid).boundary_min_potential(limits);
}

std::optional<double> grid_max_angle(const PowerNetwork& net, double e_star,
                                     std::span<const double> limits, std::size_t line, AngleGrid2D grid) {
    return PotentialGrid(net, grid).max_angle(e_star, limits, line);
}

}  // namespace gridshield::oracle
