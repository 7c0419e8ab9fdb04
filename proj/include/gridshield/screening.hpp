#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gridshield/energy.hpp"
#include "gridshield/lp.hpp"
#include "gridshield/network.hpp"

namespace gridshield {

using BackendFactory = std::function<std::unique_ptr<lp::Backend>(lp::LPModel)>;

struct ScreeningConfig {
    double epsilon = 1e-3;         ///< cut tolerance on the psi gap
    double delta = 1e-3;           ///< relative early-exit margin below the relay limit
    double lambda = 1.05;          ///< mesh growth, initial points rho (1 + lambda)^(t-1)
    double rho_divisor = 10.0;     ///< rho = relay limit / rho_divisor
    int max_iterations = 100;      ///< LP solves per line and sign
    double epsilon_min = 1e-8;     ///< floor of the infeasibility-certification schedule
    double refine_epsilon = 1e-4;  ///< second pass for lines converging next to the limit
    /// Stop after the first line found at the boundary (verdict only).
    bool stop_at_first_boundary = false;
    /// LP backend; the built-in simplex when empty.
    BackendFactory backend;

    /// Throws DomainError on a non-positive tolerance or lambda <= 1.
    void validate() const;
};

/// Linearisation points of 1 - cos per line, shared by every LP of a screen.
class CutPool {
public:
    CutPool() = default;
    explicit CutPool(std::size_t line_count) : points_(line_count) {}

    /// 0 and +-rho (1 + lambda)^(t-1) for every t whose point stays within the
    /// relay limit.
    static CutPool initial(const PowerNetwork& net, const ScreeningConfig& cfg);

    std::size_t line_count() const noexcept { return points_.size(); }
    std::span<const double> points(std::size_t line) const { return points_.at(line); }
    std::size_t total_points() const noexcept;

    /// Appends a point; returns false if it is already present or outside [-pi/2, pi/2].
    bool add(std::size_t line, double point);

private:
    std::vector<std::vector<double>> points_;
};

/// Tangent cut of 1 - cos at `point`: sin(point) (x - point) + 1 - cos(point) <= psi.
/// Returned as (slope, offset) with offset = point sin(point) - 1 + cos(point),
/// i.e. slope x - psi <= offset.
struct TangentCut {
    double slope;
    double offset;
};
TangentCut tangent_cut(double point);

enum class Termination { EarlyInterior, CutConverged, Infeasible };
std::string_view to_string(Termination t);

struct LineScreenResult {
    std::size_t line = 0;
    /// Upper bound on max |theta_i - theta_j| over the accessible set;
    /// -infinity when the relaxation is infeasible.
    double theta_hat = 0.0;
    double relay_limit = 0.0;
    bool at_boundary = false;
    Termination termination = Termination::EarlyInterior;
    int iterations = 0;
    int cuts_added = 0;
    double epsilon = 0.0;
    /// LP phases at the maximiser, kept for lines found at the boundary.
    std::vector<double> theta_star;
};

enum class VerdictStatus { Secure, Inconclusive, BelowMinEnergy };
std::string_view to_string(VerdictStatus s);

struct ScreeningVerdict {
    VerdictStatus status = VerdictStatus::Secure;
    std::vector<LineScreenResult> per_line;
    std::vector<std::size_t> boundary_lines;
    double e_star = 0.0;
    double e_min = 0.0;
};

/// Relaxed LP for one signed line angle: variables theta (reference fixed to
/// zero) and psi per line; energy row, |theta_kh| <= pi/2 rows and one
/// tangent cut per nonzero pool point. Objective: max sign (theta_i - theta_j).
lp::LPModel build_line_lp(const PowerNetwork& net, double e_star, std::size_t target_line, int sign,
                          const CutPool& pool);

/// Runs the cutting-plane loop for both signs of one line. Cuts found on any
/// line are recorded in `pool`.
LineScreenResult cutting_plane_line(const PowerNetwork& net, double e_star, std::size_t target_line,
                                    const ScreeningConfig& cfg, CutPool& pool);

/// Screens every line at energy e_star. Returns BelowMinEnergy without
/// solving when e_star < e_min - 1e-9.
ScreeningVerdict screen(const PowerNetwork& net, double e_star, const ScreeningConfig& cfg,
                        const Equilibrium& eq);
ScreeningVerdict screen(const PowerNetwork& net, double e_star, const ScreeningConfig& cfg);

/// Result of proving the relaxation empty without knowing E_min.
struct InfeasibilityCertificate {
    bool infeasible = false;
    double epsilon = 0.0;  ///< tolerance at which infeasibility was shown
    int rounds = 0;
    int iterations = 0;
};

/// Shrinks epsilon by 10x from cfg.epsilon down to cfg.epsilon_min, running
/// the cut loop to convergence on the first line each time, until an LP is
/// infeasible.
InfeasibilityCertificate certify_infeasibility(const PowerNetwork& net, double e_star,
                                               const ScreeningConfig& cfg);

struct MaxSecureEnergy {
    double e_bar = 0.0;
    /// True when even the cap energy screens secure.
    bool capped = false;
    double cap = 0.0;
    int screens = 0;
    /// Verdict at the lowest energy found not secure (binding lines, phases).
    std::optional<ScreeningVerdict> insecure;
};

/// Upper bound on U over the box |theta_kh| <= pi/2 plus relay rows; any
/// energy at or above it makes the whole relay box accessible.
double energy_cap(const PowerNetwork& net, const Equilibrium& eq);

/// Largest E* with a Secure verdict, by bracketing from E_min and bisection.
MaxSecureEnergy find_max_secure_energy(const PowerNetwork& net, const ScreeningConfig& cfg,
                                       const Equilibrium& eq, double tol_e = 1e-3);

}  // namespace gridshield
