#include "gridshield/screening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <string>

namespace gridshield {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2;
constexpr double kEnergySlack = 1e-9;
constexpr double kRowSlack = 1e-9;
constexpr double kPurgeSlack = 1e-7;

std::unique_ptr<lp::Backend> make_backend(const ScreeningConfig& cfg, lp::LPModel model) {
    if (cfg.backend) return cfg.backend(std::move(model));
    return std::make_unique<lp::SimplexSolver>(std::move(model));
}

std::size_t psi_index(const PowerNetwork& net, std::size_t line) { return net.size() + line; }

lp::Constraint cut_row(const PowerNetwork& net, std::size_t line, double point) {
    const auto& l = net.line(line);
    const auto cut = tangent_cut(point);
    return lp::Constraint::less_equal(
        {{l.from, cut.slope}, {l.to, -cut.slope}, {psi_index(net, line), -1.0}}, cut.offset,
        "cut_" + std::to_string(line));
}

lp::Terms signed_objective(const PowerNetwork& net, std::size_t line, int sign) {
    const auto& l = net.line(line);
    return {{l.from, static_cast<double>(sign)}, {l.to, -static_cast<double>(sign)}};
}

// |theta_k| <= pi/2 * (hops from the reference), implied by the box rows.
std::vector<double> implied_phase_bounds(const PowerNetwork& net) {
    std::vector<double> bound(net.size(), lp::kInf);
    std::queue<std::size_t> queue;
    bound[net.reference_bus()] = 0.0;
    queue.push(net.reference_bus());
    while (!queue.empty()) {
        const auto i = queue.front();
        queue.pop();
        for (const auto& inc : net.neighbors(i))
            if (bound[inc.bus] == lp::kInf) {
                bound[inc.bus] = bound[i] + kHalfPi;
                queue.push(inc.bus);
            }
    }
    return bound;
}

lp::Constraint box_row(const PowerNetwork& net, std::size_t line) {
    const auto& l = net.line(line);
    return lp::Constraint::range({{l.from, 1.0}, {l.to, -1.0}}, -kHalfPi, kHalfPi, "box_" + std::to_string(line));
}

// Variables and the energy row; box and cut rows are added by the caller.
lp::LPModel core_lp(const PowerNetwork& net, double e_star) {
    lp::LPModel model;
    const auto bound = implied_phase_bounds(net);
    for (std::size_t i = 0; i < net.size(); ++i)
        model.add_variable("theta_" + std::to_string(net.bus(i).id), -bound[i], bound[i]);
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        const auto& line = net.line(l);
        model.add_variable("psi_" + std::to_string(net.bus(line.from).id) + "_" +
                               std::to_string(net.bus(line.to).id),
                           0.0, 1.0 - std::cos(line.relay_limit));
    }

    lp::Terms energy_terms;
    for (std::size_t l = 0; l < net.line_count(); ++l)
        energy_terms.emplace_back(psi_index(net, l), net.coupling(l));
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.bus(i).p != 0.0) energy_terms.emplace_back(i, -net.bus(i).p);
    model.add_constraint(lp::Constraint::less_equal(std::move(energy_terms), e_star, "energy"));
    return model;
}

lp::LPModel base_lp(const PowerNetwork& net, double e_star, const CutPool& pool) {
    auto model = core_lp(net, e_star);
    for (std::size_t l = 0; l < net.line_count(); ++l) model.add_constraint(box_row(net, l));
    for (std::size_t l = 0; l < pool.line_count(); ++l)
        for (double point : pool.points(l))
            if (point != 0.0) model.add_constraint(cut_row(net, l, point));
    return model;
}

// One relaxed LP kept alive across lines, signs and cut rounds.
class Engine {
public:
    Engine(const PowerNetwork& net, double e_star, const ScreeningConfig& cfg, CutPool& pool)
        : net_(net), cfg_(cfg), pool_(pool) {
        rows_per_line_.assign(net.line_count(), 0);
        inactive_.resize(net.line_count());
        box_active_.assign(net.line_count(), false);
        solver_ = make_backend(cfg, core_lp(net, e_star));
        sync_pool();
    }

    struct SignedRun {
        Termination termination = Termination::EarlyInterior;
        double value = -std::numeric_limits<double>::infinity();
        int iterations = 0;
        int cuts = 0;
        std::vector<double> theta;
    };

    // Steps 1-5 for objective sign * (theta_i - theta_j).
    SignedRun run(std::size_t line, int sign, double epsilon, bool early_exit) {
        SignedRun out;
        sync_pool();
        purge_slack_rows();
        solver_->set_objective(signed_objective(net_, line, sign), lp::Sense::Maximize);
        const double limit = net_.line(line).relay_limit;
        while (true) {
            if (out.iterations >= cfg_.max_iterations)
                throw NumericalError("cutting-plane loop hit the iteration cap on line " +
                                     std::to_string(line) + " (last bound " +
                                     std::to_string(out.value) + ")");
            ++out.iterations;
            const auto sol = solve_pooled();
            if (sol.status == lp::Status::Infeasible) {
                out.termination = Termination::Infeasible;
                out.value = -std::numeric_limits<double>::infinity();
                return out;
            }
            if (sol.status != lp::Status::Optimal)
                throw NumericalError("relaxed screening LP is unbounded");
            out.value = sol.objective_value;
            out.theta.assign(sol.solution.begin(),
                             sol.solution.begin() + static_cast<std::ptrdiff_t>(net_.size()));
            if (early_exit && out.value <= (1.0 - cfg_.delta) * limit) {
                out.termination = Termination::EarlyInterior;
                return out;
            }
            int added = 0;
            for (std::size_t l = 0; l < net_.line_count(); ++l) {
                const auto& ln = net_.line(l);
                const double angle = sol.solution[ln.from] - sol.solution[ln.to];
                const double psi = sol.solution[psi_index(net_, l)];
                if (psi + epsilon < 1.0 - std::cos(angle) && pool_.add(l, angle)) ++added;
            }
            sync_pool();
            out.cuts += added;
            if (added == 0) {
                out.termination = Termination::CutConverged;
                return out;
            }
        }
    }

    LineScreenResult screen_line(std::size_t line, double epsilon) {
        LineScreenResult r;
        r.line = line;
        r.relay_limit = net_.line(line).relay_limit;
        r.epsilon = epsilon;
        auto plus = run(line, +1, epsilon, true);
        r.iterations = plus.iterations;
        r.cuts_added = plus.cuts;
        if (plus.termination == Termination::Infeasible) {
            r.termination = Termination::Infeasible;
            r.theta_hat = -std::numeric_limits<double>::infinity();
            return r;
        }
        auto minus = run(line, -1, epsilon, true);
        r.iterations += minus.iterations;
        r.cuts_added += minus.cuts;
        if (minus.termination == Termination::Infeasible) {
            r.termination = Termination::Infeasible;
            r.theta_hat = -std::numeric_limits<double>::infinity();
            return r;
        }
        const bool plus_wins = plus.value >= minus.value;
        r.theta_hat = std::max(plus.value, minus.value);
        r.termination = plus.termination == Termination::EarlyInterior &&
                                minus.termination == Termination::EarlyInterior
                            ? Termination::EarlyInterior
                            : Termination::CutConverged;
        r.at_boundary = r.theta_hat >= (1.0 - cfg_.delta) * r.relay_limit;
        if (r.at_boundary) r.theta_star = plus_wins ? std::move(plus.theta) : std::move(minus.theta);
        return r;
    }

private:
    // Queues pool points recorded since the last sync.
    void sync_pool() {
        for (std::size_t l = 0; l < net_.line_count(); ++l) {
            const auto pts = pool_.points(l);
            for (std::size_t k = rows_per_line_[l]; k < pts.size(); ++k)
                if (pts[k] != 0.0) inactive_[l].push_back(pts[k]);
            rows_per_line_[l] = pts.size();
        }
    }

    // Hands rows that are slack at the last optimum back to the pending lists.
    void purge_slack_rows() {
        if (last_solution_.empty()) return;
        const auto& model = solver_->model();
        if (model.constraint_count() < 2 * (net_.size() + net_.line_count())) return;
        std::vector<std::size_t> slack;
        for (std::size_t r = 1; r < model.constraint_count(); ++r) {
            const auto& row = model.constraint(r);
            double act = 0.0;
            for (const auto& [j, a] : row.terms) act += a * last_solution_[j];
            if (act > row.lower + kPurgeSlack && act < row.upper - kPurgeSlack) slack.push_back(r);
        }
        const auto removed = solver_->remove_constraints(std::move(slack));
        std::vector<bool> drop(tags_.size() + 1, false);
        for (auto r : removed) {
            drop[r] = true;
            const auto& tag = tags_[r - 1];
            if (tag.box) box_active_[tag.line] = false;
            else inactive_[tag.line].push_back(tag.point);
        }
        std::size_t w = 0;
        for (std::size_t k = 0; k < tags_.size(); ++k)
            if (!drop[k + 1]) tags_[w++] = tags_[k];
        tags_.resize(w);
    }

    // Optimum of the LP with every box row and every pool cut. Rows enter the
    // solver only once violated (worst one per line per round); the rest are
    // checked against each intermediate optimum.
    lp::SolveOutcome solve_pooled() {
        while (true) {
            auto sol = solver_->solve();
            if (sol.status != lp::Status::Optimal) return sol;
            last_solution_ = sol.solution;
            bool added = false;
            for (std::size_t l = 0; l < net_.line_count(); ++l) {
                const auto& ln = net_.line(l);
                const double angle = sol.solution[ln.from] - sol.solution[ln.to];
                const double psi = sol.solution[psi_index(net_, l)];
                if (!box_active_[l] && std::abs(angle) > kHalfPi + kRowSlack) {
                    solver_->add_constraint(box_row(net_, l));
                    tags_.push_back({l, 0.0, true});
                    box_active_[l] = true;
                    added = true;
                }
                auto& pts = inactive_[l];
                std::size_t worst = pts.size();
                double worst_gap = kRowSlack;
                for (std::size_t k = 0; k < pts.size(); ++k) {
                    const auto cut = tangent_cut(pts[k]);
                    const double gap = cut.slope * angle - psi - cut.offset;
                    if (gap > worst_gap) {
                        worst_gap = gap;
                        worst = k;
                    }
                }
                if (worst < pts.size()) {
                    solver_->add_constraint(cut_row(net_, l, pts[worst]));
                    tags_.push_back({l, pts[worst], false});
                    pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(worst));
                    added = true;
                }
            }
            if (!added) return sol;
        }
    }

    const PowerNetwork& net_;
    const ScreeningConfig& cfg_;
    CutPool& pool_;
    std::unique_ptr<lp::Backend> solver_;
    std::vector<std::size_t> rows_per_line_;
    std::vector<std::vector<double>> inactive_;
    std::vector<bool> box_active_;
    struct RowTag {
        std::size_t line;
        double point;
        bool box;
    };
    std::vector<RowTag> tags_;  // model row r + 1
    std::vector<double> last_solution_;
};

}  // namespace

void ScreeningConfig::validate() const {
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (!(lambda > 1.0)) throw DomainError("lambda must exceed 1");
    if (!(rho_divisor > 0.0)) throw DomainError("rho divisor must be positive");
    if (max_iterations <= 0) throw DomainError("max_iterations must be positive");
    if (!(epsilon_min > 0.0)) throw DomainError("epsilon_min must be positive");
    if (!(refine_epsilon > 0.0)) throw DomainError("refine_epsilon must be positive");
}

CutPool CutPool::initial(const PowerNetwork& net, const ScreeningConfig& cfg) {
    cfg.validate();
    CutPool pool(net.line_count());
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        const double limit = net.line(l).relay_limit;
        const double rho = limit / cfg.rho_divisor;
        pool.add(l, 0.0);
        for (double point = rho; point <= limit; point *= 1.0 + cfg.lambda) {
            pool.add(l, point);
            pool.add(l, -point);
        }
    }
    return pool;
}

std::size_t CutPool::total_points() const noexcept {
    std::size_t n = 0;
    for (const auto& p : points_) n += p.size();
    return n;
}

bool CutPool::add(std::size_t line, double point) {
    auto& pts = points_.at(line);
    if (!(std::abs(point) <= kHalfPi)) return false;
    for (double p : pts)
        if (std::abs(p - point) <= 1e-12) return false;
    pts.push_back(point);
    return true;
}

TangentCut tangent_cut(double point) {
    const double s = std::sin(point);
    return {s, point * s - 1.0 + std::cos(point)};
}

std::string_view to_string(Termination t) {
    switch (t) {
    case Termination::EarlyInterior: return "early_interior";
    case Termination::CutConverged: return "cut_converged";
    case Termination::Infeasible: return "infeasible";
    }
    return "unknown";
}

std::string_view to_string(VerdictStatus s) {
    switch (s) {
    case VerdictStatus::Secure: return "secure";
    case VerdictStatus::Inconclusive: return "inconclusive";
    case VerdictStatus::BelowMinEnergy: return "below_min_energy";
    }
    return "unknown";
}

lp::LPModel build_line_lp(const PowerNetwork& net, double e_star, std::size_t target_line, int sign,
                          const CutPool& pool) {
    if (target_line >= net.line_count()) throw DomainError("target line out of range");
    if (sign != 1 && sign != -1) throw DomainError("sign must be +1 or -1");
    if (pool.line_count() != net.line_count()) throw DimensionError("cut pool does not match the network");
    auto model = base_lp(net, e_star, pool);
    model.set_objective(signed_objective(net, target_line, sign), lp::Sense::Maximize);
    return model;
}

LineScreenResult cutting_plane_line(const PowerNetwork& net, double e_star, std::size_t target_line,
                                    const ScreeningConfig& cfg, CutPool& pool) {
    cfg.validate();
    if (target_line >= net.line_count()) throw DomainError("target line out of range");
    if (pool.line_count() != net.line_count()) throw DimensionError("cut pool does not match the network");
    Engine engine(net, e_star, cfg, pool);
    return engine.screen_line(target_line, cfg.epsilon);
}

ScreeningVerdict screen(const PowerNetwork& net, double e_star, const ScreeningConfig& cfg,
                        const Equilibrium& eq) {
    cfg.validate();
    if (!std::isfinite(e_star)) throw DomainError("E* must be finite");
    ScreeningVerdict verdict;
    verdict.e_star = e_star;
    verdict.e_min = eq.e_min;
    if (e_star < eq.e_min - kEnergySlack) {
        verdict.status = VerdictStatus::BelowMinEnergy;
        return verdict;
    }

    CutPool pool = CutPool::initial(net, cfg);
    Engine engine(net, e_star, cfg, pool);
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        auto r = engine.screen_line(l, cfg.epsilon);
        const double limit = r.relay_limit;
        // Borderline convergence: tighten the cut tolerance and retry.
        if (r.termination == Termination::CutConverged &&
            std::abs(r.theta_hat - limit) <= 2.0 * cfg.delta * limit && cfg.refine_epsilon < cfg.epsilon) {
            auto refined = engine.screen_line(l, cfg.refine_epsilon);
            refined.iterations += r.iterations;
            refined.cuts_added += r.cuts_added;
            r = std::move(refined);
        }
        if (r.termination == Termination::Infeasible) {
            verdict.status = VerdictStatus::BelowMinEnergy;
            verdict.per_line.push_back(std::move(r));
            verdict.boundary_lines.clear();
            return verdict;
        }
        if (r.at_boundary) verdict.boundary_lines.push_back(l);
        verdict.per_line.push_back(std::move(r));
        if (cfg.stop_at_first_boundary && !verdict.boundary_lines.empty()) break;
    }
    verdict.status = verdict.boundary_lines.empty() ? VerdictStatus::Secure : VerdictStatus::Inconclusive;
    return verdict;
}

ScreeningVerdict screen(const PowerNetwork& net, double e_star, const ScreeningConfig& cfg) {
    return screen(net, e_star, cfg, solve_equilibrium(net));
}

InfeasibilityCertificate certify_infeasibility(const PowerNetwork& net, double e_star,
                                               const ScreeningConfig& cfg) {
    cfg.validate();
    InfeasibilityCertificate cert;
    if (net.line_count() == 0) return cert;
    CutPool pool = CutPool::initial(net, cfg);
    Engine engine(net, e_star, cfg, pool);
    for (double eps = cfg.epsilon; eps >= cfg.epsilon_min * (1.0 - 1e-9); eps *= 0.1) {
        ++cert.rounds;
        cert.epsilon = eps;
        auto run = engine.run(0, +1, eps, false);
        cert.iterations += run.iterations;
        if (run.termination == Termination::Infeasible) {
            cert.infeasible = true;
            return cert;
        }
    }
    return cert;
}

double energy_cap(const PowerNetwork& net, const Equilibrium& eq) {
    // |theta_k| is bounded by the cheapest path of relay limits from the reference bus.
    const std::size_t n = net.size();
    std::vector<double> reach(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    reach[net.reference_bus()] = 0.0;
    queue.emplace(0.0, net.reference_bus());
    while (!queue.empty()) {
        auto [d, i] = queue.top();
        queue.pop();
        if (d > reach[i]) continue;
        for (const auto& inc : net.neighbors(i)) {
            const double nd = d + net.line(inc.line).relay_limit;
            if (nd < reach[inc.bus]) {
                reach[inc.bus] = nd;
                queue.emplace(nd, inc.bus);
            }
        }
    }
    double cap = 0.0;
    for (std::size_t l = 0; l < net.line_count(); ++l)
        cap += net.coupling(l) * (1.0 - std::cos(net.line(l).relay_limit));
    for (std::size_t i = 0; i < n; ++i) cap += std::abs(net.bus(i).p) * reach[i];
    return std::max(cap, eq.e_min);
}

MaxSecureEnergy find_max_secure_energy(const PowerNetwork& net, const ScreeningConfig& base_cfg,
                                       const Equilibrium& eq, double tol_e) {
    if (!(tol_e > 0.0)) throw DomainError("energy tolerance must be positive");
    if (!eq.interior) throw DomainError("equilibrium is on the boundary; cannot search for E-bar");
    ScreeningConfig cfg = base_cfg;
    cfg.stop_at_first_boundary = true;

    MaxSecureEnergy out;
    out.cap = energy_cap(net, eq);
    auto secure = [&](double e) {
        ++out.screens;
        auto v = screen(net, e, cfg, eq);
        const bool ok = v.status == VerdictStatus::Secure;
        if (!ok) out.insecure = std::move(v);
        return ok;
    };

    double lo = eq.e_min;
    double hi = lo;
    for (double step = 0.1;; step *= 2.0) {
        hi = std::min(eq.e_min + step, out.cap);
        if (!secure(hi)) break;
        lo = hi;
        if (hi >= out.cap) {
            out.capped = true;
            out.e_bar = out.cap;
            return out;
        }
    }
    while (hi - lo >= tol_e) {
        const double mid = 0.5 * (lo + hi);
        if (secure(mid)) lo = mid;
        else hi = mid;
    }
    // Report the full verdict (all boundary lines) just above E-bar.
    cfg.stop_at_first_boundary = false;
    out.insecure = screen(net, hi, cfg, eq);
    ++out.screens;
    out.e_bar = lo;
    return out;
}

}  // namespace gridshield
