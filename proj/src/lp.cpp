#include "gridshield/lp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace gridshield::lp {

namespace {

constexpr double kPivotTolerance = 1e-9;
constexpr double kOptimalityTolerance = 1e-9;
constexpr double kRowTolerance = 1e-8;
constexpr double kCostPerturbation = 1e-7;

}  // namespace

// ---------------------------------------------------------------------------
// Constraint / LPModel

Relation Constraint::relation() const {
    if (lower == upper) return Relation::Equal;
    if (lower == -kInf) return Relation::LessEqual;
    if (upper == kInf) return Relation::GreaterEqual;
    return Relation::Range;
}

Constraint Constraint::less_equal(Terms terms, double rhs, std::string name) {
    return {std::move(terms), -kInf, rhs, std::move(name)};
}

Constraint Constraint::greater_equal(Terms terms, double rhs, std::string name) {
    return {std::move(terms), rhs, kInf, std::move(name)};
}

Constraint Constraint::equal(Terms terms, double rhs, std::string name) {
    return {std::move(terms), rhs, rhs, std::move(name)};
}

Constraint Constraint::range(Terms terms, double lower, double upper, std::string name) {
    return {std::move(terms), lower, upper, std::move(name)};
}

std::size_t LPModel::add_variable(std::string name, double lower, double upper) {
    if (std::isnan(lower) || std::isnan(upper) || lower > upper)
        throw ModelError("variable '" + name + "' has inverted bounds");
    if (lower == kInf || upper == -kInf)
        throw ModelError("variable '" + name + "' has an empty domain");
    if (names_.contains(name)) throw ModelError("duplicate variable name '" + name + "'");
    names_.emplace(name, variables_.size());
    variables_.push_back({std::move(name), lower, upper});
    return variables_.size() - 1;
}

void LPModel::check_terms(const Terms& terms) const {
    for (const auto& [j, a] : terms) {
        if (j >= variables_.size()) throw ModelError("constraint references unknown variable index");
        if (!std::isfinite(a)) throw ModelError("non-finite coefficient");
    }
}

Terms LPModel::resolve(const std::map<std::string, double>& coefficients) const {
    Terms terms;
    terms.reserve(coefficients.size());
    for (const auto& [name, a] : coefficients) terms.emplace_back(index_of(name), a);
    return terms;
}

std::size_t LPModel::add_constraint(Constraint row) {
    check_terms(row.terms);
    if (std::isnan(row.lower) || std::isnan(row.upper) || row.lower > row.upper)
        throw ModelError("constraint has inverted bounds");
    if (row.lower == kInf || row.upper == -kInf) throw ModelError("constraint bound is infinite");
    // Merge repeated indices.
    std::sort(row.terms.begin(), row.terms.end());
    Terms merged;
    for (const auto& [j, a] : row.terms) {
        if (!merged.empty() && merged.back().first == j) merged.back().second += a;
        else merged.emplace_back(j, a);
    }
    row.terms = std::move(merged);
    constraints_.push_back(std::move(row));
    return constraints_.size() - 1;
}

std::size_t LPModel::add_constraint(const std::map<std::string, double>& coefficients,
                                    Relation relation, double rhs, std::string name) {
    auto terms = resolve(coefficients);
    switch (relation) {
    case Relation::LessEqual:
        return add_constraint(Constraint::less_equal(std::move(terms), rhs, std::move(name)));
    case Relation::GreaterEqual:
        return add_constraint(Constraint::greater_equal(std::move(terms), rhs, std::move(name)));
    case Relation::Equal:
        return add_constraint(Constraint::equal(std::move(terms), rhs, std::move(name)));
    case Relation::Range:
        break;
    }
    throw ModelError("a range constraint needs two bounds");
}

void LPModel::remove_constraints(const std::vector<bool>& drop) {
    if (drop.size() != constraints_.size()) throw ModelError("row mask does not match the model");
    std::size_t w = 0;
    for (std::size_t r = 0; r < constraints_.size(); ++r)
        if (!drop[r]) {
            if (w != r) constraints_[w] = std::move(constraints_[r]);
            ++w;
        }
    constraints_.resize(w);
}

void LPModel::set_objective(Terms terms, Sense sense) {
    check_terms(terms);
    objective_ = std::move(terms);
    sense_ = sense;
}

void LPModel::set_objective(const std::map<std::string, double>& coefficients, Sense sense) {
    set_objective(resolve(coefficients), sense);
}

std::size_t LPModel::index_of(std::string_view name) const {
    auto it = names_.find(name);
    if (it == names_.end()) throw ModelError("unknown variable '" + std::string(name) + "'");
    return it->second;
}

void LPModel::write_lp(std::ostream& out) const {
    const auto old_precision = out.precision(17);
    auto write_terms = [&](const Terms& terms) {
        if (terms.empty()) {
            out << " 0 " << (variables_.empty() ? "x" : variables_[0].name);
            return;
        }
        for (const auto& [j, a] : terms) out << (a < 0 ? " - " : " + ") << std::abs(a) << ' ' << variables_[j].name;
    };
    out << (sense_ == Sense::Maximize ? "Maximize\n obj:" : "Minimize\n obj:");
    write_terms(objective_);
    out << "\nSubject To\n";
    for (std::size_t r = 0; r < constraints_.size(); ++r) {
        const auto& c = constraints_[r];
        const std::string name = c.name.empty() ? "c" + std::to_string(r) : c.name;
        switch (c.relation()) {
        case Relation::LessEqual:
            out << ' ' << name << ':';
            write_terms(c.terms);
            out << " <= " << c.upper << '\n';
            break;
        case Relation::GreaterEqual:
            out << ' ' << name << ':';
            write_terms(c.terms);
            out << " >= " << c.lower << '\n';
            break;
        case Relation::Equal:
            out << ' ' << name << ':';
            write_terms(c.terms);
            out << " = " << c.lower << '\n';
            break;
        case Relation::Range:
            out << ' ' << name << "_lo:";
            write_terms(c.terms);
            out << " >= " << c.lower << '\n';
            out << ' ' << name << "_hi:";
            write_terms(c.terms);
            out << " <= " << c.upper << '\n';
            break;
        }
    }
    out << "Bounds\n";
    for (const auto& v : variables_) {
        if (v.lower == -kInf && v.upper == kInf) out << ' ' << v.name << " free\n";
        else if (v.lower == v.upper) out << ' ' << v.name << " = " << v.lower << '\n';
        else {
            out << ' ';
            if (v.lower == -kInf) out << "-inf";
            else out << v.lower;
            out << " <= " << v.name << " <= ";
            if (v.upper == kInf) out << "+inf";
            else out << v.upper;
            out << '\n';
        }
    }
    out << "End\n";
    out.precision(old_precision);
}

std::string_view to_string(Status status) {
    switch (status) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// SimplexSolver
//
// All rows are written as s_r = a_r . x with lower_r <= s_r <= upper_r, so
// the system is homogeneous and the compact tableau satisfies x_B = T x_N.

SimplexSolver::SimplexSolver(LPModel model) : model_(std::move(model)) {
    reset();
}

void SimplexSolver::reset() {
    n_struct_ = model_.variable_count();
    const std::size_t m = model_.constraint_count();
    const std::size_t total = n_struct_ + m;
    lower_.assign(total, 0.0);
    upper_.assign(total, 0.0);
    value_.assign(total, 0.0);
    cost_.assign(total, 0.0);
    where_.assign(total, 0);
    basic_.clear();
    nonbasic_.clear();

    for (std::size_t j = 0; j < n_struct_; ++j) {
        const auto& v = model_.variable(j);
        lower_[j] = v.lower;
        upper_[j] = v.upper;
        value_[j] = std::isfinite(v.lower) ? v.lower : (std::isfinite(v.upper) ? v.upper : 0.0);
        where_[j] = ~static_cast<std::ptrdiff_t>(nonbasic_.size());
        nonbasic_.push_back(j);
    }
    const double sign = model_.sense() == Sense::Maximize ? 1.0 : -1.0;
    for (const auto& [j, c] : model_.objective()) cost_[j] += sign * c;

    tableau_.assign(m * n_struct_, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const auto& row = model_.constraint(r);
        const std::size_t logical = n_struct_ + r;
        lower_[logical] = row.lower;
        upper_[logical] = row.upper;
        where_[logical] = static_cast<std::ptrdiff_t>(r);
        basic_.push_back(logical);
        double* t = row_ptr(r);
        for (const auto& [j, a] : row.terms) t[j] += a;
    }
    recompute_basic_values();
    recompute_reduced_costs();
    devex_.assign(n_struct_, 1.0);
    fresh_ = true;
}

void SimplexSolver::append_row(const Constraint& row) {
    const std::size_t logical = lower_.size();
    lower_.push_back(row.lower);
    upper_.push_back(row.upper);
    cost_.push_back(0.0);
    value_.push_back(0.0);
    where_.push_back(static_cast<std::ptrdiff_t>(rows()));

    const std::size_t n = cols();
    const std::size_t r = rows();
    tableau_.resize((r + 1) * n, 0.0);
    double* t = row_ptr(r);
    double activity = 0.0;
    for (const auto& [j, a] : row.terms) {
        const auto w = where_[j];
        if (w < 0) {
            t[static_cast<std::size_t>(~w)] += a;
        } else {
            const double* src = row_ptr(static_cast<std::size_t>(w));
            for (std::size_t q = 0; q < n; ++q) t[q] += a * src[q];
        }
        activity += a * value_[j];
    }
    basic_.push_back(logical);
    value_[logical] = activity;
}

void SimplexSolver::add_constraint(Constraint row) {
    const std::size_t r = model_.add_constraint(std::move(row));
    append_row(model_.constraint(r));
}

std::vector<std::size_t> SimplexSolver::remove_constraints(std::vector<std::size_t> rows) {
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    const std::size_t m = model_.constraint_count();
    std::vector<bool> drop(m, false);
    std::vector<std::size_t> removed;
    for (auto r : rows) {
        if (r >= m) throw ModelError("row index out of range");
        if (where_[n_struct_ + r] < 0) continue;  // binding: logical is nonbasic
        drop[r] = true;
        removed.push_back(r);
    }
    if (removed.empty()) return removed;

    // Old variable index -> new, for the surviving logicals.
    const std::size_t total = n_struct_ + m;
    std::vector<std::size_t> remap(total);
    std::size_t next = n_struct_;
    for (std::size_t j = 0; j < n_struct_; ++j) remap[j] = j;
    for (std::size_t r = 0; r < m; ++r) remap[n_struct_ + r] = drop[r] ? total : next++;

    const std::size_t n = cols();
    std::vector<std::size_t> basic;
    std::size_t w = 0;
    for (std::size_t t = 0; t < basic_.size(); ++t) {
        const auto j = basic_[t];
        if (remap[j] == total) continue;
        if (w != t) std::copy_n(row_ptr(t), n, row_ptr(w));
        basic.push_back(remap[j]);
        ++w;
    }
    tableau_.resize(w * n);
    basic_ = std::move(basic);
    for (auto& j : nonbasic_) j = remap[j];

    auto compact = [&](std::vector<double>& v) {
        for (std::size_t j = 0; j < total; ++j)
            if (remap[j] != total) v[remap[j]] = v[j];
        v.resize(next);
    };
    compact(lower_);
    compact(upper_);
    compact(value_);
    compact(cost_);
    where_.assign(next, 0);
    for (std::size_t r = 0; r < basic_.size(); ++r) where_[basic_[r]] = static_cast<std::ptrdiff_t>(r);
    for (std::size_t q = 0; q < nonbasic_.size(); ++q) where_[nonbasic_[q]] = ~static_cast<std::ptrdiff_t>(q);

    model_.remove_constraints(drop);
    return removed;
}

void SimplexSolver::set_objective(Terms terms, Sense sense) {
    model_.set_objective(std::move(terms), sense);
    std::fill(cost_.begin(), cost_.end(), 0.0);
    const double sign = sense == Sense::Maximize ? 1.0 : -1.0;
    for (const auto& [j, c] : model_.objective()) cost_[j] += sign * c;
    recompute_reduced_costs();
    std::fill(devex_.begin(), devex_.end(), 1.0);
}

void SimplexSolver::recompute_basic_values() {
    const std::size_t n = cols();
    for (std::size_t r = 0; r < rows(); ++r) {
        const double* t = row_ptr(r);
        double s = 0.0;
        for (std::size_t q = 0; q < n; ++q)
            if (t[q] != 0.0) s += t[q] * value_[nonbasic_[q]];
        value_[basic_[r]] = s;
    }
}

void SimplexSolver::recompute_reduced_costs() {
    const std::size_t n = cols();
    reduced_.assign(n, 0.0);
    for (std::size_t q = 0; q < n; ++q) reduced_[q] = cost_[nonbasic_[q]];
    for (std::size_t r = 0; r < rows(); ++r) {
        const double c = cost_[basic_[r]];
        if (c == 0.0) continue;
        const double* t = row_ptr(r);
        for (std::size_t q = 0; q < n; ++q) reduced_[q] += c * t[q];
    }
}

double SimplexSolver::infeasibility() const {
    double s = 0.0;
    // Violations within the feasibility tolerance are not priced in phase one,
    // so they are not counted here either.
    for (auto j : basic_) {
        if (value_[j] < lower_[j] - kFeasibilityTolerance) s += lower_[j] - value_[j];
        else if (value_[j] > upper_[j] + kFeasibilityTolerance) s += value_[j] - upper_[j];
    }
    return s;
}

// Devex reference weights for primal pricing, updated from the pivot row.
void SimplexSolver::update_devex(std::size_t r, std::size_t q) {
    const double* pr = row_ptr(r);
    const double arq = pr[q];
    const double wq = devex_[q];
    for (std::size_t j = 0; j < cols(); ++j)
        if (j != q && pr[j] != 0.0) devex_[j] = std::max(devex_[j], pr[j] * pr[j] / (arq * arq) * wq);
    devex_[q] = std::max(wq / (arq * arq), 1.0);
}

void SimplexSolver::pivot(std::size_t r, std::size_t q) {
    const std::size_t n = cols();
    double* pr = row_ptr(r);
    const double piv = pr[q];
    column_.assign(pr, pr + n);
    for (std::size_t j = 0; j < n; ++j) column_[j] /= piv;
    column_[q] = 0.0;

    auto eliminate = [&](double* t) {
        const double f = t[q];
        if (f == 0.0) return;
        for (std::size_t j = 0; j < n; ++j) t[j] -= f * column_[j];
        t[q] = f / piv;
    };
    for (std::size_t i = 0; i < rows(); ++i)
        if (i != r) eliminate(row_ptr(i));
    eliminate(reduced_.data());

    for (std::size_t j = 0; j < n; ++j) pr[j] = -column_[j];
    pr[q] = 1.0 / piv;

    const std::size_t entering = nonbasic_[q];
    const std::size_t leaving = basic_[r];
    basic_[r] = entering;
    nonbasic_[q] = leaving;
    where_[entering] = static_cast<std::ptrdiff_t>(r);
    where_[leaving] = ~static_cast<std::ptrdiff_t>(q);
}

// One simplex step.
SimplexSolver::Step SimplexSolver::iterate(Phase phase, bool bland) {
    const std::size_t n = cols();
    const std::size_t m = rows();

    // Phase one maximises -(sum of infeasibilities).
    std::vector<double> phase_one_cost;
    const double* d = reduced_.data();
    if (phase == Phase::One) {
        phase_one_cost.assign(n, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            const auto j = basic_[r];
            double c = 0.0;
            if (value_[j] < lower_[j] - kFeasibilityTolerance) c = 1.0;
            else if (value_[j] > upper_[j] + kFeasibilityTolerance) c = -1.0;
            if (c == 0.0) continue;
            const double* t = row_ptr(r);
            for (std::size_t q = 0; q < n; ++q) phase_one_cost[q] += c * t[q];
        }
        d = phase_one_cost.data();
    }

    std::size_t enter = n;
    double dir = 0.0;
    double best = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        const auto j = nonbasic_[q];
        const bool can_up = value_[j] < upper_[j];
        const bool can_down = value_[j] > lower_[j];
        double s = 0.0;
        if (d[q] > kOptimalityTolerance && can_up) s = 1.0;
        else if (d[q] < -kOptimalityTolerance && can_down) s = -1.0;
        if (s == 0.0) continue;
        if (bland) {
            if (enter == n || j < nonbasic_[enter]) {
                enter = q;
                dir = s;
            }
        } else if (d[q] * d[q] / devex_[q] > best) {
            best = d[q] * d[q] / devex_[q];
            enter = q;
            dir = s;
        }
    }
    if (enter == n) return Step::Optimal;

    const auto entering = nonbasic_[enter];
    double step_limit = dir > 0 ? upper_[entering] - value_[entering] : value_[entering] - lower_[entering];

    // Harris two-pass ratio test; bound flips of the entering variable win ties.
    auto bound_step = [&](std::size_t r, double a, double tol) -> double {
        const auto j = basic_[r];
        const double x = value_[j];
        const bool below = x < lower_[j] - kFeasibilityTolerance;
        const bool above = x > upper_[j] + kFeasibilityTolerance;
        if (phase == Phase::One && (below || above)) {
            if (below && a > 0) return (lower_[j] - x + tol) / a;
            if (above && a < 0) return (upper_[j] - x - tol) / a;
            return kInf;
        }
        if (a > 0 && upper_[j] != kInf) return (upper_[j] - x + tol) / a;
        if (a < 0 && lower_[j] != -kInf) return (lower_[j] - x - tol) / a;
        return kInf;
    };

    double relaxed = kInf;
    for (std::size_t r = 0; r < m; ++r) {
        const double a = dir * row_ptr(r)[enter];
        if (std::abs(a) < kPivotTolerance) continue;
        relaxed = std::min(relaxed, bound_step(r, a, bland ? 0.0 : kFeasibilityTolerance));
    }

    std::size_t leave = m;
    double leave_step = kInf;
    double leave_mag = 0.0;
    if (relaxed < kInf) {
        for (std::size_t r = 0; r < m; ++r) {
            const double a = dir * row_ptr(r)[enter];
            if (std::abs(a) < kPivotTolerance) continue;
            const double t = bound_step(r, a, 0.0);
            if (t > relaxed) continue;
            if (bland) {
                if (leave == m || t < leave_step - 1e-14 ||
                    (t <= leave_step + 1e-14 && basic_[r] < basic_[leave])) {
                    leave = r;
                    leave_step = t;
                }
            } else if (std::abs(a) > leave_mag) {
                leave = r;
                leave_step = t;
                leave_mag = std::abs(a);
            }
        }
    }

    if (leave == m && step_limit == kInf) {
        if (phase == Phase::One) throw NumericalError("unbounded ray while reducing infeasibility");
        return Step::Unbounded;
    }

    const bool flip = leave == m || step_limit <= leave_step;
    const double t = std::max(flip ? step_limit : leave_step, 0.0);

    // Bound the leaving variable lands on, decided before it moves: an
    // infeasible one stops at the bound it was violating.
    double landing = 0.0;
    if (!flip) {
        const auto j = basic_[leave];
        const double a = dir * row_ptr(leave)[enter];
        if (phase == Phase::One && value_[j] < lower_[j] - kFeasibilityTolerance) landing = lower_[j];
        else if (phase == Phase::One && value_[j] > upper_[j] + kFeasibilityTolerance) landing = upper_[j];
        else if (a > 0) landing = upper_[j] != kInf ? upper_[j] : lower_[j];
        else landing = lower_[j] != -kInf ? lower_[j] : upper_[j];
    }

    if (t > 0.0) {
        value_[entering] += dir * t;
        for (std::size_t r = 0; r < m; ++r) {
            const double a = row_ptr(r)[enter];
            if (a != 0.0) value_[basic_[r]] += dir * t * a;
        }
    }
    if (flip) {
        value_[entering] = dir > 0 ? upper_[entering] : lower_[entering];
        last_step_ = t;
        return Step::Moved;
    }

    value_[basic_[leave]] = landing;
    update_devex(leave, enter);
    pivot(leave, enter);
    last_step_ = t;
    return Step::Moved;
}

bool SimplexSolver::dual_feasible() const {
    for (std::size_t q = 0; q < cols(); ++q) {
        const auto j = nonbasic_[q];
        if (reduced_[q] > kOptimalityTolerance && value_[j] < upper_[j]) return false;
        if (reduced_[q] < -kOptimalityTolerance && value_[j] > lower_[j]) return false;
    }
    return true;
}

// One dual simplex step from a dual feasible basis: the most violated basic
// variable leaves at the bound it violates. Boxed candidates whose full range
// does not repair the violation are flipped instead of entering.
SimplexSolver::Step SimplexSolver::dual_iterate() {
    const std::size_t n = cols();
    const std::size_t m = rows();

    std::size_t leave = m;
    double worst = kFeasibilityTolerance;
    double need = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        const auto j = basic_[r];
        if (lower_[j] - value_[j] > worst) {
            worst = lower_[j] - value_[j];
            leave = r;
            need = 1.0;
        } else if (value_[j] - upper_[j] > worst) {
            worst = value_[j] - upper_[j];
            leave = r;
            need = -1.0;
        }
    }
    if (leave == m) return Step::Optimal;

    struct Candidate {
        std::size_t q;
        double ratio;
        double mag;
    };
    std::vector<Candidate> cands;
    const double* tr = row_ptr(leave);
    for (std::size_t q = 0; q < n; ++q) {
        const double a = need * tr[q];
        if (std::abs(a) < kPivotTolerance) continue;
        const auto j = nonbasic_[q];
        const bool up = a > 0;
        if (up ? !(value_[j] < upper_[j]) : !(value_[j] > lower_[j])) continue;
        const double slack = std::max(0.0, up ? -reduced_[q] : reduced_[q]);
        cands.push_back({q, slack / std::abs(a), std::abs(a)});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
        return x.ratio != y.ratio ? x.ratio < y.ratio : x.mag > y.mag;
    });

    double remaining = worst;
    std::size_t enter = n;
    std::size_t k = 0;
    std::vector<std::size_t> flips;
    for (; k < cands.size(); ++k) {
        const auto j = nonbasic_[cands[k].q];
        const double range = upper_[j] - lower_[j];
        if (range == kInf || remaining - cands[k].mag * range <= kFeasibilityTolerance) break;
        flips.push_back(cands[k].q);
        remaining -= cands[k].mag * range;
    }
    if (k == cands.size()) {
        if (cands.empty()) return Step::Infeasible;
        // Even every flip leaves the row violated.
        return Step::Infeasible;
    }
    // Among near-ties with the breakpoint, pivot on the largest entry.
    enter = cands[k].q;
    double mag = cands[k].mag;
    for (std::size_t i = k + 1; i < cands.size() && cands[i].ratio <= cands[k].ratio + kOptimalityTolerance; ++i)
        if (cands[i].mag > mag) {
            const auto j = nonbasic_[cands[i].q];
            if (upper_[j] - lower_[j] != kInf && remaining - cands[i].mag * (upper_[j] - lower_[j]) > kFeasibilityTolerance)
                continue;
            enter = cands[i].q;
            mag = cands[i].mag;
        }

    auto shift = [&](std::size_t q, double delta) {
        value_[nonbasic_[q]] += delta;
        for (std::size_t r = 0; r < m; ++r) {
            const double a = row_ptr(r)[q];
            if (a != 0.0) value_[basic_[r]] += delta * a;
        }
    };
    for (auto q : flips) {
        const auto j = nonbasic_[q];
        const bool up = need * tr[q] > 0;
        shift(q, up ? upper_[j] - value_[j] : lower_[j] - value_[j]);
        value_[j] = up ? upper_[j] : lower_[j];
    }

    const auto leaving = basic_[leave];
    const double target = need > 0 ? lower_[leaving] : upper_[leaving];
    const double move = (target - value_[leaving]) / tr[enter];
    shift(enter, move);
    value_[leaving] = target;
    last_step_ = std::abs(move);
    update_devex(leave, enter);
    pivot(leave, enter);
    return Step::Moved;
}

SolveOutcome SimplexSolver::run() {
    SolveOutcome out;
    const std::size_t m = rows();
    const std::size_t n = cols();
    const std::size_t cap = 50 * (m + n) + 100;
    const std::size_t degenerate_limit = 3 * (m + n);
    std::size_t degenerate = 0;
    std::size_t pivots = 0;

    recompute_basic_values();

    auto loop = [&](Phase phase) -> Step {
        while (true) {
            if (phase == Phase::One && infeasibility() <= kFeasibilityTolerance) return Step::Optimal;
            if (pivots >= cap) throw NumericalError("simplex iteration cap reached (cycling?)");
            const bool bland = degenerate > degenerate_limit;
            const Step step = iterate(phase, bland);
            if (step != Step::Moved) return step;
            ++pivots;
            degenerate = last_step_ <= 1e-12 ? degenerate + 1 : 0;
        }
    };

    // Rows added to an optimal basis leave it dual feasible.
    if (infeasibility() > 0.0 && dual_feasible()) {
        // Perturbed costs keep the dual ratio test away from zero-ratio ties;
        // the true reduced costs are restored for the primal clean-up below.
        std::mt19937_64 rng(0x9e3779b97f4a7c15ULL + pivots);
        std::uniform_real_distribution<double> jitter(1.0, 2.0);
        for (std::size_t q = 0; q < n; ++q) {
            const auto j = nonbasic_[q];
            const double size = kCostPerturbation * jitter(rng);
            const bool at_lower = value_[j] <= lower_[j];
            const bool at_upper = value_[j] >= upper_[j];
            if (at_lower && !at_upper) reduced_[q] = std::min(reduced_[q], 0.0) - size;
            else if (at_upper && !at_lower) reduced_[q] = std::max(reduced_[q], 0.0) + size;
        }
        const std::size_t dual_cap = 2 * (m + n);
        struct Restore {
            SimplexSolver* s;
            ~Restore() { s->recompute_reduced_costs(); }
        } restore{this};
        for (std::size_t k = 0; k < dual_cap; ++k) {
            const Step step = dual_iterate();
            if (step == Step::Infeasible) {
                out.status = Status::Infeasible;
                out.infeasibility = infeasibility();
                out.pivots = pivots;
                return out;
            }
            if (step != Step::Moved) break;
            ++pivots;
        }
    }

    loop(Phase::One);
    out.pivots = pivots;
    if (infeasibility() > kFeasibilityTolerance) {
        out.status = Status::Infeasible;
        out.infeasibility = infeasibility();
        return out;
    }
    if (loop(Phase::Two) == Step::Unbounded) {
        out.status = Status::Unbounded;
        out.pivots = pivots;
        return out;
    }

    out.status = Status::Optimal;
    out.pivots = pivots;
    recompute_basic_values();
    out.solution.assign(value_.begin(), value_.begin() + static_cast<std::ptrdiff_t>(n_struct_));
    for (std::size_t j = 0; j < n_struct_; ++j)
        out.solution[j] = std::clamp(out.solution[j], lower_[j], upper_[j]);
    double obj = 0.0;
    for (const auto& [j, c] : model_.objective()) obj += c * out.solution[j];
    out.objective_value = obj;
    return out;
}

SolveOutcome SimplexSolver::solve() {
    auto out = run();
    if (out.status == Status::Infeasible && !fresh_) {
        // Confirm from a clean tableau before reporting infeasibility.
        reset();
        out = run();
    }
    if (out.status != Status::Optimal) {
        fresh_ = false;
        return out;
    }
    // Check the original rows (relative to row activity); drift in a long-lived tableau triggers a cold restart.
    auto violation = [&](const SolveOutcome& o) {
        double worst = 0.0;
        for (const auto& row : model_.constraints()) {
            double act = 0.0, scale = 1.0;
            for (const auto& [j, a] : row.terms) {
                act += a * o.solution[j];
                scale += std::abs(a * o.solution[j]);
            }
            worst = std::max({worst, (row.lower - act) / scale, (act - row.upper) / scale});
        }
        return worst;
    };
    if (violation(out) > kRowTolerance && !fresh_) {
        reset();
        out = run();
        if (out.status == Status::Optimal) {
            if (const double v = violation(out); v > kRowTolerance)
            {
                std::ostringstream msg;
                msg << "simplex solution violates a row by " << std::setprecision(3) << v
                    << " after refactorisation";
                throw NumericalError(msg.str());
            }
        }
    }
    fresh_ = false;
    return out;
}

SolveOutcome lp_solve(const LPModel& model) {
    SimplexSolver solver(model);
    return solver.solve();
}

LPModel add_constraint_incremental(LPModel model, Constraint row) {
    model.add_constraint(std::move(row));
    return model;
}

LPModel add_constraint_incremental(LPModel model, const std::map<std::string, double>& coefficients,
                                   Relation relation, double rhs) {
    model.add_constraint(coefficients, relation, rhs);
    return model;
}

}  // namespace gridshield::lp
