#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gridshield/errors.hpp"

namespace gridshield::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Maximize, Minimize };
enum class Relation { LessEqual, Equal, GreaterEqual, Range };

struct Variable {
    std::string name;
    double lower = 0.0;
    double upper = kInf;
};

using Terms = std::vector<std::pair<std::size_t, double>>;

/// lower <= sum(coef * x) <= upper.
struct Constraint {
    Terms terms;
    double lower = -kInf;
    double upper = kInf;
    std::string name;

    Relation relation() const;

    static Constraint less_equal(Terms terms, double rhs, std::string name = {});
    static Constraint greater_equal(Terms terms, double rhs, std::string name = {});
    static Constraint equal(Terms terms, double rhs, std::string name = {});
    static Constraint range(Terms terms, double lower, double upper, std::string name = {});
};

/// Bounded-variable linear program. Variables are addressed by index or by
/// unique name.
class LPModel {
public:
    std::size_t add_variable(std::string name, double lower, double upper);

    /// Appends a row; throws ModelError on an unknown variable index,
    /// non-finite coefficient or inverted bounds.
    std::size_t add_constraint(Constraint row);
    std::size_t add_constraint(const std::map<std::string, double>& coefficients,
                               Relation relation, double rhs, std::string name = {});

    /// Removes the rows flagged in `drop` (indexed like constraints()).
    void remove_constraints(const std::vector<bool>& drop);

    void set_objective(Terms terms, Sense sense);
    void set_objective(const std::map<std::string, double>& coefficients, Sense sense);

    std::size_t variable_count() const noexcept { return variables_.size(); }
    std::size_t constraint_count() const noexcept { return constraints_.size(); }
    const Variable& variable(std::size_t j) const { return variables_.at(j); }
    const std::vector<Variable>& variables() const noexcept { return variables_; }
    const Constraint& constraint(std::size_t r) const { return constraints_.at(r); }
    const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
    const Terms& objective() const noexcept { return objective_; }
    Sense sense() const noexcept { return sense_; }

    std::size_t index_of(std::string_view name) const;

    /// CPLEX LP text format, for cross-checking with external solvers.
    void write_lp(std::ostream& out) const;

private:
    Terms resolve(const std::map<std::string, double>& coefficients) const;
    void check_terms(const Terms& terms) const;

    std::vector<Variable> variables_;
    std::map<std::string, std::size_t, std::less<>> names_;
    std::vector<Constraint> constraints_;
    Terms objective_;
    Sense sense_ = Sense::Maximize;
};

enum class Status { Optimal, Infeasible, Unbounded };

std::string_view to_string(Status status);

struct SolveOutcome {
    Status status = Status::Infeasible;
    std::vector<double> solution;  ///< per variable index, when Optimal
    double objective_value = 0.0;  ///< when Optimal
    /// Phase-1 sum of infeasibilities when Infeasible.
    double infeasibility = 0.0;
    std::size_t pivots = 0;

    double value(const LPModel& model, std::string_view name) const {
        return solution.at(model.index_of(name));
    }
};

/// Solver interface used by the screening engine; a backend keeps its own
/// copy of the model and may reuse work between solves.
class Backend {
public:
    virtual ~Backend() = default;
    virtual void add_constraint(Constraint row) = 0;
    /// Removes as many of the given rows as the backend can without losing
    /// its current vertex; returns the removed ones, ascending.
    virtual std::vector<std::size_t> remove_constraints(std::vector<std::size_t> rows) = 0;
    virtual void set_objective(Terms terms, Sense sense) = 0;
    virtual SolveOutcome solve() = 0;
    virtual const LPModel& model() const = 0;
};

/// Dense two-phase bounded-variable primal simplex on a compact tableau.
/// Keeps the basis between calls, so a solve after set_objective or
/// add_constraint starts from the previous vertex.
class SimplexSolver final : public Backend {
public:
    explicit SimplexSolver(LPModel model);

    void add_constraint(Constraint row) override;
    /// Only rows whose logical variable is basic are removed.
    std::vector<std::size_t> remove_constraints(std::vector<std::size_t> rows) override;
    void set_objective(Terms terms, Sense sense) override;
    SolveOutcome solve() override;
    const LPModel& model() const override { return model_; }

private:
    enum class Phase { One, Two };
    enum class Step { Moved, Optimal, Unbounded, Infeasible };

    std::size_t rows() const noexcept { return basic_.size(); }
    std::size_t cols() const noexcept { return nonbasic_.size(); }
    double* row_ptr(std::size_t r) { return tableau_.data() + r * cols(); }
    const double* row_ptr(std::size_t r) const { return tableau_.data() + r * cols(); }

    void reset();
    void append_row(const Constraint& row);
    void recompute_basic_values();
    void recompute_reduced_costs();
    double infeasibility() const;
    void pivot(std::size_t r, std::size_t q);
    void update_devex(std::size_t r, std::size_t q);
    Step iterate(Phase phase, bool bland);
    bool dual_feasible() const;
    Step dual_iterate();
    SolveOutcome run();

    LPModel model_;
    std::size_t n_struct_ = 0;
    std::vector<double> lower_, upper_, value_, cost_;
    std::vector<std::size_t> basic_;     // tableau row -> variable
    std::vector<std::size_t> nonbasic_;  // tableau column -> variable
    std::vector<std::ptrdiff_t> where_;  // variable -> row (>=0) or ~column (<0)
    std::vector<double> tableau_;        // rows x cols, basic = T * nonbasic
    std::vector<double> reduced_;        // objective row in nonbasic space
    std::vector<double> column_;         // scratch
    std::vector<double> devex_;          // pricing weights per tableau column
    double last_step_ = 0.0;
    bool fresh_ = true;
};

/// Cold-start solve.
SolveOutcome lp_solve(const LPModel& model);

/// Copy of `model` with one more row.
LPModel add_constraint_incremental(LPModel model, Constraint row);
LPModel add_constraint_incremental(LPModel model, const std::map<std::string, double>& coefficients,
                                   Relation relation, double rhs);

inline constexpr double kFeasibilityTolerance = 1e-9;

}  // namespace gridshield::lp
