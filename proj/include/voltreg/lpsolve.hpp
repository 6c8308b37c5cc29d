#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace voltreg::lp {

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit, NodeLimit };

const char* to_string(Status status);

/// min c'x + offset  s.t.  A_eq x = b_eq,  A_ineq x <= b_ineq,  lower <= x <= upper,
/// x_j integral for j in `integers`. Bounds may be infinite.
template <typename Scalar>
struct Program {
    using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using SparseS = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

    VectorS objective;
    Scalar objective_offset = 0;
    SparseS a_eq;
    VectorS b_eq;
    SparseS a_ineq;
    VectorS b_ineq;
    VectorS lower;
    VectorS upper;
    std::vector<int> integers;

    int num_vars() const { return static_cast<int>(objective.size()); }

    /// Throws std::invalid_argument on inconsistent dimensions, crossed bounds,
    /// or unbounded integer variables.
    void validate() const;
};

template <typename Scalar>
struct Solution {
    Status status = Status::Infeasible;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
    Scalar objective = std::numeric_limits<Scalar>::quiet_NaN();
    long nodes = 0;
    long iterations = 0;
    Scalar gap = 0;

    bool has_solution() const { return x.size() > 0; }
};

struct LpOptions {
    long max_iterations = 1'000'000;
    /// Consecutive non-improving pivots before Bland's rule takes over.
    int stall_pivots = 50;
};

struct MilpOptions {
    long node_limit = 200'000;
    double gap_tolerance = 1e-6;
    double integrality_tolerance = 1e-6;
    LpOptions lp;
};

/// Continuous relaxation (integrality ignored) by a dense two-phase tableau
/// simplex. Free variables are substituted out through equality rows first.
template <typename Scalar>
Solution<Scalar> solve_lp(const Program<Scalar>& program, const LpOptions& options = {});

/// Branch and bound over the integer set: most-fractional branching, depth-first
/// plunge until the first incumbent, best-bound selection afterwards.
template <typename Scalar>
Solution<Scalar> solve_milp(const Program<Scalar>& program, const MilpOptions& options = {});

/// Largest constraint or bound violation of x (integrality not included).
template <typename Scalar>
Scalar max_violation(const Program<Scalar>& program, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x);

using MixedIntegerProgram = Program<double>;
using MipSolution = Solution<double>;

/// Accumulates a program row by row.
class ProgramBuilder {
public:
    static constexpr double inf = std::numeric_limits<double>::infinity();

    int add_variable(double cost, double lower, double upper, bool integer = false, std::string name = {});
    void add_equality(const std::vector<std::pair<int, double>>& terms, double rhs);
    void add_less_equal(const std::vector<std::pair<int, double>>& terms, double rhs);
    void add_offset(double value) { offset_ += value; }

    int num_vars() const { return static_cast<int>(cost_.size()); }
    int num_equalities() const { return static_cast<int>(b_eq_.size()); }
    int num_inequalities() const { return static_cast<int>(b_ineq_.size()); }
    const std::vector<std::string>& names() const { return names_; }

    MixedIntegerProgram build() const;

private:
    std::vector<double> cost_, lower_, upper_, b_eq_, b_ineq_;
    std::vector<int> integers_;
    std::vector<std::string> names_;
    std::vector<Eigen::Triplet<double>> eq_, ineq_;
    double offset_ = 0.0;
};

/// Plain-text dump: a header line, one `var` line per variable
/// (index, kind, lower, upper, cost, name), then one `eq`/`le` line per row
/// listing `index:coefficient` pairs followed by `rhs`.
void write_program(std::ostream& out, const MixedIntegerProgram& program,
                   const std::vector<std::string>& names = {});
void write_solution(std::ostream& out, const MipSolution& solution, const std::vector<std::string>& names = {});

}  // namespace voltreg::lp
