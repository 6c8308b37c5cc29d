#include "voltreg/lpsolve.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace voltreg::lp {

const char* to_string(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::IterationLimit: return "iteration-limit";
        case Status::NodeLimit: return "node-limit";
    }
    return "unknown";
}

template <typename Scalar>
void Program<Scalar>::validate() const {
    const auto n = objective.size();
    auto bad = [](const std::string& what) { throw std::invalid_argument("Program: " + what); };
    if (lower.size() != n || upper.size() != n) bad("bound vectors do not match the objective");
    if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n)) bad("equality block dimensions");
    if (a_ineq.rows() != b_ineq.size() || (a_ineq.rows() > 0 && a_ineq.cols() != n)) bad("inequality block dimensions");
    for (Eigen::Index j = 0; j < n; ++j) {
        if (std::isnan(static_cast<double>(lower(j))) || std::isnan(static_cast<double>(upper(j))) || lower(j) > upper(j)) {
            bad("variable " + std::to_string(j) + " has crossed bounds");
        }
    }
    for (int j : integers) {
        if (j < 0 || j >= n) bad("integer index out of range");
        if (!std::isfinite(static_cast<double>(lower(j))) || !std::isfinite(static_cast<double>(upper(j)))) {
            bad("integer variable " + std::to_string(j) + " needs finite bounds");
        }
    }
}

namespace {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct Tolerances {
    static constexpr S zero = S(1e-13);
    static constexpr S pivot = S(1e-9);
    static constexpr S optimality = S(1e-9);
    static constexpr S feasibility = S(1e-9);
};

template <typename S>
bool is_inf(S v) {
    return !std::isfinite(static_cast<double>(v));
}

/// Program after fixed-variable removal and free-variable substitution.
template <typename S>
struct Reduced {
    struct Elimination {
        int var;
        S pivot;
        S rhs;
        std::vector<std::pair<int, S>> terms;  // other variables of the pivot row
    };

    int n_orig = 0;
    bool infeasible = false;
    std::vector<int> active;      // original index per reduced column
    std::vector<int> position;    // original -> reduced column or -1
    RowMat<S> a_eq, a_ineq;
    Vec<S> b_eq, b_ineq, cost, lower, upper;
    S offset = 0;
    std::vector<std::pair<int, S>> fixed;
    std::vector<Elimination> eliminations;

    Vec<S> expand(const Vec<S>& y) const {
        Vec<S> x = Vec<S>::Zero(n_orig);
        for (std::size_t k = 0; k < active.size(); ++k) x(active[k]) = y(static_cast<Eigen::Index>(k));
        for (const auto& [j, v] : fixed) x(j) = v;
        for (auto it = eliminations.rbegin(); it != eliminations.rend(); ++it) {
            S acc = it->rhs;
            for (const auto& [k, a] : it->terms) acc -= a * x(k);
            x(it->var) = acc / it->pivot;
        }
        return x;
    }
};

template <typename S>
Reduced<S> presolve(const Program<S>& p) {
    using T = Tolerances<S>;
    const int n = p.num_vars();
    RowMat<S> e = RowMat<S>(p.a_eq);
    RowMat<S> g = RowMat<S>(p.a_ineq);
    if (e.cols() != n) e.resize(0, n);
    if (g.cols() != n) g.resize(0, n);
    Vec<S> be = p.b_eq, bg = p.b_ineq, c = p.objective;
    const Eigen::Index me = e.rows(), mg = g.rows();

    Reduced<S> red;
    red.n_orig = n;
    red.offset = p.objective_offset;
    std::vector<char> removed(static_cast<std::size_t>(n), 0);

    for (int j = 0; j < n; ++j) {
        if (p.lower(j) == p.upper(j)) {
            const S v = p.lower(j);
            if (me) be -= e.col(j) * v;
            if (mg) bg -= g.col(j) * v;
            red.offset += c(j) * v;
            if (me) e.col(j).setZero();
            if (mg) g.col(j).setZero();
            c(j) = 0;
            removed[static_cast<std::size_t>(j)] = 1;
            red.fixed.emplace_back(j, v);
        }
    }

    auto is_free = [&](int j) { return is_inf(p.lower(j)) && is_inf(p.upper(j)) && p.lower(j) < 0 && p.upper(j) > 0; };
    std::vector<char> row_dropped(static_cast<std::size_t>(me), 0);

    auto eliminate_from = [&](auto& rowvec, S& rhs, const std::vector<int>& nz, Eigen::Index r, int j) {
        const S f = rowvec(j) / e(r, j);
        for (int k : nz) {
            const S old = rowvec(k);
            const S delta = f * e(r, k);
            S updated = old - delta;
            if (std::abs(updated) <= T::zero * std::max(std::abs(old), std::abs(delta))) updated = 0;
            rowvec(k) = updated;
        }
        rowvec(j) = 0;
        rhs -= f * be(r);
    };

    for (Eigen::Index r = 0; r < me; ++r) {
        int best = -1;
        S best_abs = 0, row_max = 0;
        for (int j = 0; j < n; ++j) {
            if (removed[static_cast<std::size_t>(j)]) continue;
            const S a = std::abs(e(r, j));
            row_max = std::max(row_max, a);
            if (a > best_abs && is_free(j)) {
                best_abs = a;
                best = j;
            }
        }
        if (best < 0 || best_abs <= T::pivot * std::max(S(1), row_max)) continue;

        std::vector<int> nz;
        typename Reduced<S>::Elimination elim{best, e(r, best), be(r), {}};
        for (int k = 0; k < n; ++k) {
            if (k != best && !removed[static_cast<std::size_t>(k)] && e(r, k) != S(0)) {
                nz.push_back(k);
                elim.terms.emplace_back(k, e(r, k));
            }
        }
        for (Eigen::Index i = 0; i < me; ++i) {
            if (i != r && !row_dropped[static_cast<std::size_t>(i)] && e(i, best) != S(0)) {
                auto row = e.row(i);
                eliminate_from(row, be(i), nz, r, best);
            }
        }
        for (Eigen::Index i = 0; i < mg; ++i) {
            if (g(i, best) != S(0)) {
                auto row = g.row(i);
                eliminate_from(row, bg(i), nz, r, best);
            }
        }
        if (c(best) != S(0)) {
            const S f = c(best) / e(r, best);
            for (int k : nz) c(k) -= f * e(r, k);
            red.offset += f * be(r);
            c(best) = 0;
        }
        removed[static_cast<std::size_t>(best)] = 1;
        row_dropped[static_cast<std::size_t>(r)] = 1;
        red.eliminations.push_back(std::move(elim));
    }

    red.position.assign(static_cast<std::size_t>(n), -1);
    for (int j = 0; j < n; ++j) {
        if (!removed[static_cast<std::size_t>(j)]) {
            red.position[static_cast<std::size_t>(j)] = static_cast<int>(red.active.size());
            red.active.push_back(j);
        }
    }
    const auto na = static_cast<Eigen::Index>(red.active.size());

    auto keep_row = [&](const auto& row, S rhs, bool equality) -> bool {
        S mx = 0;
        for (int j : red.active) mx = std::max(mx, std::abs(row(j)));
        if (mx > T::zero) return true;
        const S slack_tol = T::feasibility * std::max(S(1), std::abs(rhs));
        if (equality ? std::abs(rhs) > slack_tol : rhs < -slack_tol) red.infeasible = true;
        return false;
    };

    std::vector<Eigen::Index> eq_rows, in_rows;
    for (Eigen::Index i = 0; i < me; ++i) {
        if (!row_dropped[static_cast<std::size_t>(i)] && keep_row(e.row(i), be(i), true)) eq_rows.push_back(i);
    }
    for (Eigen::Index i = 0; i < mg; ++i) {
        if (keep_row(g.row(i), bg(i), false)) in_rows.push_back(i);
    }

    red.a_eq = e(eq_rows, red.active);
    red.b_eq = be(eq_rows);
    red.a_ineq = g(in_rows, red.active);
    red.b_ineq = bg(in_rows);
    red.cost.resize(na);
    red.lower.resize(na);
    red.upper.resize(na);
    for (Eigen::Index k = 0; k < na; ++k) {
        const int j = red.active[static_cast<std::size_t>(k)];
        red.cost(k) = c(j);
        red.lower(k) = p.lower(j);
        red.upper(k) = p.upper(j);
    }
    return red;
}

/// Dense tableau with the objective (reduced costs) in the last row and the
/// right-hand side in the last column.
template <typename S>
class Tableau {
public:
    enum class Outcome { Optimal, Unbounded, IterationLimit };

    Tableau(int rows, int cols) : t_(RowMat<S>::Zero(rows + 1, cols + 1)), basis_(static_cast<std::size_t>(rows), -1),
                                  eligible_(static_cast<std::size_t>(cols), 1), m_(rows), n_(cols) {}

    S& at(int i, int j) { return t_(i, j); }
    S& rhs(int i) { return t_(i, n_); }
    S& obj(int j) { return t_(m_, j); }
    S objective_value() const { return -t_(m_, n_); }
    int rows() const { return m_; }
    int cols() const { return n_; }
    std::vector<int>& basis() { return basis_; }
    std::vector<char>& eligible() { return eligible_; }
    RowMat<S>& data() { return t_; }
    long iterations() const { return iterations_; }

    void pivot(int r, int c) {
        const S p = t_(r, c);
        t_.row(r) /= p;
        t_(r, c) = 1;
        for (int i = 0; i <= m_; ++i) {
            if (i == r) continue;
            const S f = t_(i, c);
            if (f != S(0)) {
                t_.row(i) -= f * t_.row(r);
                t_(i, c) = 0;
            }
        }
        basis_[static_cast<std::size_t>(r)] = c;
    }

    Outcome optimize(const LpOptions& options) {
        using T = Tolerances<S>;
        std::vector<char> basic(static_cast<std::size_t>(n_), 0);
        for (int b : basis_) basic[static_cast<std::size_t>(b)] = 1;
        bool bland = false;
        int stall = 0;
        S z = objective_value();
        for (;;) {
            int enter = -1;
            S most = -T::optimality;
            for (int j = 0; j < n_; ++j) {
                if (!eligible_[static_cast<std::size_t>(j)] || basic[static_cast<std::size_t>(j)]) continue;
                const S d = t_(m_, j);
                if (d < most) {
                    enter = j;
                    most = d;
                    if (bland) break;
                }
            }
            if (enter < 0) return Outcome::Optimal;

            int leave = -1;
            S best_ratio = 0, best_pivot = 0;
            for (int i = 0; i < m_; ++i) {
                const S a = t_(i, enter);
                if (a <= T::pivot) continue;
                const S ratio = std::max(S(0), t_(i, n_)) / a;
                if (leave < 0) {
                    leave = i;
                    best_ratio = ratio;
                    best_pivot = a;
                    continue;
                }
                const S tie = S(1e-12) * (S(1) + best_ratio);
                if (ratio < best_ratio - tie) {
                    leave = i;
                    best_ratio = ratio;
                    best_pivot = a;
                } else if (ratio <= best_ratio + tie) {
                    const bool lower_index = basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)];
                    const bool take = bland ? lower_index : (a > best_pivot || (a == best_pivot && lower_index));
                    if (take) {
                        leave = i;
                        best_ratio = std::min(best_ratio, ratio);
                        best_pivot = a;
                    }
                }
            }
            if (leave < 0) return Outcome::Unbounded;

            basic[static_cast<std::size_t>(basis_[static_cast<std::size_t>(leave)])] = 0;
            basic[static_cast<std::size_t>(enter)] = 1;
            pivot(leave, enter);
            if (++iterations_ >= options.max_iterations) return Outcome::IterationLimit;

            const S z_new = objective_value();
            if (z_new < z - S(1e-12) * (S(1) + std::abs(z))) {
                stall = 0;
            } else if (++stall >= options.stall_pivots) {
                bland = true;
            }
            z = z_new;
        }
    }

private:
    RowMat<S> t_;
    std::vector<int> basis_;
    std::vector<char> eligible_;
    int m_, n_;
    long iterations_ = 0;
};

template <typename S>
struct ReducedResult {
    Status status = Status::Infeasible;
    Vec<S> x;          // reduced variables
    S objective = 0;   // reduced cost . x + offset
    long iterations = 0;
};

/// Two-phase simplex over the reduced program with the given bounds.
template <typename S>
ReducedResult<S> solve_reduced(const Reduced<S>& red, const Vec<S>& lower, const Vec<S>& upper,
                               const LpOptions& options, bool polish) {
    using T = Tolerances<S>;
    ReducedResult<S> out;
    const auto n = static_cast<int>(red.active.size());

    // Column mapping: shift (x = l + y), mirror (x = u - y), split (x = y+ - y-), fixed.
    enum class Map { Shift, Mirror, Split, Fixed };
    std::vector<Map> kind(static_cast<std::size_t>(n));
    std::vector<int> col(static_cast<std::size_t>(n));
    int ncols = 0;
    int nbound = 0;
    for (int j = 0; j < n; ++j) {
        const S l = lower(j), u = upper(j);
        if (l > u) return out;
        col[static_cast<std::size_t>(j)] = ncols;
        if (l == u) {
            kind[static_cast<std::size_t>(j)] = Map::Fixed;
            ncols += 1;
        } else if (!is_inf(l)) {
            kind[static_cast<std::size_t>(j)] = Map::Shift;
            ncols += 1;
            if (!is_inf(u)) ++nbound;
        } else if (!is_inf(u)) {
            kind[static_cast<std::size_t>(j)] = Map::Mirror;
            ncols += 1;
        } else {
            kind[static_cast<std::size_t>(j)] = Map::Split;
            ncols += 2;
        }
    }
    const int nstruct = ncols;
    const int meq = static_cast<int>(red.a_eq.rows());
    const int min = static_cast<int>(red.a_ineq.rows());
    const int m = meq + min + nbound;
    const int nslack = min + nbound;

    // Standard-form rows: A y (+ slack) = b.
    RowMat<S> a = RowMat<S>::Zero(m, nstruct + nslack);
    Vec<S> b = Vec<S>::Zero(m);
    Vec<S> cost = Vec<S>::Zero(nstruct + nslack);
    S offset = red.offset;

    auto place = [&](int row, int j, S coef) {
        const int c = col[static_cast<std::size_t>(j)];
        switch (kind[static_cast<std::size_t>(j)]) {
            case Map::Fixed: b(row) -= coef * lower(j); break;
            case Map::Shift: a(row, c) += coef; b(row) -= coef * lower(j); break;
            case Map::Mirror: a(row, c) -= coef; b(row) -= coef * upper(j); break;
            case Map::Split: a(row, c) += coef; a(row, c + 1) -= coef; break;
        }
    };
    for (int i = 0; i < meq; ++i) {
        b(i) = red.b_eq(i);
        for (int j = 0; j < n; ++j) {
            if (red.a_eq(i, j) != S(0)) place(i, j, red.a_eq(i, j));
        }
    }
    for (int i = 0; i < min; ++i) {
        const int row = meq + i;
        b(row) = red.b_ineq(i);
        for (int j = 0; j < n; ++j) {
            if (red.a_ineq(i, j) != S(0)) place(row, j, red.a_ineq(i, j));
        }
        a(row, nstruct + i) = 1;
    }
    {
        int row = meq + min;
        for (int j = 0; j < n; ++j) {
            if (kind[static_cast<std::size_t>(j)] == Map::Shift && !is_inf(upper(j))) {
                a(row, col[static_cast<std::size_t>(j)]) = 1;
                b(row) = upper(j) - lower(j);
                a(row, nstruct + (row - meq)) = 1;
                ++row;
            }
        }
    }
    for (int j = 0; j < n; ++j) {
        const S cj = red.cost(j);
        const int c = col[static_cast<std::size_t>(j)];
        switch (kind[static_cast<std::size_t>(j)]) {
            case Map::Fixed: offset += cj * lower(j); break;
            case Map::Shift: cost(c) += cj; offset += cj * lower(j); break;
            case Map::Mirror: cost(c) -= cj; offset += cj * upper(j); break;
            case Map::Split: cost(c) += cj; cost(c + 1) -= cj; break;
        }
    }

    // Rows with a negative right-hand side are negated; rows without a usable
    // slack get an artificial column.
    std::vector<int> art_row;
    for (int i = 0; i < m; ++i) {
        if (b(i) < 0) {
            a.row(i) *= S(-1);
            b(i) = -b(i);
        }
        if (i < meq || a(i, nstruct + (i - meq)) < 0) art_row.push_back(i);
    }
    const int nart = static_cast<int>(art_row.size());
    const int total = nstruct + nslack + nart;

    Tableau<S> tab(m, total);
    auto& t = tab.data();
    t.block(0, 0, m, nstruct + nslack) = a;
    t.block(0, total, m, 1) = b;
    for (int j = 0; j < n; ++j) {
        if (kind[static_cast<std::size_t>(j)] == Map::Fixed) tab.eligible()[static_cast<std::size_t>(col[static_cast<std::size_t>(j)])] = 0;
    }
    {
        int k = 0;
        for (int i = 0; i < m; ++i) {
            if (k < nart && art_row[static_cast<std::size_t>(k)] == i) {
                t(i, nstruct + nslack + k) = 1;
                tab.basis()[static_cast<std::size_t>(i)] = nstruct + nslack + k;
                ++k;
            } else {
                tab.basis()[static_cast<std::size_t>(i)] = nstruct + (i - meq);
            }
        }
    }

    auto finish_iterations = [&]() { out.iterations = tab.iterations(); };

    if (nart > 0) {
        for (int i : art_row) t.row(m).head(nstruct + nslack) -= t.row(i).head(nstruct + nslack);
        for (int i : art_row) t(m, total) -= t(i, total);
        const auto outcome = tab.optimize(options);
        finish_iterations();
        if (outcome == Tableau<S>::Outcome::IterationLimit) {
            out.status = Status::IterationLimit;
            return out;
        }
        const S bscale = b.size() ? std::max(S(1), b.cwiseAbs().maxCoeff()) : S(1);
        if (tab.objective_value() > T::feasibility * bscale * S(10)) {
            out.status = Status::Infeasible;
            return out;
        }
        for (int i = 0; i < m; ++i) {
            if (tab.basis()[static_cast<std::size_t>(i)] < nstruct + nslack) continue;
            int best = -1;
            S best_abs = T::pivot;
            for (int j = 0; j < nstruct + nslack; ++j) {
                if (!tab.eligible()[static_cast<std::size_t>(j)]) continue;
                if (std::abs(t(i, j)) > best_abs) {
                    best_abs = std::abs(t(i, j));
                    best = j;
                }
            }
            if (best >= 0) tab.pivot(i, best);
        }
        for (int k = 0; k < nart; ++k) tab.eligible()[static_cast<std::size_t>(nstruct + nslack + k)] = 0;
    }

    t.row(m).setZero();
    t.row(m).head(nstruct + nslack) = cost.transpose();
    for (int i = 0; i < m; ++i) {
        const int bcol = tab.basis()[static_cast<std::size_t>(i)];
        const S cb = bcol < nstruct + nslack ? cost(bcol) : S(0);
        if (cb != S(0)) t.row(m) -= cb * t.row(i);
    }
    for (int i = 0; i < m; ++i) t(m, tab.basis()[static_cast<std::size_t>(i)]) = 0;

    const auto outcome = tab.optimize(options);
    finish_iterations();
    if (outcome == Tableau<S>::Outcome::IterationLimit) {
        out.status = Status::IterationLimit;
        return out;
    }
    if (outcome == Tableau<S>::Outcome::Unbounded) {
        out.status = Status::Unbounded;
        return out;
    }

    Vec<S> y = Vec<S>::Zero(total);
    for (int i = 0; i < m; ++i) y(tab.basis()[static_cast<std::size_t>(i)]) = std::max(S(0), t(i, total));

    if (polish && m > 0) {
        // Recompute basic values from the original rows to shed pivoting noise.
        RowMat<S> full = RowMat<S>::Zero(m, total);
        full.block(0, 0, m, nstruct + nslack) = a;
        for (int k = 0; k < nart; ++k) full(art_row[static_cast<std::size_t>(k)], nstruct + nslack + k) = 1;
        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> basis_matrix(m, m);
        for (int i = 0; i < m; ++i) basis_matrix.col(i) = full.col(tab.basis()[static_cast<std::size_t>(i)]);
        Eigen::PartialPivLU<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>> lu(basis_matrix);
        if (lu.rcond() > S(1e-12)) {
            const Vec<S> xb = lu.solve(b);
            bool sane = true;
            for (int i = 0; i < m; ++i) {
                if (!(std::abs(xb(i) - y(tab.basis()[static_cast<std::size_t>(i)])) < S(1e-6) * (S(1) + std::abs(xb(i))))) sane = false;
            }
            if (sane) {
                for (int i = 0; i < m; ++i) y(tab.basis()[static_cast<std::size_t>(i)]) = std::max(S(0), xb(i));
            }
        }
    }

    out.x.resize(n);
    for (int j = 0; j < n; ++j) {
        const int c = col[static_cast<std::size_t>(j)];
        switch (kind[static_cast<std::size_t>(j)]) {
            case Map::Fixed: out.x(j) = lower(j); break;
            case Map::Shift: out.x(j) = lower(j) + y(c); break;
            case Map::Mirror: out.x(j) = upper(j) - y(c); break;
            case Map::Split: out.x(j) = y(c) - y(c + 1); break;
        }
    }
    out.objective = red.cost.dot(out.x) + red.offset;
    out.status = Status::Optimal;
    return out;
}

template <typename S>
S objective_of(const Program<S>& p, const Vec<S>& x) {
    return p.objective.dot(x) + p.objective_offset;
}

}  // namespace

template <typename Scalar>
Scalar max_violation(const Program<Scalar>& p, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x) {
    Scalar worst = 0;
    if (p.a_eq.rows() > 0) worst = std::max(worst, (p.a_eq * x - p.b_eq).cwiseAbs().maxCoeff());
    if (p.a_ineq.rows() > 0) worst = std::max(worst, (p.a_ineq * x - p.b_ineq).maxCoeff());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        worst = std::max(worst, p.lower(j) - x(j));
        worst = std::max(worst, x(j) - p.upper(j));
    }
    return worst;
}

template <typename Scalar>
Solution<Scalar> solve_lp(const Program<Scalar>& program, const LpOptions& options) {
    program.validate();
    Solution<Scalar> sol;
    const auto red = presolve(program);
    if (red.infeasible) {
        sol.status = Status::Infeasible;
        return sol;
    }
    auto res = solve_reduced(red, red.lower, red.upper, options, true);
    sol.status = res.status;
    sol.iterations = res.iterations;
    if (res.status == Status::Optimal) {
        sol.x = red.expand(res.x);
        sol.objective = objective_of(program, sol.x);
    }
    return sol;
}

template <typename Scalar>
Solution<Scalar> solve_milp(const Program<Scalar>& program, const MilpOptions& options) {
    using S = Scalar;
    program.validate();
    Solution<S> sol;
    if (program.integers.empty()) return solve_lp(program, options.lp);

    Program<S> root = program;
    for (int j : program.integers) {
        root.lower(j) = std::ceil(program.lower(j) - S(options.integrality_tolerance));
        root.upper(j) = std::floor(program.upper(j) + S(options.integrality_tolerance));
        if (root.lower(j) > root.upper(j)) {
            sol.status = Status::Infeasible;
            return sol;
        }
    }
    const auto red = presolve(root);
    if (red.infeasible) {
        sol.status = Status::Infeasible;
        return sol;
    }

    std::vector<int> ints;  // reduced positions of integer variables still active
    for (int j : root.integers) {
        const int pos = red.position[static_cast<std::size_t>(j)];
        if (pos >= 0) ints.push_back(pos);
    }
    std::sort(ints.begin(), ints.end());

    struct Node {
        Vec<S> lower, upper;
        S bound;
        long id;
    };
    std::vector<Node> open;
    long next_id = 0;
    open.push_back({red.lower, red.upper, -std::numeric_limits<S>::infinity(), next_id++});

    bool have_incumbent = false;
    S incumbent_obj = std::numeric_limits<S>::infinity();
    Vec<S> incumbent;
    const S gap_tol = S(options.gap_tolerance);
    const S int_tol = S(options.integrality_tolerance);
    bool root_solved = false;

    auto select = [&]() -> Node {
        std::size_t pick = open.size() - 1;
        if (have_incumbent) {
            for (std::size_t k = 0; k < open.size(); ++k) {
                if (open[k].bound < open[pick].bound || (open[k].bound == open[pick].bound && open[k].id < open[pick].id)) pick = k;
            }
        }
        Node node = std::move(open[pick]);
        open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
        return node;
    };

    while (!open.empty()) {
        if (sol.nodes >= options.node_limit) break;
        Node node = select();
        if (have_incumbent && node.bound >= incumbent_obj - gap_tol) continue;
        ++sol.nodes;

        auto res = solve_reduced(red, node.lower, node.upper, options.lp, false);
        sol.iterations += res.iterations;
        if (!root_solved) {
            root_solved = true;
            if (res.status == Status::Unbounded || res.status == Status::IterationLimit) {
                sol.status = res.status;
                return sol;
            }
        }
        if (res.status == Status::IterationLimit) {
            sol.status = Status::IterationLimit;
            break;
        }
        if (res.status != Status::Optimal) continue;
        if (have_incumbent && res.objective >= incumbent_obj - gap_tol) continue;

        int branch = -1;
        S best_frac = int_tol;
        for (int pos : ints) {
            const S v = res.x(pos);
            const S frac = std::abs(v - std::round(v));
            if (frac > best_frac + S(1e-12)) {
                best_frac = frac;
                branch = pos;
            }
        }

        if (branch < 0) {
            // Integral: re-solve with the integers pinned so they are exact.
            Vec<S> lo = node.lower, hi = node.upper;
            for (int pos : ints) lo(pos) = hi(pos) = std::round(res.x(pos));
            auto fixed = solve_reduced(red, lo, hi, options.lp, true);
            sol.iterations += fixed.iterations;
            const auto& chosen = fixed.status == Status::Optimal ? fixed : res;
            if (chosen.objective < incumbent_obj) {
                incumbent_obj = chosen.objective;
                incumbent = chosen.x;
                for (int pos : ints) incumbent(pos) = std::round(incumbent(pos));
                have_incumbent = true;
            }
            continue;
        }

        const S v = res.x(branch);
        Node down{node.lower, node.upper, res.objective, next_id++};
        down.upper(branch) = std::floor(v);
        Node up{node.lower, node.upper, res.objective, next_id++};
        up.lower(branch) = std::ceil(v);
        // The child matching the rounding direction is explored first while plunging.
        if (v - std::floor(v) >= S(0.5)) {
            open.push_back(std::move(down));
            open.push_back(std::move(up));
        } else {
            open.push_back(std::move(up));
            open.push_back(std::move(down));
        }
    }

    if (!have_incumbent) {
        if (sol.status != Status::IterationLimit) sol.status = open.empty() ? Status::Infeasible : Status::NodeLimit;
        return sol;
    }
    S best_open = incumbent_obj;
    for (const auto& node : open) best_open = std::min(best_open, node.bound);
    sol.gap = std::max(S(0), incumbent_obj - best_open);
    if (sol.status != Status::IterationLimit) sol.status = sol.gap <= gap_tol ? Status::Optimal : Status::NodeLimit;
    sol.x = red.expand(incumbent);
    for (int j : program.integers) sol.x(j) = std::round(sol.x(j));
    sol.objective = objective_of(program, sol.x);
    return sol;
}

template struct Program<double>;
template struct Program<long double>;
template Solution<double> solve_lp(const Program<double>&, const LpOptions&);
template Solution<long double> solve_lp(const Program<long double>&, const LpOptions&);
template Solution<double> solve_milp(const Program<double>&, const MilpOptions&);
template Solution<long double> solve_milp(const Program<long double>&, const MilpOptions&);
template double max_violation(const Program<double>&, const Eigen::VectorXd&);
template long double max_violation(const Program<long double>&, const Eigen::Matrix<long double, Eigen::Dynamic, 1>&);

int ProgramBuilder::add_variable(double cost, double lower, double upper, bool integer, std::string name) {
    const int j = num_vars();
    cost_.push_back(cost);
    lower_.push_back(lower);
    upper_.push_back(upper);
    if (integer) integers_.push_back(j);
    names_.push_back(name.empty() ? "x" + std::to_string(j) : std::move(name));
    return j;
}

void ProgramBuilder::add_equality(const std::vector<std::pair<int, double>>& terms, double rhs) {
    const int row = num_equalities();
    for (const auto& [j, v] : terms) {
        if (v != 0.0) eq_.emplace_back(row, j, v);
    }
    b_eq_.push_back(rhs);
}

void ProgramBuilder::add_less_equal(const std::vector<std::pair<int, double>>& terms, double rhs) {
    const int row = num_inequalities();
    for (const auto& [j, v] : terms) {
        if (v != 0.0) ineq_.emplace_back(row, j, v);
    }
    b_ineq_.push_back(rhs);
}

MixedIntegerProgram ProgramBuilder::build() const {
    MixedIntegerProgram p;
    const int n = num_vars();
    p.objective = Eigen::Map<const Eigen::VectorXd>(cost_.data(), n);
    p.objective_offset = offset_;
    p.lower = Eigen::Map<const Eigen::VectorXd>(lower_.data(), n);
    p.upper = Eigen::Map<const Eigen::VectorXd>(upper_.data(), n);
    p.a_eq.resize(num_equalities(), n);
    p.a_eq.setFromTriplets(eq_.begin(), eq_.end());
    p.b_eq = Eigen::Map<const Eigen::VectorXd>(b_eq_.data(), num_equalities());
    p.a_ineq.resize(num_inequalities(), n);
    p.a_ineq.setFromTriplets(ineq_.begin(), ineq_.end());
    p.b_ineq = Eigen::Map<const Eigen::VectorXd>(b_ineq_.data(), num_inequalities());
    p.integers = integers_;
    return p;
}

namespace {

std::string name_of(const std::vector<std::string>& names, Eigen::Index j) {
    return static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)] : "x" + std::to_string(j);
}

void write_rows(std::ostream& out, const char* tag, const Eigen::SparseMatrix<double, Eigen::RowMajor>& a,
                const Eigen::VectorXd& b) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        out << tag << ' ' << i << ' ' << b(i);
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a, i); it; ++it) {
            out << ' ' << it.col() << ':' << it.value();
        }
        out << '\n';
    }
}

}  // namespace

void write_program(std::ostream& out, const MixedIntegerProgram& p, const std::vector<std::string>& names) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(17);
    out << "# voltreg-lp 1\n";
    out << "vars " << p.num_vars() << " eq " << p.a_eq.rows() << " le " << p.a_ineq.rows() << " offset "
        << p.objective_offset << '\n';
    std::vector<char> integer(static_cast<std::size_t>(p.num_vars()), 0);
    for (int j : p.integers) integer[static_cast<std::size_t>(j)] = 1;
    for (Eigen::Index j = 0; j < p.objective.size(); ++j) {
        out << "var " << j << ' ' << (integer[static_cast<std::size_t>(j)] ? 'I' : 'C') << ' ' << p.lower(j) << ' '
            << p.upper(j) << ' ' << p.objective(j) << ' ' << name_of(names, j) << '\n';
    }
    write_rows(out, "eq", p.a_eq, p.b_eq);
    write_rows(out, "le", p.a_ineq, p.b_ineq);
    out.flags(flags);
    out.precision(precision);
}

void write_solution(std::ostream& out, const MipSolution& s, const std::vector<std::string>& names) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(17);
    out << "status " << to_string(s.status) << " objective " << s.objective << " nodes " << s.nodes << " gap "
        << s.gap << '\n';
    for (Eigen::Index j = 0; j < s.x.size(); ++j) out << "x " << j << ' ' << s.x(j) << ' ' << name_of(names, j) << '\n';
    out.flags(flags);
    out.precision(precision);
}

}  // namespace voltreg::lp
