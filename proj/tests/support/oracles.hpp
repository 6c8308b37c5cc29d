#pragma once

// Independent reference computations used by the test suites. Nothing here
// calls the code under test except where noted (the tap enumeration solves
// each fixed-tap subproblem with solve_lp, which is checked separately
// against vertex enumeration).

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltreg/simharness.hpp"

namespace oracle {

// |V| at the load end of a single line z feeding consumption S from a source
// of magnitude vs: |V|^4 + (2(PR + QX) - vs^2)|V|^2 + |z|^2|S|^2 = 0, high root.
inline double line_load_voltage(std::complex<double> z, std::complex<double> s, double vs) {
    const double b = 2.0 * (s.real() * z.real() + s.imag() * z.imag()) - vs * vs;
    const double c = std::norm(z) * std::norm(s);
    const double u = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
    return std::sqrt(u);
}

// min c'x  s.t.  A x = b, x >= 0, by enumerating every basis.
inline double vertex_enumeration(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
    const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> basis(static_cast<std::size_t>(m));
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == m) {
            Eigen::MatrixXd bm(m, m);
            for (int k = 0; k < m; ++k) bm.col(k) = a.col(basis[static_cast<std::size_t>(k)]);
            Eigen::FullPivLU<Eigen::MatrixXd> lu(bm);
            if (lu.rank() < m) return;
            const Eigen::VectorXd xb = lu.solve(b);
            if (xb.minCoeff() < -1e-9) return;
            double obj = 0.0;
            for (int k = 0; k < m; ++k) obj += c(basis[static_cast<std::size_t>(k)]) * xb(k);
            best = std::min(best, obj);
            return;
        }
        for (int j = start; j <= n - (m - depth); ++j) {
            basis[static_cast<std::size_t>(depth)] = j;
            rec(j + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

struct Enumeration {
    double objective = std::numeric_limits<double>::infinity();
    std::vector<voltreg::TapVector> taps;  // per step
    int tuples = 0;
};

// Exhaustive search over every tap trajectory allowed by the range and
// movement limits; each trajectory fixes the tap columns and solves the rest
// as a continuous program.
inline Enumeration enumerate_taps(const voltreg::FeederModel& model, const voltreg::HorizonSpec& horizon) {
    const auto assembled = voltreg::assemble(model, horizon);
    const auto& L = assembled.layout;
    Enumeration out;
    std::vector<voltreg::TapVector> path(static_cast<std::size_t>(L.steps), voltreg::TapVector(static_cast<std::size_t>(L.channels)));
    std::function<void(int, int)> rec = [&](int t, int p) {
        if (t == L.steps) {
            auto prog = assembled.program;
            for (int s = 0; s < L.steps; ++s) {
                for (int q = 0; q < L.channels; ++q) {
                    const int col = L.channel(s, q, voltreg::VariableLayout::Tap);
                    prog.lower(col) = prog.upper(col) = path[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)];
                }
            }
            prog.integers.clear();
            const auto sol = voltreg::lp::solve_lp(prog);
            ++out.tuples;
            if (sol.status == voltreg::lp::Status::Optimal && sol.objective < out.objective) {
                out.objective = sol.objective;
                out.taps = path;
            }
            return;
        }
        if (p == L.channels) return rec(t + 1, 0);
        const auto& reg = model.channel_regulator(static_cast<std::size_t>(p));
        const int prev = t == 0 ? horizon.initial_taps[static_cast<std::size_t>(p)]
                                : path[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p)];
        for (int tap = std::max(reg.tap_min, prev - horizon.max_tap_move);
             tap <= std::min(reg.tap_max, prev + horizon.max_tap_move); ++tap) {
            path[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] = tap;
            rec(t, p + 1);
        }
    };
    rec(0, 0);
    return out;
}

inline double naive_mean_abs_dev(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x > 1.0 ? x - 1.0 : 1.0 - x;
    return s / static_cast<double>(v.size());
}

inline double naive_spread(const std::vector<double>& v) {
    double lo = v[0], hi = v[0];
    for (double x : v) {
        if (x < lo) lo = x;
        if (x > hi) hi = x;
    }
    return hi - lo;
}

// Minimal CSV reader: header names plus rows of raw cells.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (header[k] == name) return static_cast<int>(k);
        }
        return -1;
    }
};

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline Csv read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    Csv csv;
    std::string line;
    if (std::getline(in, line)) csv.header = split(line);
    while (std::getline(in, line)) {
        if (!line.empty()) csv.rows.push_back(split(line));
    }
    return csv;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace oracle
