#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>

#include "voltreg/netmodel.hpp"

namespace voltreg {

class PowerFlowError : public std::runtime_error {
public:
    enum class Kind { NonConvergence, VoltageCollapse };

    PowerFlowError(Kind kind, const std::string& what, int iterations, double last_mismatch)
        : std::runtime_error(what), kind_(kind), iterations_(iterations), last_mismatch_(last_mismatch) {}

    Kind kind() const noexcept { return kind_; }
    int iterations() const noexcept { return iterations_; }
    double last_mismatch() const noexcept { return last_mismatch_; }

private:
    Kind kind_;
    int iterations_;
    double last_mismatch_;
};

/// Taps plus net complex power injection per non-source node-phase (loads
/// negative, generation positive), per-unit.
struct PowerFlowCase {
    TapVector taps;
    CVector injection;
};

struct PowerFlowSolution {
    CVector voltage;  // every node-phase, source rows included
    CVector current;  // net injection current per non-source node-phase
    int iterations = 0;
    double max_mismatch = 0.0;
};

struct PowerFlowOptions {
    double tol = 1e-9;
    int max_iter = 100;
    double collapse_guard = 0.5;
};

/// Y, Z0 and no-load voltages for one tap vector.
struct NetworkFactorization {
    TapVector taps;
    CMatrix y;
    SourceReduction reduction;
};

NetworkFactorization factorize(const FeederModel& model, const TapVector& taps);

/// Net injection per non-source node-phase from per-element complex powers.
/// `load_power` is consumption per load, `pv_power` generation per PV, both in
/// model order and per-unit. Elements sitting on the source bus are absorbed by
/// the source and do not appear.
CVector net_injection(const FeederModel& model, std::span<const Complex> load_power,
                      std::span<const Complex> pv_power);

/// Z-bus fixed point I <- conj(S / V), V <- V_noload + Z0 I from a flat
/// no-load start.
PowerFlowSolution solve_zbus(const NetworkFactorization& net, const NodePhaseIndex& index,
                             const CVector& v_source, const CVector& injection,
                             const PowerFlowOptions& options = {});
PowerFlowSolution solve_zbus(const FeederModel& model, const PowerFlowCase& pf_case,
                             const PowerFlowOptions& options = {});

/// Max apparent-power mismatch over non-source rows with currents recomputed
/// from the nodal equations.
double residual(const FeederModel& model, const PowerFlowSolution& solution, const PowerFlowCase& pf_case);

template <typename Derived>
auto voltage_magnitudes(const Eigen::MatrixBase<Derived>& v) {
    return v.cwiseAbs().eval();
}

inline Vector voltage_magnitudes(const PowerFlowSolution& solution) { return solution.voltage.cwiseAbs(); }

/// Thread-safe power-flow front end that caches one factorization per tap vector.
class PowerFlowSolver {
public:
    explicit PowerFlowSolver(const FeederModel& model, PowerFlowOptions options = {})
        : model_(model), options_(options) {}

    const FeederModel& model() const { return model_; }
    const PowerFlowOptions& options() const { return options_; }

    std::shared_ptr<const NetworkFactorization> factorization(const TapVector& taps) const;
    PowerFlowSolution solve(const PowerFlowCase& pf_case) const;

private:
    const FeederModel& model_;
    PowerFlowOptions options_;
    mutable std::mutex mutex_;
    mutable std::map<TapVector, std::shared_ptr<const NetworkFactorization>> cache_;
};

}  // namespace voltreg
