#pragma once

#include <span>
#include <stdexcept>
#include <string>

#include "voltreg/linmodel.hpp"
#include "voltreg/lpsolve.hpp"
#include "voltreg/powerflow.hpp"

namespace voltreg {

class OvrError : public std::runtime_error {
public:
    OvrError(lp::Status status, const std::string& what) : std::runtime_error(what), status_(status) {}
    lp::Status status() const noexcept { return status_; }

private:
    lp::Status status_;
};

/// Reactive headroom sqrt(S^2 - P^2) of an inverter producing P. Throws
/// std::domain_error when P is negative or exceeds S.
template <typename Scalar>
Scalar q_limit(Scalar s_inv, Scalar p) {
    if (p < Scalar(0) || p > s_inv * (Scalar(1) + Scalar(1e-12))) {
        throw std::domain_error("q_limit: PV output outside [0, inverter rating]");
    }
    return std::sqrt(std::max(Scalar(0), s_inv * s_inv - p * p));
}

/// kVAr headroom of one PV at a real-power forecast in kW.
double q_limit_kvar(const FeederModel& model, const PvSpec& pv, double p_kw);

struct OvrWeights {
    double w1 = 1.0;   // voltage deviation
    double w2 = 0.05;  // tap operations
};

/// Forecast for one time step: per-load consumption and per-PV available real
/// power, per-unit, model order.
struct StepForecast {
    std::vector<Complex> load_power;
    std::vector<double> pv_power;
};

struct HorizonStep {
    LinearizationPoint lp;
    std::vector<CVector> sensitivities;
    std::vector<double> pv_power;  // per PV, per-unit
};

struct HorizonSpec {
    std::vector<HorizonStep> steps;
    OvrWeights weights;
    int max_tap_move = 1;  // per step and channel
    TapVector initial_taps;
};

/// Base power flows at the applied taps with PV at unity power factor, one
/// linearization per step sharing the applied-tap Z0.
HorizonSpec prepare_horizon(const PowerFlowSolver& solver, const TapVector& applied,
                            std::span<const StepForecast> forecasts, OvrWeights weights = {}, int max_tap_move = 1);

enum class NodeRole { Passive, Load, Pv };

/// Column layout of the horizon program. Per step, every non-source node-phase
/// owns six columns (dV_d, dV_q, dI_d, dI_q, |v|, deviation epigraph) and every
/// tap channel owns three (tap, ratio, movement epigraph).
struct VariableLayout {
    int nodes = 0;
    int channels = 0;
    int steps = 0;

    enum NodeField { DvD = 0, DvQ, DiD, DiQ, Mag, Dev, NodeFields };
    enum ChannelField { Tap = 0, Ratio, Move, ChannelFields };

    int block() const { return nodes * NodeFields + channels * ChannelFields; }
    int num_vars() const { return steps * block(); }
    int node(int t, int k, NodeField f) const { return t * block() + k * NodeFields + f; }
    int channel(int t, int p, ChannelField f) const { return t * block() + nodes * NodeFields + p * ChannelFields + f; }

    static int count(int nodes, int channels, int steps) { return steps * (NodeFields * nodes + ChannelFields * channels); }
};

struct AssembledProgram {
    lp::MixedIntegerProgram program;
    VariableLayout layout;
    std::vector<std::string> names;
    std::vector<NodeRole> roles;                   // per non-source node-phase
    std::vector<std::vector<double>> node_q_max;   // [step][node], per-unit
    double source_deviation = 0.0;                 // constant J1 part from source rows
};

std::vector<NodeRole> node_roles(const FeederModel& model);

AssembledProgram assemble(const FeederModel& model, const HorizonSpec& horizon);

struct StepSchedule {
    TapVector taps;
    std::vector<double> dq;         // linear dQ decision per PV, per-unit
    std::vector<double> q_kvar;     // exact recovered setpoint per PV, clamped to headroom
    std::vector<double> q_max_kvar; // headroom per PV
    Vector predicted;               // |v| per node-phase, source rows included
    CVector dv;
    CVector di;
};

struct ControlSchedule {
    std::vector<StepSchedule> steps;
    double j1 = 0.0;
    double j2 = 0.0;
    double objective = 0.0;
    long nodes = 0;
    double gap = 0.0;
    lp::Status status = lp::Status::Optimal;
};

struct OvrOptions {
    lp::MilpOptions milp;
    /// When non-empty, the program and its solution are written to
    /// `<dump_prefix>.lp` and `<dump_prefix>.sol`.
    std::string dump_prefix;
};

/// Assemble, solve and decode one horizon. Throws OvrError when the solver
/// does not return a usable solution.
ControlSchedule solve_horizon(const FeederModel& model, const HorizonSpec& horizon, const OvrOptions& options = {});

ControlSchedule decode(const FeederModel& model, const HorizonSpec& horizon, const AssembledProgram& assembled,
                       const lp::MipSolution& solution);

}  // namespace voltreg
