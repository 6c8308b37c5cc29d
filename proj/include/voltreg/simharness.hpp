#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "voltreg/avr.hpp"
#include "voltreg/ovr.hpp"
#include "voltreg/powerflow.hpp"

namespace voltreg {

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time series of load and PV power aligned to a uniform time axis. Profiles
/// follow model order; powers in kW / kVAr.
struct Scenario {
    double start_s = 0.0;
    double step_s = 30.0;
    int count = 0;
    std::vector<std::vector<double>> load_p_kw;    // [load][step]
    std::vector<std::vector<double>> load_q_kvar;  // [load][step]
    std::vector<std::vector<double>> pv_p_kw;      // [pv][step]
    std::optional<AvrSettings> avr;

    double time_at(int step) const { return start_s + step_s * step; }
};

/// Throws ScenarioError when the scenario does not fit the model.
void validate_scenario(const FeederModel& model, const Scenario& scenario);
Scenario parse_scenario(const FeederModel& model, std::string_view text);
Scenario load_scenario(const FeederModel& model, const std::string& path);
std::string serialize_scenario(const FeederModel& model, const Scenario& scenario);

/// Per-unit forecast for one step (PV at its available power).
StepForecast forecast_at(const FeederModel& model, const Scenario& scenario, int step);

struct ProfileShape {
    double hours = 24.0;
    double step_s = 30.0;
    double load_scale = 1.0;     // peak load relative to the nominal loads
    double load_swing = 0.6;     // daily swing, 0 gives flat load
    double pv_penetration = 1.5; // PV peak over load peak, 0 disables PV
    double noise = 0.0;          // relative std-dev of seeded multiplicative noise
    std::uint64_t seed = 0;
};

/// Deterministic daily load curve and clear-sky PV curve. PV is shared across
/// systems by DC rating and clipped at each inverter rating.
Scenario synthesize_scenario(const FeederModel& model, const ProfileShape& shape);

enum class Strategy { Avr, Ovr };

const char* to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);

struct RunConfig {
    Strategy strategy = Strategy::Ovr;
    OvrWeights weights;
    int horizon = 10;
    int max_tap_move = 1;
    bool mpc = false;  // apply only the first scheduled step, re-solve every step
    AvrSettings avr;
    int avr_control_iterations = 10;
    lp::MilpOptions milp;
    PowerFlowOptions power_flow;
    std::string dump_dir;  // per-horizon program dumps when non-empty
    std::uint64_t seed = 0;
};

struct StepRecord {
    double time_s = 0.0;
    Vector magnitude;                  // exact, every node-phase
    std::optional<Vector> predicted;   // OVR prediction, every node-phase
    TapVector taps;
    std::vector<double> q_kvar;        // applied PV reactive power
    std::vector<double> q_max_kvar;    // PV headroom at the step's forecast
    double solve_time_s = 0.0;
    int pf_iterations = 0;
    double pf_residual = 0.0;
};

struct ErrorStats {
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double worst_step_mean_abs = 0.0;
    std::size_t count = 0;
};

struct Metrics {
    std::vector<double> mean_deviation;                   // per step
    double mean_deviation_avg = 0.0;
    double total_deviation = 0.0;
    long total_tap_operations = 0;
    std::map<std::string, std::vector<double>> imbalance; // per multi-phase bus, per step
    std::optional<ErrorStats> estimation_error;           // OVR only
    double solve_time_mean = 0.0;                         // per step, seconds
    double solve_time_max = 0.0;
    int fallbacks = 0;
};

struct RunResults {
    Strategy strategy = Strategy::Ovr;
    std::vector<StepRecord> steps;
    Metrics metrics;
    std::vector<std::string> events;
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

RunResults run_simulation(const FeederModel& model, const Scenario& scenario, const RunConfig& config);

/// predicted - exact, elementwise.
Vector estimation_error(const Vector& predicted, const Vector& exact);
/// Mean of | |v| - 1 | over node-phases.
double mean_voltage_deviation(const Vector& magnitudes);
/// max - min phase magnitude at one bus; nullopt when fewer than two phases.
std::optional<double> phase_imbalance(const Vector& bus_magnitudes);
ErrorStats error_stats(const std::vector<Vector>& errors);
Metrics compute_metrics(const FeederModel& model, const std::vector<StepRecord>& steps, Strategy strategy);

/// Writes voltages.csv, taps.csv, qinj.csv, metrics.json and config.json
/// (deterministic) plus timing.json (wall-clock solve times).
void emit_results(const FeederModel& model, const RunResults& results, const RunConfig& config,
                  const std::string& directory);

}  // namespace voltreg
