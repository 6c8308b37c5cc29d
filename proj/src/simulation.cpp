#include <algorithm>
#include <chrono>
#include <cstdio>

#include "voltreg/simharness.hpp"

namespace voltreg {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct StepInputs {
    std::vector<Complex> load;
    std::vector<Complex> pv;
    std::vector<double> q_max_kvar;
};

StepInputs inputs_at(const FeederModel& model, const StepForecast& f, const std::vector<double>& q_kvar) {
    StepInputs in;
    in.load = f.load_power;
    const double base = model.phase_kva();
    for (std::size_t k = 0; k < model.pvs().size(); ++k) {
        const double q = q_kvar.empty() ? 0.0 : q_kvar[k] / base;
        in.pv.emplace_back(f.pv_power[k], q);
        in.q_max_kvar.push_back(q_limit(model.pvs()[k].s_inv, f.pv_power[k]) * base);
    }
    return in;
}

StepRecord exact_step(const PowerFlowSolver& solver, const Scenario& scenario, int t, const TapVector& taps,
                      const StepForecast& f, const std::vector<double>& q_kvar) {
    const auto& model = solver.model();
    const auto in = inputs_at(model, f, q_kvar);
    PowerFlowCase pf_case{taps, net_injection(model, in.load, in.pv)};
    PowerFlowSolution sol;
    try {
        sol = solver.solve(pf_case);
    } catch (const PowerFlowError& e) {
        throw SimulationError(t, std::string("power flow failed: ") + e.what());
    }
    StepRecord r;
    r.time_s = scenario.time_at(t);
    r.magnitude = voltage_magnitudes(sol);
    r.taps = taps;
    r.q_kvar = q_kvar.empty() ? std::vector<double>(model.pvs().size(), 0.0) : q_kvar;
    r.q_max_kvar = in.q_max_kvar;
    r.pf_iterations = sol.iterations;
    r.pf_residual = residual(model, sol, pf_case);
    return r;
}

std::vector<StepRecord> run_avr(const PowerFlowSolver& solver, const Scenario& scenario, const RunConfig& config) {
    const auto& model = solver.model();
    AvrController controller(model, scenario.avr.value_or(config.avr));
    std::vector<StepRecord> out;
    for (int t = 0; t < scenario.count; ++t) {
        const auto f = forecast_at(model, scenario, t);
        const auto start = Clock::now();
        StepRecord r = exact_step(solver, scenario, t, controller.taps(), f, {});
        for (int it = 0; it < config.avr_control_iterations; ++it) {
            const TapVector before = controller.taps();
            controller.step(r.magnitude, it == 0 ? scenario.step_s : 0.0);
            if (controller.taps() == before) break;
            r = exact_step(solver, scenario, t, controller.taps(), f, {});
        }
        r.solve_time_s = seconds_since(start);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<StepRecord> run_ovr(const PowerFlowSolver& solver, const Scenario& scenario, const RunConfig& config,
                                std::vector<std::string>& events, int& fallbacks) {
    const auto& model = solver.model();
    if (config.horizon < 1) throw std::invalid_argument("horizon must be at least one step");
    TapVector applied = model.initial_taps();
    std::vector<StepRecord> out;
    int t0 = 0;
    while (t0 < scenario.count) {
        const int len = std::min(config.horizon, scenario.count - t0);
        std::vector<StepForecast> forecasts;
        for (int t = t0; t < t0 + len; ++t) forecasts.push_back(forecast_at(model, scenario, t));
        const int apply = config.mpc ? 1 : len;

        const auto start = Clock::now();
        std::optional<ControlSchedule> schedule;
        try {
            const auto horizon = prepare_horizon(solver, applied, forecasts, config.weights, config.max_tap_move);
            OvrOptions options;
            options.milp = config.milp;
            if (!config.dump_dir.empty()) {
                char name[32];
                std::snprintf(name, sizeof name, "/horizon_%06d", t0);
                options.dump_prefix = config.dump_dir + name;
            }
            schedule = solve_horizon(model, horizon, options);
        } catch (const OvrError& e) {
            events.push_back("step " + std::to_string(t0) + ": optimisation failed (" + lp::to_string(e.status()) +
                             "), holding taps with zero reactive power");
        } catch (const PowerFlowError& e) {
            events.push_back("step " + std::to_string(t0) + ": base power flow failed (" + e.what() +
                             "), holding taps with zero reactive power");
        } catch (const LinearizationError& e) {
            events.push_back("step " + std::to_string(t0) + ": linearization failed (" + e.what() +
                             "), holding taps with zero reactive power");
        }
        const double per_step = seconds_since(start) / apply;
        if (!schedule) ++fallbacks;

        for (int s = 0; s < apply; ++s) {
            const int t = t0 + s;
            const auto& f = forecasts[static_cast<std::size_t>(s)];
            StepRecord r;
            if (schedule) {
                const auto& plan = schedule->steps[static_cast<std::size_t>(s)];
                r = exact_step(solver, scenario, t, plan.taps, f, plan.q_kvar);
                r.predicted = plan.predicted;
                applied = plan.taps;
            } else {
                r = exact_step(solver, scenario, t, applied, f, {});
            }
            r.solve_time_s = per_step;
            out.push_back(std::move(r));
        }
        t0 += apply;
    }
    return out;
}

}  // namespace

const char* to_string(Strategy strategy) {
    return strategy == Strategy::Avr ? "avr" : "ovr";
}

Strategy strategy_from_string(const std::string& name) {
    if (name == "avr") return Strategy::Avr;
    if (name == "ovr") return Strategy::Ovr;
    throw std::invalid_argument("unknown strategy '" + name + "' (expected avr or ovr)");
}

RunResults run_simulation(const FeederModel& model, const Scenario& scenario, const RunConfig& config) {
    validate_scenario(model, scenario);
    PowerFlowSolver solver(model, config.power_flow);
    RunResults results;
    results.strategy = config.strategy;
    int fallbacks = 0;
    if (config.strategy == Strategy::Avr) {
        results.steps = run_avr(solver, scenario, config);
    } else {
        results.steps = run_ovr(solver, scenario, config, results.events, fallbacks);
    }
    results.metrics = compute_metrics(model, results.steps, config.strategy);
    results.metrics.fallbacks = fallbacks;
    return results;
}

}  // namespace voltreg
