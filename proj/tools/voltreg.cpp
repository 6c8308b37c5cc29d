#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "voltreg/simharness.hpp"

namespace {

enum Exit { Ok = 0, Validation = 2, Solver = 3 };

int check(const std::string& feeder) {
    const auto model = voltreg::load_feeder(feeder);
    voltreg::PowerFlowSolver solver(model);
    std::vector<voltreg::Complex> loads;
    for (const auto& l : model.loads()) loads.emplace_back(l.p, l.q);
    std::vector<voltreg::Complex> pvs(model.pvs().size());
    const voltreg::PowerFlowCase pf_case{model.initial_taps(), voltreg::net_injection(model, loads, pvs)};
    const auto sol = solver.solve(pf_case);
    const auto& index = model.index();
    std::printf("%s: %zu buses, %d node-phases, %zu tap channels, %zu loads, %zu pvs\n", model.name().c_str(),
                model.buses().size(), index.size(), model.tap_channels().size(), model.loads().size(),
                model.pvs().size());
    std::printf("nominal load flow: %d iterations, residual %.3g\n", sol.iterations,
                voltreg::residual(model, sol, pf_case));
    for (int r = 0; r < index.size(); ++r) {
        std::printf("  %-8s %d  %.5f\n", index.node(r).bus.c_str(), index.node(r).phase, std::abs(sol.voltage(r)));
    }
    return Ok;
}

int synth(const std::string& feeder, const voltreg::ProfileShape& shape, const std::string& out) {
    const auto model = voltreg::load_feeder(feeder);
    const auto scenario = voltreg::synthesize_scenario(model, shape);
    std::ofstream file(out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + out);
    file << voltreg::serialize_scenario(model, scenario) << "\n";
    return Ok;
}

int simulate(const std::string& feeder, const std::string& scenario_path, const voltreg::RunConfig& config,
             const std::string& out) {
    const auto model = voltreg::load_feeder(feeder);
    const auto scenario = voltreg::load_scenario(model, scenario_path);
    const auto results = voltreg::run_simulation(model, scenario, config);
    voltreg::emit_results(model, results, config, out);
    const auto& m = results.metrics;
    std::printf("%s: %zu steps, mean deviation %.5f, tap operations %ld", voltreg::to_string(results.strategy),
                results.steps.size(), m.mean_deviation_avg, m.total_tap_operations);
    if (m.estimation_error) std::printf(", max |E| %.5f", m.estimation_error->max_abs);
    std::printf(", mean solve %.4f s\n", m.solve_time_mean);
    for (const auto& e : results.events) std::fprintf(stderr, "%s\n", e.c_str());
    return Ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coordinated tap and inverter VAr scheduling for unbalanced feeders"};
    app.require_subcommand(1);

    std::string feeder, scenario, out, strategy = "ovr";
    voltreg::RunConfig config;
    voltreg::ProfileShape shape;

    auto* sim = app.add_subcommand("simulate", "Run a time-series simulation");
    sim->add_option("--feeder", feeder)->required();
    sim->add_option("--scenario", scenario)->required();
    sim->add_option("--strategy", strategy)->check(CLI::IsMember({"avr", "ovr"}));
    sim->add_option("--w1", config.weights.w1)->check(CLI::NonNegativeNumber);
    sim->add_option("--w2", config.weights.w2)->check(CLI::NonNegativeNumber);
    sim->add_option("--horizon", config.horizon)->check(CLI::PositiveNumber);
    sim->add_option("--out", out)->required();
    sim->add_option("--seed", config.seed);
    sim->add_flag("--mpc", config.mpc, "Apply only the first step of each schedule");
    sim->add_option("--dump", config.dump_dir, "Write every horizon program to this directory");

    auto* syn = app.add_subcommand("synth-scenario", "Synthesize a daily load and PV scenario");
    syn->add_option("--feeder", feeder)->required();
    syn->add_option("--hours", shape.hours)->check(CLI::PositiveNumber);
    syn->add_option("--step", shape.step_s)->check(CLI::PositiveNumber);
    syn->add_option("--pv-penetration", shape.pv_penetration)->check(CLI::NonNegativeNumber);
    syn->add_option("--load-scale", shape.load_scale)->check(CLI::NonNegativeNumber);
    syn->add_option("--noise", shape.noise)->check(CLI::NonNegativeNumber);
    syn->add_option("--seed", shape.seed);
    syn->add_option("--out", out)->required();

    auto* chk = app.add_subcommand("check", "Validate a feeder file");
    chk->add_option("--feeder", feeder)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : Validation;
    }

    try {
        if (*chk) return check(feeder);
        if (*syn) return synth(feeder, shape, out);
        config.strategy = voltreg::strategy_from_string(strategy);
        return simulate(feeder, scenario, config, out);
    } catch (const voltreg::FeederError& e) {
        std::cerr << "feeder: " << e.what() << "\n";
        return Validation;
    } catch (const voltreg::ScenarioError& e) {
        std::cerr << "scenario: " << e.what() << "\n";
        return Validation;
    } catch (const voltreg::PowerFlowError& e) {
        std::cerr << "power flow: " << e.what() << "\n";
        return Solver;
    } catch (const voltreg::SimulationError& e) {
        std::cerr << "simulation failed at step " << e.step() << ": " << e.what() << "\n";
        return Solver;
    } catch (const voltreg::OvrError& e) {
        std::cerr << "optimisation: " << e.what() << "\n";
        return Solver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Validation;
    }
}
