#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "voltreg/simharness.hpp"

namespace voltreg {
namespace {

// Multi-phase buses and their rows, in bus order.
std::vector<std::pair<std::string, std::vector<int>>> multiphase_buses(const FeederModel& model) {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    for (const auto& bus : model.buses()) {
        if (bus.phases.size() < 2) continue;
        std::vector<int> rows;
        for (int p : bus.phases) rows.push_back(model.index().row(bus.id, p));
        out.emplace_back(bus.id, std::move(rows));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace

Vector estimation_error(const Vector& predicted, const Vector& exact) {
    if (predicted.size() != exact.size()) throw std::invalid_argument("estimation_error: size mismatch");
    return predicted - exact;
}

double mean_voltage_deviation(const Vector& magnitudes) {
    if (magnitudes.size() == 0) return 0.0;
    return (magnitudes.array() - 1.0).abs().mean();
}

std::optional<double> phase_imbalance(const Vector& bus_magnitudes) {
    if (bus_magnitudes.size() < 2) return std::nullopt;
    return bus_magnitudes.maxCoeff() - bus_magnitudes.minCoeff();
}

ErrorStats error_stats(const std::vector<Vector>& errors) {
    ErrorStats s;
    double sum = 0.0;
    for (const auto& e : errors) {
        if (e.size() == 0) continue;
        const Vector a = e.cwiseAbs();
        s.max_abs = std::max(s.max_abs, a.maxCoeff());
        s.worst_step_mean_abs = std::max(s.worst_step_mean_abs, a.mean());
        sum += a.sum();
        s.count += static_cast<std::size_t>(a.size());
    }
    if (s.count > 0) s.mean_abs = sum / static_cast<double>(s.count);
    return s;
}

Metrics compute_metrics(const FeederModel& model, const std::vector<StepRecord>& steps, Strategy strategy) {
    Metrics m;
    const auto buses = multiphase_buses(model);
    TapVector previous = model.initial_taps();
    std::vector<Vector> errors;
    const auto& rows = model.index().nonsource_rows();
    for (const auto& r : steps) {
        const double dev = mean_voltage_deviation(r.magnitude);
        m.mean_deviation.push_back(dev);
        m.total_deviation += dev;
        for (std::size_t c = 0; c < r.taps.size(); ++c) m.total_tap_operations += std::abs(r.taps[c] - previous[c]);
        previous = r.taps;
        for (const auto& [bus, bus_rows] : buses) {
            Vector v(static_cast<Eigen::Index>(bus_rows.size()));
            for (std::size_t k = 0; k < bus_rows.size(); ++k) v(static_cast<Eigen::Index>(k)) = r.magnitude(bus_rows[k]);
            m.imbalance[bus].push_back(*phase_imbalance(v));
        }
        if (r.predicted) {
            Vector e(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k) {
                e(static_cast<Eigen::Index>(k)) = (*r.predicted)(rows[k]) - r.magnitude(rows[k]);
            }
            errors.push_back(std::move(e));
        }
        m.solve_time_mean += r.solve_time_s;
        m.solve_time_max = std::max(m.solve_time_max, r.solve_time_s);
    }
    if (!steps.empty()) {
        m.mean_deviation_avg = m.total_deviation / static_cast<double>(steps.size());
        m.solve_time_mean /= static_cast<double>(steps.size());
    }
    if (strategy == Strategy::Ovr) m.estimation_error = error_stats(errors);
    return m;
}

void emit_results(const FeederModel& model, const RunResults& results, const RunConfig& config,
                  const std::string& directory) {
    namespace fs = std::filesystem;
    using json = nlohmann::json;
    const fs::path dir(directory);
    fs::create_directories(dir);
    const auto& index = model.index();

    std::string v = "step,time_s,bus,phase,magnitude,predicted\n";
    std::string taps = "step,time_s";
    for (const auto& ch : model.tap_channels()) taps += "," + ch.name;
    taps += "\n";
    std::string q = "step,time_s,pv,q_kvar,q_max_kvar\n";
    for (std::size_t t = 0; t < results.steps.size(); ++t) {
        const auto& r = results.steps[t];
        const std::string head = std::to_string(t) + "," + num(r.time_s) + ",";
        for (int row = 0; row < index.size(); ++row) {
            const auto& node = index.node(row);
            v += head + node.bus + "," + std::to_string(node.phase) + "," + num(r.magnitude(row)) + ",";
            if (r.predicted) v += num((*r.predicted)(row));
            v += "\n";
        }
        taps += std::to_string(t) + "," + num(r.time_s);
        for (int tap : r.taps) taps += "," + std::to_string(tap);
        taps += "\n";
        for (std::size_t k = 0; k < model.pvs().size(); ++k) {
            q += head + model.pvs()[k].id + "," + num(r.q_kvar[k]) + "," + num(r.q_max_kvar[k]) + "\n";
        }
    }
    write_file(dir / "voltages.csv", v);
    write_file(dir / "taps.csv", taps);
    write_file(dir / "qinj.csv", q);

    const auto& m = results.metrics;
    json metrics;
    metrics["strategy"] = to_string(results.strategy);
    metrics["steps"] = results.steps.size();
    metrics["mean_deviation_avg"] = m.mean_deviation_avg;
    metrics["total_deviation"] = m.total_deviation;
    metrics["total_tap_operations"] = m.total_tap_operations;
    metrics["fallbacks"] = m.fallbacks;
    metrics["mean_deviation"] = m.mean_deviation;
    json imbalance = json::object();
    for (const auto& [bus, series] : m.imbalance) {
        imbalance[bus] = {{"max", series.empty() ? 0.0 : *std::max_element(series.begin(), series.end())},
                          {"series", series}};
    }
    metrics["imbalance"] = std::move(imbalance);
    if (m.estimation_error) {
        metrics["estimation_error"] = {{"max_abs", m.estimation_error->max_abs},
                                       {"mean_abs", m.estimation_error->mean_abs},
                                       {"worst_step_mean_abs", m.estimation_error->worst_step_mean_abs},
                                       {"count", m.estimation_error->count}};
    }
    metrics["events"] = results.events;
    write_file(dir / "metrics.json", metrics.dump(2) + "\n");

    json cfg;
    cfg["feeder"] = model.name();
    cfg["strategy"] = to_string(config.strategy);
    cfg["w1"] = config.weights.w1;
    cfg["w2"] = config.weights.w2;
    cfg["horizon"] = config.horizon;
    cfg["max_tap_move"] = config.max_tap_move;
    cfg["mpc"] = config.mpc;
    cfg["seed"] = config.seed;
    cfg["avr"] = {{"v_ref", config.avr.v_ref}, {"bandwidth", config.avr.bandwidth}, {"delay_s", config.avr.delay_s}};
    cfg["power_flow"] = {{"tol", config.power_flow.tol}, {"max_iter", config.power_flow.max_iter}};
    cfg["milp"] = {{"gap_tolerance", config.milp.gap_tolerance}, {"node_limit", config.milp.node_limit}};
    write_file(dir / "config.json", cfg.dump(2) + "\n");

    json timing;
    std::vector<double> per_step;
    for (const auto& r : results.steps) per_step.push_back(r.solve_time_s);
    timing["solve_time_mean_s"] = m.solve_time_mean;
    timing["solve_time_max_s"] = m.solve_time_max;
    timing["solve_time_s"] = per_step;
    write_file(dir / "timing.json", timing.dump(2) + "\n");
}

}  // namespace voltreg
