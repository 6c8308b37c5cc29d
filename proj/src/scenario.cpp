#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "voltreg/simharness.hpp"

namespace voltreg {
namespace {

using json = nlohmann::json;

std::vector<double> profile(const json& obj, const char* key, const std::string& owner) {
    if (!obj.contains(key)) throw ScenarioError(owner + ": missing \"" + key + "\"");
    try {
        return obj.at(key).get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ScenarioError(owner + ": bad \"" + key + "\" (" + e.what() + ")");
    }
}

// Daily load shape peaking at 1 in the evening with a smaller morning bump.
double load_shape(double hour) {
    auto bump = [](double h, double centre, double width) {
        double d = std::fmod(std::abs(h - centre), 24.0);
        d = std::min(d, 24.0 - d);
        return std::exp(-(d / width) * (d / width));
    };
    return 0.55 * bump(hour, 8.5, 2.0) + bump(hour, 20.0, 2.5);
}

double pv_shape(double hour) {
    if (hour <= 6.0 || hour >= 18.0) return 0.0;
    return std::pow(std::sin(std::numbers::pi * (hour - 6.0) / 12.0), 1.2);
}

}  // namespace

void validate_scenario(const FeederModel& model, const Scenario& s) {
    if (s.count < 0) throw ScenarioError("scenario: negative step count");
    if (!(s.step_s > 0.0)) throw ScenarioError("scenario: step must be positive");
    if (s.load_p_kw.size() != model.loads().size() || s.load_q_kvar.size() != model.loads().size() ||
        s.pv_p_kw.size() != model.pvs().size()) {
        throw ScenarioError("scenario: profiles do not match the feeder's loads and PVs");
    }
    auto check_len = [&](const std::vector<double>& v, const std::string& owner) {
        if (static_cast<int>(v.size()) != s.count) {
            throw ScenarioError(owner + ": profile length " + std::to_string(v.size()) + " != " + std::to_string(s.count));
        }
    };
    for (std::size_t k = 0; k < model.loads().size(); ++k) {
        check_len(s.load_p_kw[k], "load " + model.loads()[k].id);
        check_len(s.load_q_kvar[k], "load " + model.loads()[k].id);
    }
    for (std::size_t k = 0; k < model.pvs().size(); ++k) {
        const auto& pv = model.pvs()[k];
        check_len(s.pv_p_kw[k], "pv " + pv.id);
        const double rating = pv.s_inv * model.phase_kva();
        for (double p : s.pv_p_kw[k]) {
            if (p < 0.0 || p > rating * (1.0 + 1e-12)) {
                throw ScenarioError("pv " + pv.id + ": available power outside [0, inverter rating]");
            }
        }
    }
    if (s.avr && !(s.avr->bandwidth > 0.0)) throw ScenarioError("scenario: avr bandwidth must be positive");
}

Scenario parse_scenario(const FeederModel& model, std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("malformed scenario document: ") + e.what());
    }
    if (!doc.is_object()) throw ScenarioError("scenario document must be a JSON object");
    Scenario s;
    try {
        s.start_s = doc.value("start_s", 0.0);
        s.step_s = doc.value("step_s", 30.0);
        s.count = doc.at("count").get<int>();
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("scenario time axis: ") + e.what());
    }
    const json loads = doc.value("loads", json::object());
    const json pvs = doc.value("pvs", json::object());
    for (const auto& load : model.loads()) {
        if (!loads.contains(load.id)) throw ScenarioError("scenario has no profile for load " + load.id);
        const json& entry = loads.at(load.id);
        s.load_p_kw.push_back(profile(entry, "p_kw", "load " + load.id));
        s.load_q_kvar.push_back(entry.contains("q_kvar") ? profile(entry, "q_kvar", "load " + load.id)
                                                         : std::vector<double>(s.load_p_kw.back().size(), 0.0));
    }
    for (const auto& pv : model.pvs()) {
        if (!pvs.contains(pv.id)) throw ScenarioError("scenario has no profile for pv " + pv.id);
        s.pv_p_kw.push_back(profile(pvs.at(pv.id), "p_kw", "pv " + pv.id));
    }
    if (doc.contains("avr")) {
        const json& a = doc.at("avr");
        AvrSettings settings;
        settings.v_ref = a.value("v_ref", settings.v_ref);
        settings.bandwidth = a.value("bandwidth", settings.bandwidth);
        settings.delay_s = a.value("delay_s", settings.delay_s);
        s.avr = settings;
    }
    validate_scenario(model, s);
    return s;
}

Scenario load_scenario(const FeederModel& model, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(model, buffer.str());
}

std::string serialize_scenario(const FeederModel& model, const Scenario& s) {
    json doc;
    doc["start_s"] = s.start_s;
    doc["step_s"] = s.step_s;
    doc["count"] = s.count;
    json loads = json::object();
    for (std::size_t k = 0; k < model.loads().size(); ++k) {
        loads[model.loads()[k].id] = {{"p_kw", s.load_p_kw[k]}, {"q_kvar", s.load_q_kvar[k]}};
    }
    doc["loads"] = std::move(loads);
    json pvs = json::object();
    for (std::size_t k = 0; k < model.pvs().size(); ++k) pvs[model.pvs()[k].id] = {{"p_kw", s.pv_p_kw[k]}};
    doc["pvs"] = std::move(pvs);
    if (s.avr) {
        doc["avr"] = {{"v_ref", s.avr->v_ref}, {"bandwidth", s.avr->bandwidth}, {"delay_s", s.avr->delay_s}};
    }
    return doc.dump();
}

StepForecast forecast_at(const FeederModel& model, const Scenario& s, int step) {
    const double base = model.phase_kva();
    const auto t = static_cast<std::size_t>(step);
    StepForecast f;
    for (std::size_t k = 0; k < model.loads().size(); ++k) {
        f.load_power.emplace_back(s.load_p_kw[k][t] / base, s.load_q_kvar[k][t] / base);
    }
    for (std::size_t k = 0; k < model.pvs().size(); ++k) {
        f.pv_power.push_back(std::min(s.pv_p_kw[k][t] / base, model.pvs()[k].s_inv));
    }
    return f;
}

Scenario synthesize_scenario(const FeederModel& model, const ProfileShape& shape) {
    if (!(shape.hours > 0.0) || !(shape.step_s > 0.0)) throw ScenarioError("synthesize: hours and step must be positive");
    if (shape.pv_penetration < 0.0 || shape.load_scale < 0.0 || shape.noise < 0.0) {
        throw ScenarioError("synthesize: negative shape parameter");
    }
    Scenario s;
    s.step_s = shape.step_s;
    s.count = static_cast<int>(std::llround(shape.hours * 3600.0 / shape.step_s));

    const double phase_kva = model.phase_kva();
    double load_peak_kw = 0.0;
    for (const auto& load : model.loads()) load_peak_kw += load.p * phase_kva * shape.load_scale;
    double dc_total = 0.0;
    for (const auto& pv : model.pvs()) dc_total += pv.p_dc;

    double shape_max = 0.0;
    for (int k = 0; k < 24 * 60; ++k) shape_max = std::max(shape_max, load_shape(k / 60.0));

    std::mt19937_64 rng(shape.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto noisy = [&](double v) { return shape.noise > 0.0 ? std::max(0.0, v * (1.0 + shape.noise * gauss(rng))) : v; };

    s.load_p_kw.assign(model.loads().size(), std::vector<double>(static_cast<std::size_t>(s.count)));
    s.load_q_kvar.assign(model.loads().size(), std::vector<double>(static_cast<std::size_t>(s.count)));
    s.pv_p_kw.assign(model.pvs().size(), std::vector<double>(static_cast<std::size_t>(s.count)));
    for (int t = 0; t < s.count; ++t) {
        const double hour = std::fmod(s.time_at(t) / 3600.0, 24.0);
        const double level = shape.load_scale * (1.0 - shape.load_swing * (1.0 - load_shape(hour) / shape_max));
        for (std::size_t k = 0; k < model.loads().size(); ++k) {
            const double factor = noisy(level);
            s.load_p_kw[k][static_cast<std::size_t>(t)] = model.loads()[k].p * phase_kva * factor;
            s.load_q_kvar[k][static_cast<std::size_t>(t)] = model.loads()[k].q * phase_kva * factor;
        }
        const double sun = pv_shape(hour);
        for (std::size_t k = 0; k < model.pvs().size(); ++k) {
            const auto& pv = model.pvs()[k];
            const double share = dc_total > 0.0 ? pv.p_dc / dc_total : 0.0;
            const double p = noisy(shape.pv_penetration * load_peak_kw * share * sun);
            s.pv_p_kw[k][static_cast<std::size_t>(t)] = std::min(p, pv.s_inv * phase_kva);
        }
    }
    return s;
}

}  // namespace voltreg
