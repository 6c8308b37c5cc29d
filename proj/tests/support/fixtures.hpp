#pragma once

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "voltreg/simharness.hpp"

namespace fixtures {

using json = nlohmann::json;

inline std::string data_path(const std::string& name) { return std::string(VOLTREG_DATA_DIR) + "/" + name; }

inline voltreg::FeederModel feeder4() { return voltreg::load_feeder(data_path("feeder4.json")); }

inline json cplx(voltreg::Complex z) { return json::array({z.real(), z.imag()}); }

// Single-phase source B1 feeding B2 through one line given in per-unit.
// Bases: 3000 kVA (1000 kVA per phase), 4.16 kV.
constexpr double kPhaseKva = 1000.0;
inline double z_base() { return 4.16 * 4.16 * 1000.0 / 3000.0; }

inline json single_line_doc(voltreg::Complex z_pu, voltreg::Complex load_pu, double v_source = 1.0) {
    json doc;
    doc["name"] = "single-line";
    doc["bases"] = {{"kva", 3 * kPhaseKva}, {"kv_ll", 4.16}};
    doc["buses"] = json::array({{{"id", "B1"}, {"phases", {1}}}, {{"id", "B2"}, {"phases", {1}}}});
    doc["source"] = {{"bus", "B1"}, {"v_pu", {v_source}}, {"angle_deg", {0.0}}};
    doc["lines"] = json::array(
        {{{"id", "L1"}, {"from", "B1"}, {"to", "B2"}, {"phases", {1}}, {"z_ohm", json::array({json::array({cplx(z_pu * z_base())})})}}});
    doc["loads"] = json::array(
        {{{"id", "LD"}, {"bus", "B2"}, {"phase", 1}, {"p_kw", load_pu.real() * kPhaseKva}, {"q_kvar", load_pu.imag() * kPhaseKva}}});
    return doc;
}

struct ChainOptions {
    int regulators = 1;
    int pvs = 1;
    bool ganged = true;
    std::vector<int> initial_taps;  // per regulator, defaults to 0
};

// Random three-phase chain: B1 -line- B2 -VR1- B3 -line- B4 [-VR2- B5 -line- B6].
inline json random_chain_doc(std::mt19937_64& rng, const ChainOptions& opt) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    json doc;
    doc["name"] = "chain";
    doc["bases"] = {{"kva", 5000.0}, {"kv_ll", 4.16}};
    const int nbus = 2 + 2 * opt.regulators;
    json buses = json::array();
    for (int b = 1; b <= nbus; ++b) buses.push_back({{"id", "B" + std::to_string(b)}, {"phases", {1, 2, 3}}});
    doc["buses"] = buses;
    doc["source"] = {{"bus", "B1"}, {"v_pu", {1.0, 1.0, 1.0}}};

    auto line_z = [&] {
        json z = json::array();
        const double r = 0.1 + 0.15 * u(rng), x = 0.25 + 0.3 * u(rng);
        const double rm = r * (0.25 + 0.15 * u(rng)), xm = x * (0.3 + 0.15 * u(rng));
        for (int i = 0; i < 3; ++i) {
            json row = json::array();
            for (int j = 0; j < 3; ++j) row.push_back(i == j ? json::array({r, x}) : json::array({rm, xm}));
            z.push_back(row);
        }
        return z;
    };
    json lines = json::array(), regs = json::array();
    for (int b = 1; b < nbus; ++b) {
        const std::string from = "B" + std::to_string(b), to = "B" + std::to_string(b + 1);
        if (b % 2 == 1) {
            lines.push_back({{"id", "L" + std::to_string(b)}, {"from", from}, {"to", to}, {"phases", {1, 2, 3}}, {"z_ohm", line_z()}});
        } else {
            const int r = b / 2;
            const int tap = r - 1 < static_cast<int>(opt.initial_taps.size()) ? opt.initial_taps[static_cast<std::size_t>(r - 1)] : 0;
            regs.push_back({{"id", "VR" + std::to_string(r)},
                            {"from", from},
                            {"to", to},
                            {"phases", {1, 2, 3}},
                            {"z_ohm", json::array({0.002 + 0.01 * u(rng), 0.01 + 0.03 * u(rng)})},
                            {"ganged", opt.ganged},
                            {"initial_tap", tap}});
        }
    }
    doc["lines"] = lines;
    doc["regulators"] = regs;
    json loads = json::array();
    for (int b = 2; b <= nbus; ++b) {
        for (int p = 1; p <= 3; ++p) {
            if (u(rng) < 0.25) continue;
            const double kw = 40.0 + 260.0 * u(rng);
            loads.push_back({{"id", "LD" + std::to_string(b) + std::to_string(p)},
                             {"bus", "B" + std::to_string(b)},
                             {"phase", p},
                             {"p_kw", kw},
                             {"q_kvar", kw * (0.2 + 0.4 * u(rng))}});
        }
    }
    doc["loads"] = loads;
    json pvs = json::array();
    for (int k = 0; k < opt.pvs; ++k) {
        const int b = 2 + static_cast<int>(u(rng) * (nbus - 1));
        const int p = 1 + static_cast<int>(u(rng) * 3);
        const double kw = 200.0 + 600.0 * u(rng);
        pvs.push_back({{"id", "PV" + std::to_string(k)},
                       {"bus", "B" + std::to_string(std::min(b, nbus))},
                       {"phase", std::min(p, 3)},
                       {"p_dc_kw", kw},
                       {"s_inv_kva", 1.1 * kw}});
    }
    doc["pvs"] = pvs;
    return doc;
}

inline voltreg::FeederModel model_of(const json& doc) { return voltreg::parse_feeder(doc.dump()); }

// Nominal loads scaled by `load_scale`, each PV at `pv_level` of its DC rating.
inline voltreg::StepForecast nominal_forecast(const voltreg::FeederModel& model, double load_scale, double pv_level) {
    voltreg::StepForecast f;
    for (const auto& l : model.loads()) f.load_power.emplace_back(load_scale * l.p, load_scale * l.q);
    for (const auto& pv : model.pvs()) f.pv_power.push_back(std::min(pv_level * pv.p_dc, pv.s_inv));
    return f;
}

inline voltreg::PowerFlowCase nominal_case(const voltreg::FeederModel& model, const voltreg::TapVector& taps,
                                           double load_scale, double pv_level) {
    const auto f = nominal_forecast(model, load_scale, pv_level);
    std::vector<voltreg::Complex> pv(f.pv_power.begin(), f.pv_power.end());
    return {taps, voltreg::net_injection(model, f.load_power, pv)};
}

}  // namespace fixtures
