#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "voltreg/netmodel.hpp"

namespace voltreg {
namespace {

using json = nlohmann::json;

[[noreturn]] void schema_error(const std::string& what) { throw FeederError(FeederError::Kind::Schema, what); }

const json& field(const json& obj, const char* key, const std::string& owner) {
    if (!obj.is_object() || !obj.contains(key)) schema_error(owner + ": missing \"" + key + "\"");
    return obj.at(key);
}

template <typename T>
T get(const json& obj, const char* key, const std::string& owner) {
    try {
        return field(obj, key, owner).get<T>();
    } catch (const json::exception& e) {
        schema_error(owner + ": bad \"" + key + "\" (" + e.what() + ")");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& owner) {
    if (!obj.contains(key)) return fallback;
    return get<T>(obj, key, owner);
}

Complex complex_of(const json& pair, const std::string& owner) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
        schema_error(owner + ": impedance entries must be [real, imag] pairs");
    }
    return {pair[0].get<double>(), pair[1].get<double>()};
}

json pair_of(Complex z) { return json::array({z.real(), z.imag()}); }

double default_angle(int phase) {
    switch (phase) {
        case 2: return -120.0;
        case 3: return 120.0;
        default: return 0.0;
    }
}

const json& array_field(const json& doc, const char* key) {
    static const json empty = json::array();
    if (!doc.contains(key)) return empty;
    if (!doc.at(key).is_array()) schema_error(std::string("\"") + key + "\" must be an array");
    return doc.at(key);
}

FeederData to_data(const json& doc) {
    if (!doc.is_object()) schema_error("feeder document must be a JSON object");
    FeederData data;
    data.name = get_or<std::string>(doc, "name", "", "feeder");

    const json& bases = field(doc, "bases", "feeder");
    data.bases.kva = get<double>(bases, "kva", "bases");
    data.bases.kv_ll = get<double>(bases, "kv_ll", "bases");

    for (const json& b : field(doc, "buses", "feeder")) {
        Bus bus;
        bus.id = get<std::string>(b, "id", "bus");
        bus.phases = get<PhaseSet>(b, "phases", "bus " + bus.id);
        if (b.contains("kv_ll")) bus.kv_ll = get<double>(b, "kv_ll", "bus " + bus.id);
        data.buses.push_back(std::move(bus));
    }
    auto kv_of = [&](const std::string& id) {
        for (const auto& b : data.buses) {
            if (b.id == id) return b.kv_ll.value_or(data.bases.kv_ll);
        }
        throw FeederError(FeederError::Kind::DanglingReference, "undefined bus \"" + id + "\"");
    };
    auto z_base = [&](const std::string& id) {
        const double kv = kv_of(id);
        return kv * kv * 1000.0 / data.bases.kva;
    };
    const double phase_kva = data.bases.kva / 3.0;

    if (doc.contains("source")) {
        const json& s = doc.at("source");
        SourceSpec src;
        src.bus = get<std::string>(s, "bus", "source");
        PhaseSet phases;
        for (const auto& b : data.buses) {
            if (b.id == src.bus) phases = b.phases;
        }
        if (phases.empty()) {
            throw FeederError(FeederError::Kind::DanglingReference, "source references undefined bus \"" + src.bus + "\"");
        }
        std::vector<double> mag = get_or<std::vector<double>>(s, "v_pu", std::vector<double>(phases.size(), 1.0), "source");
        std::vector<double> ang;
        for (int p : phases) ang.push_back(default_angle(p));
        ang = get_or<std::vector<double>>(s, "angle_deg", ang, "source");
        if (mag.size() != phases.size() || ang.size() != phases.size()) {
            schema_error("source: v_pu and angle_deg need one entry per source-bus phase");
        }
        src.voltage.resize(static_cast<Eigen::Index>(phases.size()));
        for (std::size_t k = 0; k < phases.size(); ++k) {
            src.voltage(static_cast<Eigen::Index>(k)) = std::polar(mag[k], ang[k] * std::numbers::pi / 180.0);
        }
        data.source = std::move(src);
    }

    for (const json& l : array_field(doc, "lines")) {
        Line line;
        line.id = get<std::string>(l, "id", "line");
        const std::string owner = "line " + line.id;
        line.from = get<std::string>(l, "from", owner);
        line.to = get<std::string>(l, "to", owner);
        line.phases = get<PhaseSet>(l, "phases", owner);
        const json& z = field(l, "z_ohm", owner);
        const auto n = line.phases.size();
        if (!z.is_array() || z.size() != n) schema_error(owner + ": z_ohm must be a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
        const double zb = z_base(line.from);
        line.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t a = 0; a < n; ++a) {
            if (!z[a].is_array() || z[a].size() != n) schema_error(owner + ": z_ohm row size mismatch");
            for (std::size_t b = 0; b < n; ++b) {
                line.z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = complex_of(z[a][b], owner) / zb;
            }
        }
        data.lines.push_back(std::move(line));
    }

    for (const json& r : array_field(doc, "regulators")) {
        RegulatorSpec reg;
        reg.id = get<std::string>(r, "id", "regulator");
        const std::string owner = "regulator " + reg.id;
        reg.primary = get<std::string>(r, "from", owner);
        reg.secondary = get<std::string>(r, "to", owner);
        reg.phases = get<PhaseSet>(r, "phases", owner);
        reg.z_t = complex_of(field(r, "z_ohm", owner), owner) / z_base(reg.primary);
        reg.tap_min = get_or<int>(r, "tap_min", -16, owner);
        reg.tap_max = get_or<int>(r, "tap_max", 16, owner);
        reg.a_max = get_or<double>(r, "a_max", 1.1, owner);
        reg.ganged = get_or<bool>(r, "ganged", true, owner);
        reg.initial_tap = get_or<int>(r, "initial_tap", 0, owner);
        data.regulators.push_back(std::move(reg));
    }

    for (const json& l : array_field(doc, "loads")) {
        LoadSpec load;
        load.id = get<std::string>(l, "id", "load");
        const std::string owner = "load " + load.id;
        load.bus = get<std::string>(l, "bus", owner);
        load.phase = get<int>(l, "phase", owner);
        load.p = get<double>(l, "p_kw", owner) / phase_kva;
        load.q = get_or<double>(l, "q_kvar", 0.0, owner) / phase_kva;
        data.loads.push_back(std::move(load));
    }

    for (const json& p : array_field(doc, "pvs")) {
        PvSpec pv;
        pv.id = get<std::string>(p, "id", "pv");
        const std::string owner = "pv " + pv.id;
        pv.bus = get<std::string>(p, "bus", owner);
        pv.phase = get<int>(p, "phase", owner);
        pv.p_dc = get<double>(p, "p_dc_kw", owner) / phase_kva;
        pv.s_inv = get<double>(p, "s_inv_kva", owner) / phase_kva;
        data.pvs.push_back(std::move(pv));
    }
    return data;
}

}  // namespace

FeederModel parse_feeder(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        schema_error(std::string("malformed feeder document: ") + e.what());
    }
    return FeederModel(to_data(doc));
}

FeederModel load_feeder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FeederError(FeederError::Kind::Schema, "cannot open feeder file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_feeder(buffer.str());
}

std::string serialize_feeder(const FeederModel& model) {
    json doc;
    doc["name"] = model.name();
    doc["bases"] = {{"kva", model.bases().kva}, {"kv_ll", model.bases().kv_ll}};

    json buses = json::array();
    for (const auto& b : model.buses()) {
        json jb = {{"id", b.id}, {"phases", b.phases}};
        if (b.kv_ll) jb["kv_ll"] = *b.kv_ll;
        buses.push_back(std::move(jb));
    }
    doc["buses"] = std::move(buses);

    const auto& src = model.source();
    std::vector<double> mag, ang;
    for (Eigen::Index k = 0; k < src.voltage.size(); ++k) {
        mag.push_back(std::abs(src.voltage(k)));
        ang.push_back(std::arg(src.voltage(k)) * 180.0 / std::numbers::pi);
    }
    doc["source"] = {{"bus", src.bus}, {"v_pu", mag}, {"angle_deg", ang}};

    json lines = json::array();
    for (const auto& line : model.lines()) {
        const double zb = model.z_base(line.from);
        json z = json::array();
        for (Eigen::Index a = 0; a < line.z.rows(); ++a) {
            json row = json::array();
            for (Eigen::Index b = 0; b < line.z.cols(); ++b) row.push_back(pair_of(line.z(a, b) * zb));
            z.push_back(std::move(row));
        }
        lines.push_back({{"id", line.id}, {"from", line.from}, {"to", line.to}, {"phases", line.phases}, {"z_ohm", z}});
    }
    doc["lines"] = std::move(lines);

    json regs = json::array();
    for (const auto& reg : model.regulators()) {
        regs.push_back({{"id", reg.id},
                        {"from", reg.primary},
                        {"to", reg.secondary},
                        {"phases", reg.phases},
                        {"z_ohm", pair_of(reg.z_t * model.z_base(reg.primary))},
                        {"tap_min", reg.tap_min},
                        {"tap_max", reg.tap_max},
                        {"a_max", reg.a_max},
                        {"ganged", reg.ganged},
                        {"initial_tap", reg.initial_tap}});
    }
    doc["regulators"] = std::move(regs);

    const double phase_kva = model.phase_kva();
    json loads = json::array();
    for (const auto& load : model.loads()) {
        loads.push_back({{"id", load.id},
                         {"bus", load.bus},
                         {"phase", load.phase},
                         {"p_kw", load.p * phase_kva},
                         {"q_kvar", load.q * phase_kva}});
    }
    doc["loads"] = std::move(loads);

    json pvs = json::array();
    for (const auto& pv : model.pvs()) {
        pvs.push_back({{"id", pv.id},
                       {"bus", pv.bus},
                       {"phase", pv.phase},
                       {"p_dc_kw", pv.p_dc * phase_kva},
                       {"s_inv_kva", pv.s_inv * phase_kva}});
    }
    doc["pvs"] = std::move(pvs);
    return doc.dump(2);
}

}  // namespace voltreg
