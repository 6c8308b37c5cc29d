#include "voltreg/netmodel.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace voltreg {
namespace {

[[noreturn]] void fail(FeederError::Kind kind, const std::string& what) { throw FeederError(kind, what); }

bool contains(const PhaseSet& set, int phase) { return std::find(set.begin(), set.end(), phase) != set.end(); }

void check_phase_set(const PhaseSet& phases, const std::string& owner) {
    if (phases.empty() || phases.size() > 3) {
        fail(FeederError::Kind::Schema, owner + ": phase set must hold 1 to 3 phases");
    }
    for (std::size_t k = 0; k < phases.size(); ++k) {
        if (phases[k] < 1 || phases[k] > 3) {
            fail(FeederError::Kind::Schema, owner + ": phase " + std::to_string(phases[k]) + " not in {1,2,3}");
        }
        if (k > 0 && phases[k] <= phases[k - 1]) {
            fail(FeederError::Kind::Schema, owner + ": phases must be sorted and unique");
        }
    }
}

struct DisjointSets {
    std::vector<int> parent;
    explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[static_cast<std::size_t>(b)] = a;
        return true;
    }
};

}  // namespace

NodePhaseIndex::NodePhaseIndex(const std::vector<Bus>& buses, const std::string& source_bus) {
    for (const auto& bus : buses) {
        for (int phase : bus.phases) nodes_.push_back({bus.id, phase});
    }
    std::sort(nodes_.begin(), nodes_.end());
    reduced_of_.assign(nodes_.size(), -1);
    for (std::size_t r = 0; r < nodes_.size(); ++r) {
        rows_.emplace(nodes_[r], static_cast<int>(r));
        if (nodes_[r].bus == source_bus) {
            source_.push_back(static_cast<int>(r));
        } else {
            reduced_of_[r] = static_cast<int>(nonsource_.size());
            nonsource_.push_back(static_cast<int>(r));
        }
    }
}

std::optional<int> NodePhaseIndex::find(const std::string& bus, int phase) const {
    auto it = rows_.find(NodePhase{bus, phase});
    if (it == rows_.end()) return std::nullopt;
    return it->second;
}

int NodePhaseIndex::row(const std::string& bus, int phase) const {
    auto r = find(bus, phase);
    if (!r) {
        fail(FeederError::Kind::DanglingReference, "no node-phase " + bus + "." + std::to_string(phase));
    }
    return *r;
}

FeederModel::FeederModel(FeederData data) : data_(std::move(data)) {
    using Kind = FeederError::Kind;
    if (data_.bases.kva <= 0.0 || data_.bases.kv_ll <= 0.0) fail(Kind::Schema, "bases must be positive");

    std::map<std::string, int> bus_pos;
    for (std::size_t b = 0; b < data_.buses.size(); ++b) {
        const auto& bus = data_.buses[b];
        if (bus.id.empty()) fail(Kind::Schema, "bus with empty id");
        check_phase_set(bus.phases, "bus " + bus.id);
        if (bus.kv_ll && *bus.kv_ll <= 0.0) fail(Kind::Schema, "bus " + bus.id + ": kv_ll must be positive");
        if (!bus_pos.emplace(bus.id, static_cast<int>(b)).second) fail(Kind::Schema, "duplicate bus " + bus.id);
    }
    if (data_.buses.empty()) fail(Kind::Schema, "feeder has no buses");

    auto require_bus = [&](const std::string& id, const std::string& owner) -> const Bus& {
        auto it = bus_pos.find(id);
        if (it == bus_pos.end()) fail(Kind::DanglingReference, owner + " references undefined bus \"" + id + "\"");
        return data_.buses[static_cast<std::size_t>(it->second)];
    };
    auto require_phases = [&](const Bus& bus, const PhaseSet& phases, const std::string& owner) {
        for (int p : phases) {
            if (!contains(bus.phases, p)) {
                fail(Kind::DanglingReference,
                     owner + " uses phase " + std::to_string(p) + " absent at bus " + bus.id);
            }
        }
    };
    auto same_level = [&](const std::string& a, const std::string& b, const std::string& owner) {
        const double ka = kv_ll(a), kb = kv_ll(b);
        if (std::abs(ka - kb) > 1e-9 * std::max(ka, kb)) {
            fail(Kind::Invalid, owner + " joins buses on different voltage bases");
        }
    };

    if (!data_.source) fail(Kind::MissingSource, "feeder has no source bus");
    const Bus& source_bus = require_bus(data_.source->bus, "source");
    if (data_.source->voltage.size() != static_cast<Eigen::Index>(source_bus.phases.size())) {
        fail(Kind::Schema, "source voltage must list one value per source-bus phase");
    }

    std::set<std::string> ids;
    auto unique_id = [&](const std::string& kind, const std::string& id) {
        if (!ids.insert(kind + ":" + id).second) fail(Kind::Schema, "duplicate " + kind + " id " + id);
    };

    DisjointSets forest(static_cast<int>(data_.buses.size()));
    auto add_edge = [&](const std::string& from, const std::string& to, const std::string& owner) {
        if (from == to) fail(Kind::Invalid, owner + " connects a bus to itself");
        if (!forest.unite(bus_pos[from], bus_pos[to])) {
            fail(Kind::NonRadial, owner + " closes a loop; only radial feeders are supported");
        }
    };

    for (const auto& line : data_.lines) {
        const std::string owner = "line " + line.id;
        unique_id("line", line.id);
        check_phase_set(line.phases, owner);
        require_phases(require_bus(line.from, owner), line.phases, owner);
        require_phases(require_bus(line.to, owner), line.phases, owner);
        same_level(line.from, line.to, owner);
        const auto n = static_cast<Eigen::Index>(line.phases.size());
        if (line.z.rows() != n || line.z.cols() != n) fail(Kind::Schema, owner + ": impedance matrix size mismatch");
        if ((line.z.real().array() < 0.0).any()) fail(Kind::Invalid, owner + ": negative resistance");
        Eigen::FullPivLU<CMatrix> lu(line.z);
        if (!lu.isInvertible()) fail(Kind::SingularImpedance, owner + ": singular impedance matrix");
        line_y_.push_back(lu.inverse());
        add_edge(line.from, line.to, owner);
    }

    for (std::size_t r = 0; r < data_.regulators.size(); ++r) {
        const auto& reg = data_.regulators[r];
        const std::string owner = "regulator " + reg.id;
        unique_id("regulator", reg.id);
        check_phase_set(reg.phases, owner);
        require_phases(require_bus(reg.primary, owner), reg.phases, owner);
        require_phases(require_bus(reg.secondary, owner), reg.phases, owner);
        same_level(reg.primary, reg.secondary, owner);
        if (!(reg.tap_min < 0 && reg.tap_max > 0)) fail(Kind::Invalid, owner + ": need tap_min < 0 < tap_max");
        if (!(reg.a_max > 1.0)) fail(Kind::Invalid, owner + ": a_max must exceed 1");
        if (std::abs(reg.z_t) == 0.0) fail(Kind::SingularImpedance, owner + ": zero impedance");
        if (reg.z_t.real() < 0.0) fail(Kind::Invalid, owner + ": negative resistance");
        if (reg.initial_tap < reg.tap_min || reg.initial_tap > reg.tap_max) {
            fail(Kind::TapOutOfRange, owner + ": initial tap out of range");
        }
        if (tap_to_ratio(reg, reg.tap_min) <= 0.0) fail(Kind::Invalid, owner + ": non-positive ratio at tap_min");
        add_edge(reg.primary, reg.secondary, owner);
        if (reg.ganged) {
            channels_.push_back({static_cast<int>(r), reg.phases, reg.id});
        } else {
            for (int p : reg.phases) channels_.push_back({static_cast<int>(r), {p}, reg.id + "." + std::to_string(p)});
        }
    }

    for (std::size_t b = 1; b < data_.buses.size(); ++b) {
        if (forest.find(0) != forest.find(static_cast<int>(b))) {
            fail(Kind::NonRadial, "bus " + data_.buses[b].id + " is not connected to the rest of the feeder");
        }
    }

    for (const auto& load : data_.loads) {
        const std::string owner = "load " + load.id;
        unique_id("load", load.id);
        require_phases(require_bus(load.bus, owner), {load.phase}, owner);
    }
    for (const auto& pv : data_.pvs) {
        const std::string owner = "pv " + pv.id;
        unique_id("pv", pv.id);
        require_phases(require_bus(pv.bus, owner), {pv.phase}, owner);
        if (pv.p_dc < 0.0) fail(Kind::Invalid, owner + ": negative DC rating");
        if (pv.s_inv < pv.p_dc) fail(Kind::Invalid, owner + ": inverter rating below DC rating");
    }

    index_ = NodePhaseIndex(data_.buses, data_.source->bus);

    // Every node-phase must reach a source phase through elements carrying that phase.
    DisjointSets phase_forest(index_.size());
    for (const auto& line : data_.lines) {
        for (int p : line.phases) phase_forest.unite(index_.row(line.from, p), index_.row(line.to, p));
    }
    for (const auto& reg : data_.regulators) {
        for (int p : reg.phases) phase_forest.unite(index_.row(reg.primary, p), index_.row(reg.secondary, p));
    }
    for (int r = 0; r < index_.size(); ++r) {
        const int root = phase_forest.find(r);
        const bool fed = std::any_of(index_.source_rows().begin(), index_.source_rows().end(),
                                     [&](int s) { return phase_forest.find(s) == root; });
        if (!fed) {
            const auto& np = index_.node(r);
            fail(Kind::NonRadial, "node-phase " + np.bus + "." + std::to_string(np.phase) + " is not fed by the source");
        }
    }
}

CVector FeederModel::source_voltage() const { return data_.source->voltage; }

const Bus& FeederModel::bus(const std::string& id) const {
    for (const auto& b : data_.buses) {
        if (b.id == id) return b;
    }
    fail(FeederError::Kind::DanglingReference, "undefined bus \"" + id + "\"");
}

double FeederModel::kv_ll(const std::string& bus_id) const {
    const auto& b = bus(bus_id);
    return b.kv_ll.value_or(data_.bases.kv_ll);
}

double FeederModel::z_base(const std::string& bus_id) const {
    const double kv = kv_ll(bus_id);
    return kv * kv * 1000.0 / data_.bases.kva;
}

TapVector FeederModel::initial_taps() const {
    TapVector taps;
    taps.reserve(channels_.size());
    for (const auto& ch : channels_) taps.push_back(data_.regulators[static_cast<std::size_t>(ch.regulator)].initial_tap);
    return taps;
}

const RegulatorSpec& FeederModel::channel_regulator(std::size_t channel) const {
    return data_.regulators[static_cast<std::size_t>(channels_.at(channel).regulator)];
}

void FeederModel::check_taps(const TapVector& taps) const {
    if (taps.size() != channels_.size()) {
        fail(FeederError::Kind::TapOutOfRange, "expected " + std::to_string(channels_.size()) + " taps, got " +
                                                   std::to_string(taps.size()));
    }
    for (std::size_t c = 0; c < taps.size(); ++c) {
        const auto& reg = channel_regulator(c);
        if (taps[c] < reg.tap_min || taps[c] > reg.tap_max) {
            fail(FeederError::Kind::TapOutOfRange,
                 "tap " + std::to_string(taps[c]) + " out of range for " + channels_[c].name);
        }
    }
}

std::vector<double> FeederModel::tap_ratios(const TapVector& taps) const {
    check_taps(taps);
    std::vector<double> ratios;
    ratios.reserve(taps.size());
    for (std::size_t c = 0; c < taps.size(); ++c) ratios.push_back(tap_to_ratio(channel_regulator(c), taps[c]));
    return ratios;
}

double tap_to_ratio(const RegulatorSpec& reg, int tap) {
    if (tap < reg.tap_min || tap > reg.tap_max) {
        fail(FeederError::Kind::TapOutOfRange, "tap " + std::to_string(tap) + " out of range for " + reg.id);
    }
    return 1.0 + static_cast<double>(tap) / static_cast<double>(reg.tap_max) * (reg.a_max - 1.0);
}

CMatrix build_admittance(const FeederModel& model, const TapVector& taps) {
    return build_admittance_at_ratios(model, model.tap_ratios(taps));
}

CMatrix build_admittance_at_ratios(const FeederModel& model, const std::vector<double>& ratios) {
    const auto& index = model.index();
    if (ratios.size() != model.tap_channels().size()) {
        fail(FeederError::Kind::TapOutOfRange, "ratio vector does not match tap channels");
    }
    CMatrix y = CMatrix::Zero(index.size(), index.size());
    for (std::size_t l = 0; l < model.lines().size(); ++l) {
        const auto& line = model.lines()[l];
        const CMatrix& yl = model.line_admittance(l);
        const auto n = line.phases.size();
        for (std::size_t a = 0; a < n; ++a) {
            const int fa = index.row(line.from, line.phases[a]);
            const int ta = index.row(line.to, line.phases[a]);
            for (std::size_t b = 0; b < n; ++b) {
                const int fb = index.row(line.from, line.phases[b]);
                const int tb = index.row(line.to, line.phases[b]);
                const Complex v = yl(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                y(fa, fb) += v;
                y(ta, tb) += v;
                y(fa, tb) -= v;
                y(ta, fb) -= v;
            }
        }
    }
    const auto& channels = model.tap_channels();
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const auto& reg = model.channel_regulator(c);
        const auto stamp = regulator_stamp(reg.z_t, ratios[c]);
        for (int p : channels[c].phases) {
            const int i = index.row(reg.primary, p);
            const int j = index.row(reg.secondary, p);
            y(i, i) += stamp(0, 0);
            y(i, j) += stamp(0, 1);
            y(j, i) += stamp(1, 0);
            y(j, j) += stamp(1, 1);
        }
    }
    return y;
}

SourceReduction reduce_source(const NodePhaseIndex& index, const CMatrix& y, const CVector& v_source) {
    const auto& ns = index.nonsource_rows();
    const auto& src = index.source_rows();
    const auto n = static_cast<Eigen::Index>(ns.size());
    if (v_source.size() != static_cast<Eigen::Index>(src.size())) {
        fail(FeederError::Kind::Schema, "source voltage size mismatch");
    }
    CMatrix y_nn = y(ns, ns);
    CMatrix y_ns = y(ns, src);
    SourceReduction out;
    if (n == 0) {
        out.z0.resize(0, 0);
        out.v_noload.resize(0);
        return out;
    }
    Eigen::PartialPivLU<CMatrix> lu(y_nn);
    if (!(lu.rcond() > 1e-14)) {
        fail(FeederError::Kind::SingularImpedance, "non-source admittance block is singular (isolated node-phase)");
    }
    out.z0 = lu.inverse();
    out.v_noload = -(out.z0 * (y_ns * v_source));
    return out;
}

CSparse admittance_slope(const FeederModel& model, std::size_t channel, double a0) {
    const auto& index = model.index();
    const auto& reg = model.channel_regulator(channel);
    const Complex inv_z = 1.0 / reg.z_t;
    std::vector<Eigen::Triplet<Complex>> entries;
    for (int p : model.tap_channels().at(channel).phases) {
        const int i = index.row(reg.primary, p);
        const int j = index.row(reg.secondary, p);
        entries.emplace_back(i, i, 2.0 * a0 * inv_z);
        entries.emplace_back(i, j, -inv_z);
        entries.emplace_back(j, i, -inv_z);
    }
    CSparse m(index.size(), index.size());
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
}

CSparse delta_admittance(const FeederModel& model, std::size_t channel, double a, double a0) {
    return CSparse(Complex(a - a0, 0.0) * admittance_slope(model, channel, a0));
}

}  // namespace voltreg
