#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "voltreg/types.hpp"

namespace voltreg {

class FeederError : public std::runtime_error {
public:
    enum class Kind {
        Schema,
        DanglingReference,
        NonRadial,
        MissingSource,
        SingularImpedance,
        TapOutOfRange,
        Invalid,
    };

    FeederError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Sorted, duplicate-free subset of {1, 2, 3}.
using PhaseSet = std::vector<int>;

struct Bases {
    double kva = 1000.0;   // three-phase power base
    double kv_ll = 4.16;   // default line-to-line voltage base
};

struct Bus {
    std::string id;
    PhaseSet phases;
    std::optional<double> kv_ll;  // overrides Bases::kv_ll
};

/// Series phase impedance matrix in per-unit, ordered like `phases`.
struct Line {
    std::string id;
    std::string from;
    std::string to;
    PhaseSet phases;
    CMatrix z;
};

/// Step-voltage regulator between a primary bus (node i) and a secondary bus
/// (node j). Each regulated phase gets the stamp (1/z_t)[[a^2, -a], [-a, 1]].
struct RegulatorSpec {
    std::string id;
    std::string primary;
    std::string secondary;
    PhaseSet phases;
    Complex z_t;  // per-unit, per phase
    int tap_min = -16;
    int tap_max = 16;
    double a_max = 1.1;
    bool ganged = true;
    int initial_tap = 0;
};

/// Constant-power wye load, per-unit on the per-phase power base.
struct LoadSpec {
    std::string id;
    std::string bus;
    int phase = 1;
    double p = 0.0;
    double q = 0.0;
};

/// Single-phase PV system with a smart inverter, per-unit on the per-phase power base.
struct PvSpec {
    std::string id;
    std::string bus;
    int phase = 1;
    double p_dc = 0.0;
    double s_inv = 0.0;
};

struct SourceSpec {
    std::string bus;
    CVector voltage;  // per present phase, per-unit
};

/// Plain description used to construct a FeederModel.
struct FeederData {
    std::string name;
    Bases bases;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<RegulatorSpec> regulators;
    std::vector<LoadSpec> loads;
    std::vector<PvSpec> pvs;
    std::optional<SourceSpec> source;
};

struct NodePhase {
    std::string bus;
    int phase = 0;

    auto operator<=>(const NodePhase&) const = default;
};

/// Bijection between (bus, phase) and matrix rows, sorted by bus id then phase.
/// Rows are also partitioned into source rows and non-source ("reduced") rows;
/// the reduced numbering keeps the global order.
class NodePhaseIndex {
public:
    NodePhaseIndex() = default;
    NodePhaseIndex(const std::vector<Bus>& buses, const std::string& source_bus);

    int size() const { return static_cast<int>(nodes_.size()); }
    int reduced_size() const { return static_cast<int>(nonsource_.size()); }

    /// Row of (bus, phase); throws FeederError if absent.
    int row(const std::string& bus, int phase) const;
    std::optional<int> find(const std::string& bus, int phase) const;
    const NodePhase& node(int row) const { return nodes_.at(static_cast<std::size_t>(row)); }

    bool is_source(int row) const { return reduced_of_[static_cast<std::size_t>(row)] < 0; }
    /// Position of `row` among non-source rows, or -1 for source rows.
    int reduced(int row) const { return reduced_of_[static_cast<std::size_t>(row)]; }
    const std::vector<int>& source_rows() const { return source_; }
    const std::vector<int>& nonsource_rows() const { return nonsource_; }

private:
    std::vector<NodePhase> nodes_;
    std::map<NodePhase, int> rows_;
    std::vector<int> reduced_of_;
    std::vector<int> source_;
    std::vector<int> nonsource_;
};

/// One integer tap variable. Ganged regulators own one channel covering every
/// phase; per-phase regulators own one channel per phase.
struct TapChannel {
    int regulator = 0;
    PhaseSet phases;
    std::string name;
};

/// Immutable, validated feeder. Construction throws FeederError on any
/// violated invariant (dangling references, cycles, missing source, ...).
class FeederModel {
public:
    explicit FeederModel(FeederData data);

    const std::string& name() const { return data_.name; }
    const Bases& bases() const { return data_.bases; }
    const std::vector<Bus>& buses() const { return data_.buses; }
    const std::vector<Line>& lines() const { return data_.lines; }
    const std::vector<RegulatorSpec>& regulators() const { return data_.regulators; }
    const std::vector<LoadSpec>& loads() const { return data_.loads; }
    const std::vector<PvSpec>& pvs() const { return data_.pvs; }
    const SourceSpec& source() const { return *data_.source; }
    const FeederData& data() const { return data_; }

    const NodePhaseIndex& index() const { return index_; }
    const std::vector<TapChannel>& tap_channels() const { return channels_; }

    /// Full source voltage vector over the source rows, in row order.
    CVector source_voltage() const;
    /// Line admittance block (inverse of the series impedance), same phase order.
    const CMatrix& line_admittance(std::size_t line) const { return line_y_[line]; }

    const Bus& bus(const std::string& id) const;
    double kv_ll(const std::string& bus_id) const;
    /// Per-phase power base in kVA.
    double phase_kva() const { return data_.bases.kva / 3.0; }
    /// Impedance base in ohms at the voltage level of `bus_id`.
    double z_base(const std::string& bus_id) const;

    TapVector initial_taps() const;
    /// Throws FeederError::TapOutOfRange when a tap lies outside its regulator range.
    void check_taps(const TapVector& taps) const;
    std::vector<double> tap_ratios(const TapVector& taps) const;
    const RegulatorSpec& channel_regulator(std::size_t channel) const;

private:
    FeederData data_;
    NodePhaseIndex index_;
    std::vector<TapChannel> channels_;
    std::vector<CMatrix> line_y_;
};

/// Tap ratio a = 1 + (tap / tap_max) (a_max - 1). Throws when |tap| > tap_max.
template <typename Scalar>
Scalar tap_to_ratio(int tap, int tap_max, Scalar a_max) {
    if (tap_max <= 0 || tap > tap_max || tap < -tap_max) {
        throw FeederError(FeederError::Kind::TapOutOfRange,
                          "tap " + std::to_string(tap) + " outside [-" + std::to_string(tap_max) +
                              ", " + std::to_string(tap_max) + "]");
    }
    return Scalar(1) + Scalar(tap) / Scalar(tap_max) * (a_max - Scalar(1));
}

/// Range-checked ratio for a concrete regulator.
double tap_to_ratio(const RegulatorSpec& reg, int tap);

/// Two-port admittance of a regulator phase, ordered (primary i, secondary j).
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, 2, 2> regulator_stamp(std::complex<Scalar> z_t, Scalar a) {
    if (std::abs(z_t) == Scalar(0)) {
        throw FeederError(FeederError::Kind::SingularImpedance, "regulator impedance is zero");
    }
    const std::complex<Scalar> y = Scalar(1) / z_t;
    Eigen::Matrix<std::complex<Scalar>, 2, 2> stamp;
    stamp << y * (a * a), -y * a, -y * a, y;
    return stamp;
}

/// Nodal admittance matrix over all node-phases at the given integer taps.
CMatrix build_admittance(const FeederModel& model, const TapVector& taps);
/// Same as build_admittance but with arbitrary (possibly fractional) ratios per channel.
CMatrix build_admittance_at_ratios(const FeederModel& model, const std::vector<double>& ratios);

/// Non-source impedance matrix and no-load voltages with the source held fixed:
/// V_n = v_noload + z0 * I_n.
struct SourceReduction {
    CMatrix z0;
    CVector v_noload;
};

SourceReduction reduce_source(const NodePhaseIndex& index, const CMatrix& y, const CVector& v_source);

/// Linear coefficient M of the Taylor-linearized admittance change of one tap
/// channel: delta_Y = (a - a0) M, with M_ii = 2 a0 / z_t, M_ij = M_ji = -1 / z_t.
CSparse admittance_slope(const FeederModel& model, std::size_t channel, double a0);
/// Linearized admittance change (a - a0) M over all node-phases.
CSparse delta_admittance(const FeederModel& model, std::size_t channel, double a, double a0);

/// Feeder document (JSON) parsing and serialization, impedances in ohms.
FeederModel parse_feeder(std::string_view text);
FeederModel load_feeder(const std::string& path);
std::string serialize_feeder(const FeederModel& model);

}  // namespace voltreg
