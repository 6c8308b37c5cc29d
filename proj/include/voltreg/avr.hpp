#pragma once

#include "voltreg/netmodel.hpp"

namespace voltreg {

/// Deadband regulator settings, voltages in per-unit.
struct AvrSettings {
    double v_ref = 1.03;
    double bandwidth = 0.0167;
    double delay_s = 0.0;
};

/// Ratio change per tap position, (a_max - a_min) / (tap_max - tap_min).
double tap_step(const RegulatorSpec& reg);

/// Signed tap movement requested for one measurement, before clamping: zero
/// inside the deadband, otherwise round(|dev| / step) towards the reference.
int avr_command(const AvrSettings& settings, double step, double measured_v);

/// Next tap for one channel, clamped to the regulator range.
int avr_step(const AvrSettings& settings, const RegulatorSpec& reg, int tap, double measured_v);

/// Local controller for every tap channel of a feeder. Each channel watches the
/// secondary-side magnitude of its phases (mean over phases when ganged).
class AvrController {
public:
    AvrController(const FeederModel& model, AvrSettings settings, TapVector taps);
    AvrController(const FeederModel& model, AvrSettings settings)
        : AvrController(model, settings, model.initial_taps()) {}

    const TapVector& taps() const { return taps_; }
    const AvrSettings& settings() const { return settings_; }

    /// Measured quantity per channel from magnitudes over every node-phase.
    std::vector<double> measure(const Vector& magnitudes) const;

    /// Advance by `dt` seconds given node-phase magnitudes; returns the new taps.
    const TapVector& step(const Vector& magnitudes, double dt);

private:
    const FeederModel& model_;
    AvrSettings settings_;
    TapVector taps_;
    std::vector<double> out_of_band_;  // seconds spent outside the band, per channel
};

}  // namespace voltreg
