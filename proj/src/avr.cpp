#include "voltreg/avr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace voltreg {

double tap_step(const RegulatorSpec& reg) {
    const double a_min = tap_to_ratio(reg, reg.tap_min);
    const double a_max = tap_to_ratio(reg, reg.tap_max);
    return (a_max - a_min) / static_cast<double>(reg.tap_max - reg.tap_min);
}

int avr_command(const AvrSettings& settings, double step, double measured_v) {
    if (!(measured_v > 0.0)) throw std::invalid_argument("avr: measured voltage must be positive");
    if (!(settings.bandwidth > 0.0) || !(step > 0.0)) throw std::invalid_argument("avr: bandwidth and tap step must be positive");
    const double dev = measured_v - settings.v_ref;
    if (std::abs(dev) <= settings.bandwidth / 2.0) return 0;
    return -static_cast<int>(std::lround(dev / step));
}

int avr_step(const AvrSettings& settings, const RegulatorSpec& reg, int tap, double measured_v) {
    const int moved = tap + avr_command(settings, tap_step(reg), measured_v);
    return std::clamp(moved, reg.tap_min, reg.tap_max);
}

AvrController::AvrController(const FeederModel& model, AvrSettings settings, TapVector taps)
    : model_(model), settings_(settings), taps_(std::move(taps)), out_of_band_(taps_.size(), 0.0) {
    model_.check_taps(taps_);
    if (!(settings_.bandwidth > 0.0)) throw std::invalid_argument("avr: bandwidth must be positive");
}

std::vector<double> AvrController::measure(const Vector& magnitudes) const {
    const auto& index = model_.index();
    std::vector<double> out;
    for (std::size_t c = 0; c < taps_.size(); ++c) {
        const auto& ch = model_.tap_channels()[c];
        const auto& reg = model_.channel_regulator(c);
        double sum = 0.0;
        for (int p : ch.phases) sum += magnitudes(index.row(reg.secondary, p));
        out.push_back(sum / static_cast<double>(ch.phases.size()));
    }
    return out;
}

const TapVector& AvrController::step(const Vector& magnitudes, double dt) {
    const auto measured = measure(magnitudes);
    for (std::size_t c = 0; c < taps_.size(); ++c) {
        const auto& reg = model_.channel_regulator(c);
        const int command = avr_command(settings_, tap_step(reg), measured[c]);
        if (command == 0) {
            out_of_band_[c] = 0.0;
            continue;
        }
        out_of_band_[c] += dt;
        if (out_of_band_[c] + 1e-9 < settings_.delay_s) continue;
        taps_[c] = std::clamp(taps_[c] + command, reg.tap_min, reg.tap_max);
        out_of_band_[c] = 0.0;
    }
    return taps_;
}

}  // namespace voltreg
