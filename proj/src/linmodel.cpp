#include "voltreg/linmodel.hpp"

#include <sstream>

namespace voltreg {

double LinearizationPoint::consistency() const {
    if (v0.size() == 0) return 0.0;
    return (v0 - v_noload - z0 * i0).cwiseAbs().maxCoeff();
}

LinearizationPoint linearize(const FeederModel& model, const NetworkFactorization& net,
                             const PowerFlowSolution& solution, double tol) {
    const auto& index = model.index();
    if (solution.voltage.size() != index.size() || solution.current.size() != index.reduced_size()) {
        throw LinearizationError("linearize: solution does not match the feeder");
    }
    LinearizationPoint lp;
    lp.v0_full = solution.voltage;
    lp.v0 = solution.voltage(index.nonsource_rows());
    lp.i0 = solution.current;
    lp.z0 = net.reduction.z0;
    lp.v_noload = net.reduction.v_noload;
    lp.tap0 = net.taps;
    lp.a0 = model.tap_ratios(net.taps);
    const double err = lp.consistency();
    if (!(err < tol)) {
        std::ostringstream msg;
        msg << "linearize: V0, I0 and Z0 are inconsistent (residual " << err << " p.u.)";
        throw LinearizationError(msg.str());
    }
    return lp;
}

LinearizationPoint linearize(const FeederModel& model, const PowerFlowSolution& solution, const TapVector& taps0,
                             double tol) {
    return linearize(model, factorize(model, taps0), solution, tol);
}

CVector tap_sensitivity(const FeederModel& model, const LinearizationPoint& lp, std::size_t channel) {
    if (channel >= lp.a0.size()) throw LinearizationError("tap_sensitivity: no such tap channel");
    const CSparse slope = admittance_slope(model, channel, lp.a0[channel]);
    const CVector injected = slope * lp.v0_full;
    const CVector reduced = injected(model.index().nonsource_rows());
    return -(lp.z0 * reduced);
}

std::vector<CVector> tap_sensitivities(const FeederModel& model, const LinearizationPoint& lp) {
    std::vector<CVector> out;
    out.reserve(lp.a0.size());
    for (std::size_t c = 0; c < lp.a0.size(); ++c) out.push_back(tap_sensitivity(model, lp, c));
    return out;
}

CVector delta_v(const LinearizationPoint& lp, const std::vector<CVector>& sensitivities,
                const std::vector<double>& ratios, const CVector& delta_i) {
    if (ratios.size() != lp.a0.size() || sensitivities.size() != lp.a0.size() || delta_i.size() != lp.v0.size()) {
        throw LinearizationError("delta_v: dimension mismatch");
    }
    CVector dv = lp.z0 * delta_i;
    for (std::size_t p = 0; p < ratios.size(); ++p) dv += (ratios[p] - lp.a0[p]) * sensitivities[p];
    return dv;
}

PowerDelta<double> delta_pq(const LinearizationPoint& lp, const CVector& dv, const CVector& di, int node) {
    const auto k = static_cast<Eigen::Index>(node);
    return delta_pq(lp.v0(k), lp.i0(k), dv(k).real(), dv(k).imag(), di(k).real(), di(k).imag());
}

}  // namespace voltreg
