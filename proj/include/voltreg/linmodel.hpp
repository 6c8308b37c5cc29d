#pragma once

#include <stdexcept>

#include "voltreg/netmodel.hpp"
#include "voltreg/powerflow.hpp"

namespace voltreg {

class LinearizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operating state about which every perturbation is defined. Vectors run over
/// non-source node-phases; `v0_full` carries every row (source rows included).
struct LinearizationPoint {
    CVector v0;
    CVector i0;
    CVector v0_full;
    CMatrix z0;
    CVector v_noload;
    TapVector tap0;
    std::vector<double> a0;

    Vector vd0() const { return v0.real(); }
    Vector vq0() const { return v0.imag(); }
    Vector id0() const { return i0.real(); }
    Vector iq0() const { return i0.imag(); }

    /// max |V0 - V_noload - Z0 I0|
    double consistency() const;
};

LinearizationPoint linearize(const FeederModel& model, const NetworkFactorization& net,
                             const PowerFlowSolution& solution, double tol = 1e-8);
LinearizationPoint linearize(const FeederModel& model, const PowerFlowSolution& solution, const TapVector& taps0,
                             double tol = 1e-8);

/// Voltage change per unit ratio change of one tap channel,
/// K = -Z0 (M V0) on the non-source rows, i.e. the delta_Z I0 term.
CVector tap_sensitivity(const FeederModel& model, const LinearizationPoint& lp, std::size_t channel);
std::vector<CVector> tap_sensitivities(const FeederModel& model, const LinearizationPoint& lp);

/// dV = sum_p (a_p - a0_p) K_p + Z0 dI
CVector delta_v(const LinearizationPoint& lp, const std::vector<CVector>& sensitivities,
                const std::vector<double>& ratios, const CVector& delta_i);

/// |v0| + (v_d0 dv_d + v_q0 dv_q) / |v0|
template <typename Scalar>
Scalar linear_magnitude(std::complex<Scalar> v0, Scalar dv_d, Scalar dv_q) {
    const Scalar mag = std::abs(v0);
    if (mag == Scalar(0)) throw LinearizationError("linear_magnitude: zero linearization voltage");
    return mag + (v0.real() * dv_d + v0.imag() * dv_q) / mag;
}

template <typename Scalar>
struct PowerDelta {
    Scalar p;
    Scalar q;
};

/// First-order change of S = V conj(I) with the bilinear dV dI terms dropped.
template <typename Scalar>
PowerDelta<Scalar> delta_pq(std::complex<Scalar> v0, std::complex<Scalar> i0, Scalar dv_d, Scalar dv_q,
                            Scalar di_d, Scalar di_q) {
    const Scalar vd = v0.real(), vq = v0.imag(), id = i0.real(), iq = i0.imag();
    return {vd * di_d + dv_d * id + vq * di_q + dv_q * iq, vq * di_d + dv_q * id - vd * di_q - dv_d * iq};
}

PowerDelta<double> delta_pq(const LinearizationPoint& lp, const CVector& dv, const CVector& di, int node);

/// Bilinear terms dropped by delta_pq, in the form they are usually written:
/// P_err = dV_d dI_d + dV_q dI_q and Q_err = dV_q dI_d - dV_d dI_q.
template <typename Scalar>
PowerDelta<Scalar> dropped_terms(Scalar dv_d, Scalar dv_q, Scalar di_d, Scalar di_q) {
    return {dv_d * di_d + dv_q * di_q, dv_q * di_d - dv_d * di_q};
}

/// Exact reactive power imag(V conj(I)).
template <typename Scalar>
Scalar recover_q(std::complex<Scalar> v, std::complex<Scalar> i) {
    return (v * std::conj(i)).imag();
}

}  // namespace voltreg
