#include "voltreg/powerflow.hpp"

#include <sstream>

namespace voltreg {

NetworkFactorization factorize(const FeederModel& model, const TapVector& taps) {
    NetworkFactorization net;
    net.taps = taps;
    net.y = build_admittance(model, taps);
    net.reduction = reduce_source(model.index(), net.y, model.source_voltage());
    return net;
}

CVector net_injection(const FeederModel& model, std::span<const Complex> load_power,
                      std::span<const Complex> pv_power) {
    const auto& index = model.index();
    if (load_power.size() != model.loads().size() || pv_power.size() != model.pvs().size()) {
        throw std::invalid_argument("net_injection: element power vectors do not match the model");
    }
    CVector s = CVector::Zero(index.reduced_size());
    for (std::size_t k = 0; k < load_power.size(); ++k) {
        const auto& load = model.loads()[k];
        const int r = index.reduced(index.row(load.bus, load.phase));
        if (r >= 0) s(r) -= load_power[k];
    }
    for (std::size_t k = 0; k < pv_power.size(); ++k) {
        const auto& pv = model.pvs()[k];
        const int r = index.reduced(index.row(pv.bus, pv.phase));
        if (r >= 0) s(r) += pv_power[k];
    }
    return s;
}

PowerFlowSolution solve_zbus(const NetworkFactorization& net, const NodePhaseIndex& index,
                             const CVector& v_source, const CVector& injection,
                             const PowerFlowOptions& options) {
    if (!(options.tol > 0.0)) throw std::invalid_argument("solve_zbus: tolerance must be positive");
    const auto n = static_cast<Eigen::Index>(index.reduced_size());
    if (injection.size() != n) throw std::invalid_argument("solve_zbus: injection size mismatch");
    const CMatrix& z0 = net.reduction.z0;
    const CVector& v_nl = net.reduction.v_noload;

    CVector v = v_nl;
    CVector current = CVector::Zero(n);
    double mismatch = 0.0;
    int iter = 0;
    for (;;) {
        ++iter;
        current = (injection.array() / v.array()).conjugate().matrix();
        v = v_nl + z0 * current;
        mismatch = n > 0 ? (v.array() * current.array().conjugate() - injection.array()).abs().maxCoeff() : 0.0;
        if (n > 0 && v.cwiseAbs().minCoeff() < options.collapse_guard) {
            std::ostringstream msg;
            msg << "voltage collapse: |V| fell below " << options.collapse_guard << " p.u. at iteration " << iter;
            throw PowerFlowError(PowerFlowError::Kind::VoltageCollapse, msg.str(), iter, mismatch);
        }
        if (mismatch <= options.tol) break;
        if (iter >= options.max_iter) {
            std::ostringstream msg;
            msg << "power flow did not converge in " << iter << " iterations (mismatch " << mismatch << " p.u.)";
            throw PowerFlowError(PowerFlowError::Kind::NonConvergence, msg.str(), iter, mismatch);
        }
    }

    PowerFlowSolution sol;
    sol.voltage.resize(index.size());
    sol.voltage(index.source_rows()) = v_source;
    sol.voltage(index.nonsource_rows()) = v;
    sol.current = std::move(current);
    sol.iterations = iter;
    sol.max_mismatch = mismatch;
    return sol;
}

PowerFlowSolution solve_zbus(const FeederModel& model, const PowerFlowCase& pf_case, const PowerFlowOptions& options) {
    const auto net = factorize(model, pf_case.taps);
    return solve_zbus(net, model.index(), model.source_voltage(), pf_case.injection, options);
}

double residual(const FeederModel& model, const PowerFlowSolution& solution, const PowerFlowCase& pf_case) {
    const auto& index = model.index();
    const CMatrix y = build_admittance(model, pf_case.taps);
    const auto& ns = index.nonsource_rows();
    if (ns.empty()) return 0.0;
    const CVector current = y(ns, Eigen::all) * solution.voltage;
    const CVector v = solution.voltage(ns);
    return (v.array() * current.array().conjugate() - pf_case.injection.array()).abs().maxCoeff();
}

std::shared_ptr<const NetworkFactorization> PowerFlowSolver::factorization(const TapVector& taps) const {
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(taps);
        if (it != cache_.end()) return it->second;
    }
    auto net = std::make_shared<const NetworkFactorization>(factorize(model_, taps));
    std::lock_guard lock(mutex_);
    return cache_.emplace(taps, std::move(net)).first->second;
}

PowerFlowSolution PowerFlowSolver::solve(const PowerFlowCase& pf_case) const {
    const auto net = factorization(pf_case.taps);
    return solve_zbus(*net, model_.index(), model_.source_voltage(), pf_case.injection, options_);
}

}  // namespace voltreg
