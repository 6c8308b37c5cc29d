#include "voltreg/ovr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace voltreg {

double q_limit_kvar(const FeederModel& model, const PvSpec& pv, double p_kw) {
    return q_limit(pv.s_inv * model.phase_kva(), p_kw);
}

HorizonSpec prepare_horizon(const PowerFlowSolver& solver, const TapVector& applied,
                            std::span<const StepForecast> forecasts, OvrWeights weights, int max_tap_move) {
    const auto& model = solver.model();
    HorizonSpec horizon;
    horizon.weights = weights;
    horizon.max_tap_move = max_tap_move;
    horizon.initial_taps = applied;
    const auto net = solver.factorization(applied);
    for (const auto& forecast : forecasts) {
        std::vector<Complex> pv(forecast.pv_power.begin(), forecast.pv_power.end());
        const CVector injection = net_injection(model, forecast.load_power, pv);
        const auto base = solve_zbus(*net, model.index(), model.source_voltage(), injection, solver.options());
        HorizonStep step;
        step.lp = linearize(model, *net, base);
        step.sensitivities = tap_sensitivities(model, step.lp);
        step.pv_power = forecast.pv_power;
        horizon.steps.push_back(std::move(step));
    }
    return horizon;
}

std::vector<NodeRole> node_roles(const FeederModel& model) {
    const auto& index = model.index();
    std::vector<NodeRole> roles(static_cast<std::size_t>(index.reduced_size()), NodeRole::Passive);
    for (const auto& load : model.loads()) {
        const int k = index.reduced(index.row(load.bus, load.phase));
        if (k >= 0 && roles[static_cast<std::size_t>(k)] == NodeRole::Passive) roles[static_cast<std::size_t>(k)] = NodeRole::Load;
    }
    for (const auto& pv : model.pvs()) {
        const int k = index.reduced(index.row(pv.bus, pv.phase));
        if (k >= 0) roles[static_cast<std::size_t>(k)] = NodeRole::Pv;
    }
    return roles;
}

AssembledProgram assemble(const FeederModel& model, const HorizonSpec& horizon) {
    const auto& index = model.index();
    const int n = index.reduced_size();
    const int nch = static_cast<int>(model.tap_channels().size());
    const int steps = static_cast<int>(horizon.steps.size());
    if (steps == 0) throw std::invalid_argument("assemble: horizon has no steps");
    if (horizon.weights.w1 < 0.0 || horizon.weights.w2 < 0.0) throw std::invalid_argument("assemble: negative weight");
    if (horizon.max_tap_move < 1) throw std::invalid_argument("assemble: max_tap_move must be at least 1");
    model.check_taps(horizon.initial_taps);

    AssembledProgram out;
    out.layout = {n, nch, steps};
    out.roles = node_roles(model);
    const auto& L = out.layout;
    const auto& w = horizon.weights;
    constexpr double inf = lp::ProgramBuilder::inf;

    lp::ProgramBuilder builder;
    for (int t = 0; t < steps; ++t) {
        const auto& step = horizon.steps[static_cast<std::size_t>(t)];
        if (step.lp.v0.size() != n || step.lp.z0.rows() != n || step.sensitivities.size() != static_cast<std::size_t>(nch) ||
            step.pv_power.size() != model.pvs().size()) {
            throw std::invalid_argument("assemble: linearization point " + std::to_string(t) + " does not match the feeder");
        }
        const std::string ts = std::to_string(t);
        for (int k = 0; k < n; ++k) {
            const auto& np = index.node(index.nonsource_rows()[static_cast<std::size_t>(k)]);
            const std::string tag = "[" + ts + "," + np.bus + "." + std::to_string(np.phase) + "]";
            const bool passive = out.roles[static_cast<std::size_t>(k)] == NodeRole::Passive;
            builder.add_variable(0.0, -inf, inf, false, "dvd" + tag);
            builder.add_variable(0.0, -inf, inf, false, "dvq" + tag);
            builder.add_variable(0.0, passive ? 0.0 : -inf, passive ? 0.0 : inf, false, "did" + tag);
            builder.add_variable(0.0, passive ? 0.0 : -inf, passive ? 0.0 : inf, false, "diq" + tag);
            builder.add_variable(0.0, -inf, inf, false, "vmag" + tag);
            builder.add_variable(w.w1, 0.0, inf, false, "dev" + tag);
        }
        for (int p = 0; p < nch; ++p) {
            const auto& reg = model.channel_regulator(static_cast<std::size_t>(p));
            const std::string tag = "[" + ts + "," + model.tap_channels()[static_cast<std::size_t>(p)].name + "]";
            builder.add_variable(0.0, reg.tap_min, reg.tap_max, true, "tap" + tag);
            builder.add_variable(0.0, -inf, inf, false, "ratio" + tag);
            builder.add_variable(w.w2, 0.0, inf, false, "move" + tag);
        }
    }
    out.names = builder.names();

    double source_dev = 0.0;
    const CVector v_source = model.source_voltage();
    for (Eigen::Index r = 0; r < v_source.size(); ++r) source_dev += std::abs(std::abs(v_source(r)) - 1.0);
    out.source_deviation = source_dev * steps;
    builder.add_offset(w.w1 * out.source_deviation);

    out.node_q_max.assign(static_cast<std::size_t>(steps), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int t = 0; t < steps; ++t) {
        const auto& step = horizon.steps[static_cast<std::size_t>(t)];
        for (std::size_t v = 0; v < model.pvs().size(); ++v) {
            const auto& pv = model.pvs()[v];
            const int k = index.reduced(index.row(pv.bus, pv.phase));
            if (k >= 0) out.node_q_max[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] += q_limit(pv.s_inv, step.pv_power[v]);
        }
    }

    using Terms = std::vector<std::pair<int, double>>;
    for (int t = 0; t < steps; ++t) {
        const auto& step = horizon.steps[static_cast<std::size_t>(t)];
        const auto& lp = step.lp;
        auto nv = [&](int k, VariableLayout::NodeField f) { return L.node(t, k, f); };
        auto cv = [&](int p, VariableLayout::ChannelField f) { return L.channel(t, p, f); };

        // Linearized nodal equation, split into real and imaginary rows.
        for (int k = 0; k < n; ++k) {
            Terms re{{nv(k, VariableLayout::DvD), 1.0}}, im{{nv(k, VariableLayout::DvQ), 1.0}};
            double rhs_re = 0.0, rhs_im = 0.0;
            for (int j = 0; j < n; ++j) {
                const Complex z = lp.z0(k, j);
                re.emplace_back(nv(j, VariableLayout::DiD), -z.real());
                re.emplace_back(nv(j, VariableLayout::DiQ), z.imag());
                im.emplace_back(nv(j, VariableLayout::DiD), -z.imag());
                im.emplace_back(nv(j, VariableLayout::DiQ), -z.real());
            }
            for (int p = 0; p < nch; ++p) {
                const Complex kp = step.sensitivities[static_cast<std::size_t>(p)](k);
                re.emplace_back(cv(p, VariableLayout::Ratio), -kp.real());
                im.emplace_back(cv(p, VariableLayout::Ratio), -kp.imag());
                rhs_re -= kp.real() * lp.a0[static_cast<std::size_t>(p)];
                rhs_im -= kp.imag() * lp.a0[static_cast<std::size_t>(p)];
            }
            builder.add_equality(re, rhs_re);
            builder.add_equality(im, rhs_im);
        }

        // Tap ratio affine in tap position.
        for (int p = 0; p < nch; ++p) {
            const auto& reg = model.channel_regulator(static_cast<std::size_t>(p));
            const double slope = (reg.a_max - 1.0) / reg.tap_max;
            builder.add_equality({{cv(p, VariableLayout::Ratio), 1.0}, {cv(p, VariableLayout::Tap), -slope}}, 1.0);
        }

        for (int k = 0; k < n; ++k) {
            const Complex v0 = lp.v0(k);
            const Complex i0 = lp.i0(k);
            const double mag = std::abs(v0);
            const int dvd = nv(k, VariableLayout::DvD), dvq = nv(k, VariableLayout::DvQ);
            const int did = nv(k, VariableLayout::DiD), diq = nv(k, VariableLayout::DiQ);
            const int vm = nv(k, VariableLayout::Mag), dev = nv(k, VariableLayout::Dev);

            builder.add_equality({{vm, 1.0}, {dvd, -v0.real() / mag}, {dvq, -v0.imag() / mag}}, mag);

            const Terms dp{{did, v0.real()}, {dvd, i0.real()}, {diq, v0.imag()}, {dvq, i0.imag()}};
            const Terms dq{{did, v0.imag()}, {dvq, i0.real()}, {diq, -v0.real()}, {dvd, -i0.imag()}};
            switch (out.roles[static_cast<std::size_t>(k)]) {
                case NodeRole::Load:
                    builder.add_equality(dp, 0.0);
                    builder.add_equality(dq, 0.0);
                    break;
                case NodeRole::Pv: {
                    builder.add_equality(dp, 0.0);
                    const double qmax = out.node_q_max[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
                    Terms neg = dq;
                    for (auto& term : neg) term.second = -term.second;
                    builder.add_less_equal(dq, qmax);
                    builder.add_less_equal(neg, qmax);
                    break;
                }
                case NodeRole::Passive: break;
            }

            builder.add_less_equal({{vm, 1.0}, {dev, -1.0}}, 1.0);
            builder.add_less_equal({{vm, -1.0}, {dev, -1.0}}, -1.0);
        }

        for (int p = 0; p < nch; ++p) {
            const int tap = cv(p, VariableLayout::Tap), move = cv(p, VariableLayout::Move);
            const double dmax = horizon.max_tap_move;
            if (t == 0) {
                const double prev = horizon.initial_taps[static_cast<std::size_t>(p)];
                builder.add_less_equal({{tap, 1.0}}, prev + dmax);
                builder.add_less_equal({{tap, -1.0}}, dmax - prev);
                builder.add_less_equal({{tap, 1.0}, {move, -1.0}}, prev);
                builder.add_less_equal({{tap, -1.0}, {move, -1.0}}, -prev);
            } else {
                const int prev = L.channel(t - 1, p, VariableLayout::Tap);
                builder.add_less_equal({{tap, 1.0}, {prev, -1.0}}, dmax);
                builder.add_less_equal({{tap, -1.0}, {prev, 1.0}}, dmax);
                builder.add_less_equal({{tap, 1.0}, {prev, -1.0}, {move, -1.0}}, 0.0);
                builder.add_less_equal({{tap, -1.0}, {prev, 1.0}, {move, -1.0}}, 0.0);
            }
        }
    }
    out.program = builder.build();
    return out;
}

ControlSchedule decode(const FeederModel& model, const HorizonSpec& horizon, const AssembledProgram& assembled,
                       const lp::MipSolution& solution) {
    const auto& index = model.index();
    const auto& L = assembled.layout;
    const auto& x = solution.x;
    const double phase_kva = model.phase_kva();
    const CVector v_source = model.source_voltage();

    ControlSchedule out;
    out.status = solution.status;
    out.nodes = solution.nodes;
    out.gap = solution.gap;
    out.j1 = assembled.source_deviation;
    for (int t = 0; t < L.steps; ++t) {
        const auto& step = horizon.steps[static_cast<std::size_t>(t)];
        const auto& lp = step.lp;
        StepSchedule s;
        for (int p = 0; p < L.channels; ++p) {
            s.taps.push_back(static_cast<int>(std::lround(x(L.channel(t, p, VariableLayout::Tap)))));
            out.j2 += x(L.channel(t, p, VariableLayout::Move));
        }
        s.dv.resize(L.nodes);
        s.di.resize(L.nodes);
        s.predicted.resize(index.size());
        for (std::size_t r = 0; r < index.source_rows().size(); ++r) {
            s.predicted(index.source_rows()[r]) = std::abs(v_source(static_cast<Eigen::Index>(r)));
        }
        for (int k = 0; k < L.nodes; ++k) {
            s.dv(k) = {x(L.node(t, k, VariableLayout::DvD)), x(L.node(t, k, VariableLayout::DvQ))};
            s.di(k) = {x(L.node(t, k, VariableLayout::DiD)), x(L.node(t, k, VariableLayout::DiQ))};
            s.predicted(index.nonsource_rows()[static_cast<std::size_t>(k)]) = x(L.node(t, k, VariableLayout::Mag));
            out.j1 += x(L.node(t, k, VariableLayout::Dev));
        }

        s.dq.assign(model.pvs().size(), 0.0);
        s.q_kvar.assign(model.pvs().size(), 0.0);
        s.q_max_kvar.assign(model.pvs().size(), 0.0);
        for (std::size_t v = 0; v < model.pvs().size(); ++v) {
            const auto& pv = model.pvs()[v];
            const double qmax = q_limit(pv.s_inv, step.pv_power[v]);
            s.q_max_kvar[v] = qmax * phase_kva;
            const int k = index.reduced(index.row(pv.bus, pv.phase));
            if (k < 0) continue;
            const double node_qmax = assembled.node_q_max[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
            if (node_qmax <= 0.0) continue;
            const double share = qmax / node_qmax;
            const auto lin = delta_pq(lp, s.dv, s.di, k);
            const double q0 = recover_q(lp.v0(k), lp.i0(k));
            const double exact = recover_q(lp.v0(k) + s.dv(k), lp.i0(k) + s.di(k)) - q0;
            s.dq[v] = lin.q * share;
            const double q = std::clamp(exact * share, -qmax, qmax);
            s.q_kvar[v] = q * phase_kva;
        }
        out.steps.push_back(std::move(s));
    }
    out.objective = horizon.weights.w1 * out.j1 + horizon.weights.w2 * out.j2;
    return out;
}

ControlSchedule solve_horizon(const FeederModel& model, const HorizonSpec& horizon, const OvrOptions& options) {
    const auto assembled = assemble(model, horizon);
    const auto solution = lp::solve_milp(assembled.program, options.milp);
    if (!options.dump_prefix.empty()) {
        std::ofstream prog(options.dump_prefix + ".lp");
        lp::write_program(prog, assembled.program, assembled.names);
        std::ofstream sol(options.dump_prefix + ".sol");
        lp::write_solution(sol, solution, assembled.names);
    }
    if (!solution.has_solution()) {
        throw OvrError(solution.status, std::string("horizon program has no solution (") + lp::to_string(solution.status) +
                                            "); tap movement limits or inverter headroom cannot be met");
    }
    return decode(model, horizon, assembled, solution);
}

}  // namespace voltreg
