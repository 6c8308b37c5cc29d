#include <doctest.h>

#include <filesystem>
#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace voltreg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("voltreg_" + name);
    fs::remove_all(dir);
    return dir;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

Scenario short_scenario(const FeederModel& model, double hours, double start_hour) {
    ProfileShape shape;
    shape.hours = 24.0;
    auto day = synthesize_scenario(model, shape);
    Scenario s = day;
    const int first = static_cast<int>(start_hour * 120), count = static_cast<int>(hours * 120);
    s.start_s = day.time_at(first);
    s.count = count;
    auto cut = [&](std::vector<std::vector<double>>& series) {
        for (auto& v : series) v = std::vector<double>(v.begin() + first, v.begin() + first + count);
    };
    cut(s.load_p_kw);
    cut(s.load_q_kvar);
    cut(s.pv_p_kw);
    return s;
}

}  // namespace

TEST_CASE("estimation error") {
    CHECK(estimation_error(vec({1.0, 0.98}), vec({1.0, 0.98})).cwiseAbs().maxCoeff() == 0.0);
    CHECK(estimation_error(vec({1.01}), vec({1.00}))(0) == doctest::Approx(0.01));
    CHECK_THROWS_AS(estimation_error(vec({1.0}), vec({1.0, 1.0})), std::invalid_argument);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.003);
    std::vector<Vector> errors;
    double max_abs = 0.0, sum = 0.0, worst = 0.0;
    int count = 0;
    for (int t = 0; t < 30; ++t) {
        Vector e(7);
        double step_sum = 0.0;
        for (int k = 0; k < 7; ++k) {
            e(k) = g(rng);
            const double a = e(k) < 0 ? -e(k) : e(k);
            max_abs = a > max_abs ? a : max_abs;
            sum += a;
            step_sum += a;
            ++count;
        }
        worst = step_sum / 7 > worst ? step_sum / 7 : worst;
        errors.push_back(e);
    }
    const auto s = error_stats(errors);
    CHECK(s.max_abs == doctest::Approx(max_abs));
    CHECK(s.mean_abs == doctest::Approx(sum / count));
    CHECK(s.worst_step_mean_abs == doctest::Approx(worst));
    CHECK(s.count == static_cast<std::size_t>(count));
}

TEST_CASE("mean voltage deviation") {
    CHECK(mean_voltage_deviation(Vector::Ones(5)) == 0.0);
    CHECK(mean_voltage_deviation(vec({1.02, 0.98})) == doctest::Approx(0.02));
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.9, 1.1);
    std::vector<double> raw(40);
    for (auto& x : raw) x = u(rng);
    CHECK(mean_voltage_deviation(Eigen::Map<Vector>(raw.data(), 40)) == doctest::Approx(oracle::naive_mean_abs_dev(raw)));
}

TEST_CASE("phase imbalance") {
    CHECK(phase_imbalance(vec({1.01, 1.01, 1.01})).value() == 0.0);
    CHECK(phase_imbalance(vec({1.02, 0.963})).value() == doctest::Approx(0.057));
    CHECK_FALSE(phase_imbalance(vec({1.0})).has_value());
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.9, 1.1);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> raw{u(rng), u(rng), u(rng)};
        CHECK(phase_imbalance(Eigen::Map<Vector>(raw.data(), 3)).value() == doctest::Approx(oracle::naive_spread(raw)));
    }
}

TEST_CASE("scenario synthesis") {
    const auto model = fixtures::feeder4();

    SUBCASE("flat profiles") {
        ProfileShape shape;
        shape.hours = 2;
        shape.load_swing = 0.0;
        shape.pv_penetration = 0.0;
        const auto s = synthesize_scenario(model, shape);
        CHECK(s.count == 240);
        for (std::size_t k = 0; k < model.loads().size(); ++k) {
            for (double p : s.load_p_kw[k]) CHECK(p == doctest::Approx(model.loads()[k].p * model.phase_kva()));
        }
        for (const auto& pv : s.pv_p_kw)
            for (double p : pv) CHECK(p == 0.0);
    }
    SUBCASE("seeded noise is reproducible") {
        ProfileShape shape;
        shape.noise = 0.05;
        shape.seed = 42;
        const auto a = serialize_scenario(model, synthesize_scenario(model, shape));
        CHECK(a == serialize_scenario(model, synthesize_scenario(model, shape)));
        shape.seed = 43;
        CHECK(a != serialize_scenario(model, synthesize_scenario(model, shape)));
    }
    SUBCASE("penetration is PV peak over load peak") {
        const auto s = synthesize_scenario(model, {});
        double load_peak = 0.0, pv_peak = 0.0;
        for (int t = 0; t < s.count; ++t) {
            double load = 0.0, pv = 0.0;
            for (const auto& l : s.load_p_kw) load += l[static_cast<std::size_t>(t)];
            for (const auto& p : s.pv_p_kw) pv += p[static_cast<std::size_t>(t)];
            load_peak = std::max(load_peak, load);
            pv_peak = std::max(pv_peak, pv);
        }
        CHECK(pv_peak / load_peak == doctest::Approx(1.5).epsilon(1e-3));
    }
}

TEST_CASE("scenario documents") {
    const auto model = fixtures::feeder4();
    ProfileShape shape;
    shape.hours = 1;
    auto s = synthesize_scenario(model, shape);
    s.avr = AvrSettings{1.02, 0.02, 30.0};
    const auto text = serialize_scenario(model, s);
    const auto back = parse_scenario(model, text);
    CHECK(serialize_scenario(model, back) == text);
    CHECK(back.avr->v_ref == 1.02);

    auto doc = fixtures::json::parse(text);
    doc["pvs"]["PV3a"]["p_kw"][3] = 1e6;
    CHECK_THROWS_AS(parse_scenario(model, doc.dump()), ScenarioError);
    doc = fixtures::json::parse(text);
    doc["loads"].erase("LD2a");
    CHECK_THROWS_AS(parse_scenario(model, doc.dump()), ScenarioError);
    doc = fixtures::json::parse(text);
    doc["count"] = 7;
    CHECK_THROWS_AS(parse_scenario(model, doc.dump()), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(model, "[1, 2"), ScenarioError);
}

TEST_CASE("unloaded feeder under OVR stays idle") {
    const auto model = fixtures::feeder4();
    ProfileShape shape;
    shape.hours = 0.5;
    shape.load_scale = 0.0;
    shape.pv_penetration = 0.0;
    const auto s = synthesize_scenario(model, shape);
    RunConfig cfg;
    const auto r = run_simulation(model, s, cfg);
    CHECK(r.metrics.total_tap_operations == 0);
    CHECK(r.metrics.total_deviation == doctest::Approx(0.0).epsilon(1e-12));
    for (const auto& step : r.steps)
        for (double q : step.q_kvar) CHECK(std::abs(q) < 1e-6);
}

TEST_CASE("AVR run is the composition of power flow and avr_step") {
    const auto model = fixtures::feeder4();
    const auto s = short_scenario(model, 2.0, 11.0);
    RunConfig cfg;
    cfg.strategy = Strategy::Avr;
    cfg.avr_control_iterations = 1;
    const auto r = run_simulation(model, s, cfg);
    const auto& reg = model.regulators()[0];
    const auto& idx = model.index();
    TapVector prev = model.initial_taps();
    bool moved = false;
    for (int t = 0; t < s.count; ++t) {
        const auto f = forecast_at(model, s, t);
        std::vector<Complex> pv(f.pv_power.begin(), f.pv_power.end());
        const auto sol = solve_zbus(model, {prev, net_injection(model, f.load_power, pv)});
        double m = 0.0;
        for (int p : reg.phases) m += std::abs(sol.voltage(idx.row(reg.secondary, p)));
        const int expected = avr_step(cfg.avr, reg, prev[0], m / 3.0);
        CHECK(r.steps[static_cast<std::size_t>(t)].taps[0] == expected);
        moved = moved || expected != prev[0];
        prev = r.steps[static_cast<std::size_t>(t)].taps;
    }
    CHECK(moved);
    CHECK_FALSE(r.metrics.estimation_error.has_value());
}

TEST_CASE("results files") {
    const auto model = fixtures::feeder4();

    SUBCASE("empty run writes headers only") {
        const auto dir = scratch("empty");
        emit_results(model, RunResults{}, RunConfig{}, dir.string());
        for (const char* f : {"voltages.csv", "taps.csv", "qinj.csv"}) {
            const auto csv = oracle::read_csv(dir / f);
            CHECK_FALSE(csv.header.empty());
            CHECK(csv.rows.empty());
        }
        fs::remove_all(dir);
    }

    SUBCASE("round trip and totals") {
        const auto s = short_scenario(model, 1.0, 11.5);
        RunConfig cfg;
        const auto r = run_simulation(model, s, cfg);
        const auto dir = scratch("roundtrip");
        emit_results(model, r, cfg, dir.string());

        const auto v = oracle::read_csv(dir / "voltages.csv");
        const int nrows = model.index().size();
        REQUIRE(v.rows.size() == r.steps.size() * static_cast<std::size_t>(nrows));
        const int cm = v.column("magnitude"), cp = v.column("predicted"), cs = v.column("step");
        std::vector<double> dev(r.steps.size(), 0.0);
        for (std::size_t i = 0; i < v.rows.size(); ++i) {
            const auto t = static_cast<std::size_t>(std::stoi(v.rows[i][static_cast<std::size_t>(cs)]));
            const int row = static_cast<int>(i % static_cast<std::size_t>(nrows));
            const double mag = std::stod(v.rows[i][static_cast<std::size_t>(cm)]);
            CHECK(mag == doctest::Approx(r.steps[t].magnitude(row)).epsilon(1e-9));
            CHECK(std::stod(v.rows[i][static_cast<std::size_t>(cp)]) ==
                  doctest::Approx((*r.steps[t].predicted)(row)).epsilon(1e-9));
            dev[t] += std::abs(mag - 1.0) / nrows;
        }
        const auto metrics = fixtures::json::parse(oracle::slurp(dir / "metrics.json"));
        double total = 0.0;
        for (double d : dev) total += d;
        CHECK(metrics["total_deviation"].get<double>() == doctest::Approx(total).epsilon(1e-8));

        const auto taps = oracle::read_csv(dir / "taps.csv");
        long ops = 0;
        int prev = model.initial_taps()[0];
        for (const auto& row : taps.rows) {
            const int tap = std::stoi(row[2]);
            ops += std::abs(tap - prev);
            prev = tap;
        }
        CHECK(metrics["total_tap_operations"].get<long>() == ops);

        const auto q = oracle::read_csv(dir / "qinj.csv");
        CHECK(q.rows.size() == r.steps.size() * model.pvs().size());
        CHECK(fs::exists(dir / "config.json"));
        CHECK(fs::exists(dir / "timing.json"));
        fs::remove_all(dir);
    }
}

TEST_CASE("identical inputs give identical files") {
    const auto model = fixtures::feeder4();
    const auto s = short_scenario(model, 1.0, 12.0);
    RunConfig cfg;
    const auto a = scratch("det_a"), b = scratch("det_b");
    emit_results(model, run_simulation(model, s, cfg), cfg, a.string());
    emit_results(model, run_simulation(model, s, cfg), cfg, b.string());
    for (const char* f : {"voltages.csv", "taps.csv", "qinj.csv", "metrics.json", "config.json"}) {
        CHECK(oracle::slurp(a / f) == oracle::slurp(b / f));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("strategy names") {
    CHECK(strategy_from_string("avr") == Strategy::Avr);
    CHECK(std::string(to_string(Strategy::Ovr)) == "ovr");
    CHECK_THROWS_AS(strategy_from_string("pid"), std::invalid_argument);
}
