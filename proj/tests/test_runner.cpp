#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "ascsim/errors.hpp"
#include "ascsim/runner.hpp"

using namespace ascsim;
using doctest::Approx;

namespace {

int rank(FsmPhase p) { return static_cast<int>(p); }

bool records_equal(const TraceRecord& a, const TraceRecord& b) {
    return a.t_s == b.t_s && a.v_dc_V == b.v_dc_V && a.i_phase_A == b.i_phase_A &&
           a.fsm == b.fsm && a.flag == b.flag && a.tj_C == b.tj_C &&
           a.i_discharge_A == b.i_discharge_A &&
           a.fault_branch_current_A == b.fault_branch_current_A && a.theta_rad == b.theta_rad &&
           a.e_dissipated_J == b.e_dissipated_J && a.e_source_in_J == b.e_source_in_J &&
           a.e_emf_absorbed_J == b.e_emf_absorbed_J;
}

bool traces_equal(const Trace& a, const Trace& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!records_equal(a[i], b[i])) return false;
    return true;
}

bool optionals_equal(const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || *a == *b);
}

bool metrics_equal(const MetricsReport& a, const MetricsReport& b) {
    return optionals_equal(a.t_detect_s, b.t_detect_s) &&
           optionals_equal(a.t_isolate_s, b.t_isolate_s) &&
           optionals_equal(a.t_discharge_s, b.t_discharge_s) && a.peak_tj_C == b.peak_tj_C &&
           a.thermal_stress_Ks == b.thermal_stress_Ks &&
           a.energy_audit_error == b.energy_audit_error &&
           optionals_equal(a.score_voltage_drop, b.score_voltage_drop) &&
           optionals_equal(a.score_current_flow, b.score_current_flow) &&
           optionals_equal(a.score_temperature_response, b.score_temperature_response);
}

ScenarioConfig quiet_config(double t_end_s = 2e-3) {
    ScenarioConfig cfg;
    cfg.id = "quiet";
    cfg.t_end_s = t_end_s;
    return cfg;
}

ScenarioConfig hard_short_config(double t_end_s, long decimation) {
    ScenarioConfig cfg;
    cfg.id = "hard_short";
    cfg.plant.machine.inductance_H = 1e-3;
    cfg.drive = DriveMode::Block;
    FaultEvent ev;
    ev.kind = FaultKind::PhaseToPhaseShort;
    ev.targets[0] = 0;
    ev.targets[1] = 1;
    ev.fault_resistance_Ohm = 1e-3;
    ev.t_start_s = 2e-3;
    cfg.faults.push_back(ev);
    cfg.t_end_s = t_end_s;
    cfg.trace_decimation = decimation;
    return cfg;
}

}  // namespace

TEST_CASE("a quiet run reports absent timing metrics and never trips") {
    const ScenarioConfig cfg = quiet_config();
    const RunResult res = run(cfg);

    CHECK(res.trace.size() == 4001);  // 2 ms at 0.5 us, endpoints inclusive
    CHECK_FALSE(res.metrics.t_detect_s.has_value());
    CHECK_FALSE(res.metrics.t_isolate_s.has_value());
    CHECK_FALSE(res.metrics.t_discharge_s.has_value());
    CHECK_FALSE(res.metrics.score_voltage_drop.has_value());
    CHECK_FALSE(res.metrics.score_current_flow.has_value());
    CHECK_FALSE(res.metrics.score_temperature_response.has_value());
    CHECK(res.metrics.peak_tj_C >= cfg.thermal.t_ambient_C);
    CHECK(res.metrics.thermal_stress_Ks >= 0.0);
    CHECK(res.metrics.energy_audit_error < 1e-6);
    for (const TraceRecord& r : res.trace) {
        CHECK(r.fsm == FsmPhase::Normal);
        CHECK_FALSE(r.flag);
    }

    // Idle protection must be indistinguishable from disabled protection.
    ScenarioConfig off = cfg;
    off.protection_enabled = false;
    CHECK(traces_equal(run(off).trace, res.trace));
}

TEST_CASE("a hard phase short drives the full protection sequence") {
    const ScenarioConfig cfg = hard_short_config(0.15, 20);
    const RunResult res = run(cfg);
    const MetricsReport& m = res.metrics;

    REQUIRE(m.t_detect_s.has_value());
    CHECK(*m.t_detect_s >= 0.8e-6);
    CHECK(*m.t_detect_s <= 10.8e-6);
    CHECK(m.t_isolate_s.has_value());
    REQUIRE(m.t_discharge_s.has_value());
    CHECK(*m.t_discharge_s > 0.0);

    REQUIRE(m.score_voltage_drop.has_value());
    REQUIRE(m.score_current_flow.has_value());
    REQUIRE(m.score_temperature_response.has_value());
    CHECK(*m.score_voltage_drop >= 0.0);
    CHECK(*m.score_voltage_drop <= 1.0);
    CHECK(*m.score_current_flow >= 0.0);
    CHECK(*m.score_current_flow <= 1.0);
    CHECK(*m.score_temperature_response >= 0.0);
    CHECK(*m.score_temperature_response <= 1.0);

    // Phase order is monotone, the flag latches, and Safe persists to the end.
    int prev_rank = 0;
    bool seen_flag = false, seen_safe = false;
    for (const TraceRecord& r : res.trace) {
        CHECK(rank(r.fsm) >= prev_rank);
        prev_rank = rank(r.fsm);
        if (seen_flag) CHECK(r.flag);
        seen_flag = seen_flag || r.flag;
        if (seen_safe) CHECK(r.fsm == FsmPhase::Safe);
        seen_safe = seen_safe || r.fsm == FsmPhase::Safe;
    }
    CHECK(seen_safe);
    CHECK(res.trace.back().fsm == FsmPhase::Safe);
    CHECK(m.energy_audit_error < 5e-3);
}

TEST_CASE("identical configs produce bit identical runs") {
    const ScenarioConfig cfg = hard_short_config(0.01, 1);
    const RunResult a = run(cfg);
    const RunResult b = run(cfg);
    CHECK(traces_equal(a.trace, b.trace));
    CHECK(metrics_equal(a.metrics, b.metrics));
}

TEST_CASE("metrics recomputed from a full resolution trace match the streaming pass") {
    const ScenarioConfig cfg = hard_short_config(0.01, 1);
    const RunResult res = run(cfg);
    CHECK(metrics_equal(compute_metrics(res.trace, cfg), res.metrics));

    const ScenarioConfig quiet = quiet_config();
    const RunResult q = run(quiet);
    CHECK(metrics_equal(compute_metrics(q.trace, quiet), q.metrics));

    // The trace-level audit agrees with the streaming accumulator too.
    CHECK(energy_audit(res.trace, cfg) == Approx(res.metrics.energy_audit_error).epsilon(1e-9));
}

TEST_CASE("the trace level energy audit refuses decimated traces") {
    ScenarioConfig cfg = quiet_config();
    cfg.trace_decimation = 4;
    const RunResult res = run(cfg);
    CHECK_THROWS_AS(energy_audit(res.trace, cfg), ValidationError);
    CHECK_THROWS_AS(compute_metrics({}, cfg), EmptyTrace);
}

TEST_CASE("scenario validation pins the contract between dt and everything else") {
    ScenarioConfig cfg = quiet_config();
    cfg.t_end_s = 1.00025e-3;  // half a step off the dt grid
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = quiet_config();
    cfg.trace_decimation = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = quiet_config();
    cfg.detector.sample_period_s = 1e-6;  // detector must sample at dt
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = quiet_config();
    cfg.id = "bad id";
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = quiet_config();
    cfg.dv_max_step_V = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("compute metrics pins the score definitions on a synthetic trace") {
    ScenarioConfig cfg = quiet_config(2e-3);
    FaultEvent ev;
    ev.kind = FaultKind::PhaseToPhaseShort;
    ev.targets[0] = 0;
    ev.targets[1] = 1;
    ev.t_start_s = 0.5e-3;
    cfg.faults.push_back(ev);

    Trace trace(3);
    trace[0].t_s = 0.0;
    trace[0].v_dc_V = 400.0;
    trace[1].t_s = 1e-3;
    trace[1].v_dc_V = 100.0;
    trace[1].fsm = FsmPhase::Discharging;
    trace[1].flag = true;
    trace[1].i_discharge_A = 2.0;
    trace[1].fault_branch_current_A = 100.0;
    trace[2].t_s = 2e-3;
    trace[2].v_dc_V = 50.0;
    trace[2].fsm = FsmPhase::Safe;
    trace[2].flag = true;
    trace[2].e_dissipated_J = 39.375;  // exactly E(400 V) - E(50 V) at 500 uF
    for (TraceRecord& r : trace) r.tj_C.fill(65.0);

    const MetricsReport m = compute_metrics(trace, cfg);
    REQUIRE(m.t_detect_s.has_value());
    CHECK(*m.t_detect_s == Approx(0.5e-3).epsilon(1e-12));  // flag at 1 ms, fault at 0.5 ms
    REQUIRE(m.t_discharge_s.has_value());
    CHECK(*m.t_discharge_s == Approx(1e-3).epsilon(1e-12));
    CHECK_FALSE(m.t_isolate_s.has_value());  // one below-threshold sample is not enough

    CHECK(*m.score_voltage_drop == Approx(1.0 - 50.0 / 100.0).epsilon(1e-12));
    CHECK(*m.score_current_flow == Approx(100.0 * 2.0 / 800.0).epsilon(1e-12));
    CHECK(*m.score_temperature_response == Approx(1.0).epsilon(1e-12));
    CHECK(m.peak_tj_C == 65.0);
    CHECK(m.energy_audit_error == 0.0);
}

TEST_CASE("compare handles identity, doubling, absence, and zero denominators") {
    MetricsReport a;
    a.t_detect_s = 2e-6;
    a.t_discharge_s = 0.1;
    a.thermal_stress_Ks = 4.0;

    const ImprovementReport self = compare(a, a);
    REQUIRE(self.detection_ratio.has_value());
    CHECK(*self.detection_ratio == 1.0);
    CHECK(*self.thermal_stress_ratio == 1.0);
    CHECK(*self.performance_ratio == 1.0);

    MetricsReport b = a;
    b.t_detect_s = 1e-6;
    b.t_discharge_s = 0.05;
    b.thermal_stress_Ks = 2.0;
    const ImprovementReport twice = compare(a, b);
    CHECK(*twice.detection_ratio == 2.0);
    CHECK(*twice.thermal_stress_ratio == 2.0);
    CHECK(*twice.performance_ratio == 2.0);

    MetricsReport quiet;  // nothing ever detected
    CHECK_FALSE(compare(quiet, a).detection_ratio.has_value());
    CHECK_FALSE(compare(a, quiet).performance_ratio.has_value());

    MetricsReport zero = a;
    zero.t_discharge_s = 0.0;
    CHECK(*compare(a, zero).performance_ratio == std::numeric_limits<double>::infinity());
    CHECK(*compare(zero, zero).performance_ratio == 1.0);

    MetricsReport cold = a;
    cold.thermal_stress_Ks = 0.0;
    CHECK(*compare(cold, cold).thermal_stress_ratio == 1.0);
}

TEST_CASE("campaign output is ordered by id and independent of thread count") {
    ScenarioConfig quiet = quiet_config();
    quiet.id = "b_quiet";

    ScenarioConfig shorted = hard_short_config(2e-3, 1);
    shorted.id = "a_short";
    shorted.faults[0].t_start_s = 0.5e-3;

    ScenarioConfig doomed = quiet_config();
    doomed.id = "c_doomed";
    doomed.drive = DriveMode::Block;
    doomed.plant.current_sanity_bound_A = 10.0;  // block drive exceeds this fast

    const std::vector<ScenarioConfig> cfgs{quiet, shorted, doomed};
    const std::vector<CampaignEntry> serial = run_campaign(cfgs, 1);
    const std::vector<CampaignEntry> parallel = run_campaign(cfgs, 4);

    REQUIRE(serial.size() == 3);
    CHECK(serial[0].id == "a_short");
    CHECK(serial[1].id == "b_quiet");
    CHECK(serial[2].id == "c_doomed");

    CHECK(serial[0].metrics.has_value());
    CHECK(serial[1].metrics.has_value());
    CHECK_FALSE(serial[2].metrics.has_value());
    CHECK(serial[2].error.find("sanity") != std::string::npos);

    REQUIRE(parallel.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(serial[i].id == parallel[i].id);
        CHECK(serial[i].error == parallel[i].error);
        CHECK(serial[i].metrics.has_value() == parallel[i].metrics.has_value());
        if (serial[i].metrics)
            CHECK(metrics_equal(*serial[i].metrics, *parallel[i].metrics));
        CHECK(traces_equal(serial[i].trace, parallel[i].trace));
    }
}
