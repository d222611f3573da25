#include "ascsim/runner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ascsim/errors.hpp"

namespace ascsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Consecutive below-threshold samples required before the fault branch
/// counts as isolated.
constexpr int kIsolateConsecutive = 10;

/// Dead-banded block commutation: a leg conducts high while its back-EMF
/// phase is clearly positive, low while clearly negative.
constexpr double kBlockDeadBand = 0.02;

SwitchCommand base_command(const ScenarioConfig& cfg, double theta_rad) {
    SwitchCommand cmd;
    cmd.contactor_closed = cfg.plant.contactor_closed;
    if (cfg.drive == DriveMode::Block) {
        for (int k = 0; k < kPhases; ++k) {
            const double c = std::cos(theta_rad - 2.0 * kPi * k / kPhases);
            cmd.high[k] = c > kBlockDeadBand;
            cmd.low[k] = c < -kBlockDeadBand;
        }
    }
    return cmd;
}

double stored_energy(double v_dc_V, const PhaseArray& i_phase_A, const PlantParams& p) {
    double e = 0.5 * p.dc.capacitance_F * v_dc_V * v_dc_V;
    for (double i : i_phase_A) e += 0.5 * p.machine.inductance_H * i * i;
    return e;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// One pass over the sample stream produces every metric. run() feeds it at
/// full resolution; compute_metrics() feeds it retained records, which is
/// identical when trace_decimation is 1.
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(const ScenarioConfig& cfg) : cfg_(cfg) {
        for (const FaultEvent& ev : cfg.faults)
            earliest_fault_ = earliest_fault_ ? std::min(*earliest_fault_, ev.t_start_s)
                                              : std::optional<double>(ev.t_start_s);
    }

    void sample(double t_s, double v_dc_V, double fault_current_A, FsmPhase phase, bool flag,
                const std::array<double, kDeviceCount>& tj_C, double i_dis_A, double weight_s) {
        if (!t_flag_ && flag) t_flag_ = t_s;

        // Isolation threshold: 1% of the peak fault branch current seen up to
        // and including the flag sample; frozen afterwards.
        if (!t_flag_ || t_s <= *t_flag_)
            peak_fault_A_ = std::max(peak_fault_A_, std::fabs(fault_current_A));
        if (t_flag_ && !t_isolate_) {
            if (peak_fault_A_ == 0.0) {
                t_isolate_ = 0.0;  // fault never drove a current; isolated from the start
            } else if (t_s >= *t_flag_) {
                if (std::fabs(fault_current_A) <= 0.01 * peak_fault_A_) {
                    if (below_count_ == 0) below_start_ = t_s;
                    if (++below_count_ >= kIsolateConsecutive)
                        t_isolate_ = below_start_ - *t_flag_;
                } else {
                    below_count_ = 0;
                }
            }
        }

        // A settle time of zero can cascade through Discharging within one
        // sample; the first Safe sample then stands in for the entry.
        if (!t_dis_entry_ && (phase == FsmPhase::Discharging || phase == FsmPhase::Safe)) {
            t_dis_entry_ = t_s;
            v_start_ = v_dc_V;
        }
        if (!t_safe_entry_ && phase == FsmPhase::Safe) {
            t_safe_entry_ = t_s;
            v_end_ = v_dc_V;
        }
        if (phase == FsmPhase::Discharging) {
            discharge_power_sum_W_ += v_dc_V * i_dis_A;
            ++discharge_samples_;
        }

        for (double tj : tj_C) {
            peak_tj_C_ = std::max(peak_tj_C_, tj);
            stress_Ks_ += std::max(tj - cfg_.thermal.t_ref_C, 0.0) * weight_s;
        }
        last_v_dc_V_ = v_dc_V;
    }

    void set_energies(double e_stored_first_J, double e_stored_last_J, double dissipated_J,
                      double source_in_J, double emf_absorbed_J) {
        const double residual = (e_stored_last_J - e_stored_first_J) -
                                (source_in_J - emf_absorbed_J) + dissipated_J;
        audit_error_ = std::fabs(residual) / std::max(e_stored_first_J, 1e-9);
    }

    MetricsReport report() const {
        MetricsReport m;
        if (t_flag_ && earliest_fault_) m.t_detect_s = *t_flag_ - *earliest_fault_;
        m.t_isolate_s = t_isolate_;
        if (t_dis_entry_ && t_safe_entry_) m.t_discharge_s = *t_safe_entry_ - *t_dis_entry_;
        m.peak_tj_C = peak_tj_C_;
        m.thermal_stress_Ks = stress_Ks_;
        m.energy_audit_error = audit_error_;
        if (t_dis_entry_) {
            const double v_end = t_safe_entry_ ? v_end_ : last_v_dc_V_;
            m.score_voltage_drop = v_start_ > 0.0 ? clamp01(1.0 - v_end / v_start_) : 0.0;
            m.score_current_flow =
                discharge_samples_ > 0
                    ? discharge_power_sum_W_ / (discharge_samples_ * cfg_.discharge.p_max_W)
                    : 0.0;
            const double denom =
                std::max(cfg_.discharge.tj_limit_C - cfg_.thermal.t_ambient_C, 1e-9);
            m.score_temperature_response =
                clamp01(1.0 - (peak_tj_C_ - cfg_.thermal.t_ambient_C) / denom);
        }
        return m;
    }

private:
    const ScenarioConfig& cfg_;
    std::optional<double> earliest_fault_;
    std::optional<double> t_flag_;
    std::optional<double> t_isolate_;
    std::optional<double> t_dis_entry_;
    std::optional<double> t_safe_entry_;
    double peak_fault_A_ = 0.0;
    double below_start_ = 0.0;
    int below_count_ = 0;
    double v_start_ = 0.0;
    double v_end_ = 0.0;
    double last_v_dc_V_ = 0.0;
    double discharge_power_sum_W_ = 0.0;
    long discharge_samples_ = 0;
    double peak_tj_C_ = std::numeric_limits<double>::lowest();
    double stress_Ks_ = 0.0;
    double audit_error_ = 0.0;
};

std::optional<double> improvement_ratio(const std::optional<double>& baseline,
                                        const std::optional<double>& protected_value) {
    if (!baseline || !protected_value) return std::nullopt;
    if (*protected_value > 0.0) return *baseline / *protected_value;
    if (*baseline == 0.0) return 1.0;
    return std::numeric_limits<double>::infinity();
}

}  // namespace

const char* to_string(DriveMode m) {
    switch (m) {
        case DriveMode::None: return "none";
        case DriveMode::Block: return "block";
    }
    return "?";
}

void ScenarioConfig::validate() const {
    if (id.empty()) throw ValidationError("scenario id must not be empty");
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        if (!ok) throw ValidationError("scenario id may only contain [A-Za-z0-9_.-]");
    }
    plant.validate();
    thermal.validate();
    detector.validate();
    discharge.validate();
    if (!(std::isfinite(dt_s) && dt_s > 0.0)) throw ValidationError("dt must be > 0");
    if (!(std::isfinite(t_end_s) && t_end_s > 0.0)) throw ValidationError("t_end must be > 0");
    const double steps = t_end_s / dt_s;
    const long n = std::lround(steps);
    if (n < 1 || std::fabs(steps - static_cast<double>(n)) > 1e-6 * std::max(1.0, steps))
        throw ValidationError("t_end must be a whole number of dt steps");
    if (trace_decimation < 1) throw ValidationError("trace_decimation must be >= 1");
    if (!(std::isfinite(asc_settle_s) && asc_settle_s >= 0.0))
        throw ValidationError("asc_settle must be >= 0");
    if (!(std::isfinite(dv_max_step_V) && dv_max_step_V > 0.0))
        throw ValidationError("dv_max_step must be > 0");
    if (std::fabs(detector.sample_period_s - dt_s) > 1e-12 * std::max(1.0, dt_s))
        throw ValidationError("detector sample_period must equal the simulation dt");
    validate_schedule(faults, t_end_s);
}

RunResult run(const ScenarioConfig& cfg) {
    cfg.validate();

    const double dt = cfg.dt_s;
    const long n_steps = std::lround(cfg.t_end_s / dt);

    PlantStepper stepper(cfg.plant, dt, cfg.dv_max_step_V);
    ElectricalState state;
    state.v_dc_V = cfg.plant.v_dc0_V;
    state.theta_rad = cfg.plant.theta0_rad;

    ThermalState tj = make_thermal_state(cfg.thermal);
    Detector detector(cfg.detector);
    ProtectionFsm fsm(cfg.asc_settle_s, cfg.discharge.v_safe_V);
    MetricsAccumulator acc(cfg);

    RunResult out;
    out.trace.reserve(static_cast<std::size_t>(n_steps / cfg.trace_decimation) + 2);

    double e_diss = 0.0, e_src = 0.0, e_emf = 0.0;
    const double e_stored0 = stored_energy(state.v_dc_V, state.i_phase_A, cfg.plant);

    for (long n = 0; n <= n_steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        const FaultOverlay overlay = active_overlay(cfg.faults, t);

        SwitchCommand cmd = base_command(cfg, state.theta_rad);
        bool flag = false;
        FsmPhase phase = FsmPhase::Normal;
        if (cfg.protection_enabled) {
            flag = detector.sample(t, state.v_dc_V, state.i_phase_A);
            phase = fsm.step(t, flag, state.v_dc_V);
            if (phase != FsmPhase::Normal) {
                cmd = cfg.response == ProtectionResponse::Asc ? asc_command(cfg.asc_policy)
                                                              : SwitchCommand{};
                cmd.contactor_closed = false;
                if (phase == FsmPhase::Discharging &&
                    cfg.discharge.mode != DischargeConfig::Mode::PassiveOnly)
                    cmd.active_discharge_current_A = discharge_controller_step(
                        state.v_dc_V, tj.tj_C[kDischargeDevice], cfg.discharge);
            }
        }

        // Values recorded for sample n describe time t: state and solution at
        // t, the phase in force for [t, t+dt), energies integrated over [0,t).
        const ElectricalState pre = state;
        TerminalSolution sol;
        StepEnergies step_e;
        if (n < n_steps) {
            const StepResult res = stepper.step(state, cmd, overlay, t);
            sol = res.start;
            step_e = res.energies;
        } else {
            sol = stepper.peek(state, cmd, overlay, t);
        }

        if (n % cfg.trace_decimation == 0) {
            TraceRecord r;
            r.t_s = t;
            r.v_dc_V = pre.v_dc_V;
            r.i_phase_A = pre.i_phase_A;
            r.fsm = phase;
            r.flag = flag;
            r.tj_C = tj.tj_C;
            r.i_discharge_A = cmd.active_discharge_current_A;
            r.fault_branch_current_A = sol.fault_branch_current_A;
            r.theta_rad = pre.theta_rad;
            r.e_dissipated_J = e_diss;
            r.e_source_in_J = e_src;
            r.e_emf_absorbed_J = e_emf;
            out.trace.push_back(r);
        }
        acc.sample(t, pre.v_dc_V, sol.fault_branch_current_A, phase, flag, tj.tj_C,
                   cmd.active_discharge_current_A, dt);

        if (n < n_steps) {
            e_diss += step_e.dissipated_J;
            e_src += step_e.source_in_J;
            e_emf += step_e.emf_absorbed_J;
            const DeviceLosses losses = conduction_losses(sol, pre, cmd, cfg.plant);
            tj = thermal_step(tj, losses.power_W, dt, cfg.thermal);
        }
    }

    acc.set_energies(e_stored0, stored_energy(state.v_dc_V, state.i_phase_A, cfg.plant), e_diss,
                     e_src, e_emf);
    out.metrics = acc.report();
    return out;
}

MetricsReport compute_metrics(const Trace& trace, const ScenarioConfig& cfg) {
    if (trace.empty()) throw EmptyTrace("metrics requested from an empty trace");
    MetricsAccumulator acc(cfg);
    const double weight = trace.size() >= 2 ? trace[1].t_s - trace[0].t_s : cfg.dt_s;
    for (const TraceRecord& r : trace)
        acc.sample(r.t_s, r.v_dc_V, r.fault_branch_current_A, r.fsm, r.flag, r.tj_C,
                   r.i_discharge_A, weight);
    const TraceRecord& a = trace.front();
    const TraceRecord& b = trace.back();
    acc.set_energies(stored_energy(a.v_dc_V, a.i_phase_A, cfg.plant),
                     stored_energy(b.v_dc_V, b.i_phase_A, cfg.plant),
                     b.e_dissipated_J - a.e_dissipated_J, b.e_source_in_J - a.e_source_in_J,
                     b.e_emf_absorbed_J - a.e_emf_absorbed_J);
    return acc.report();
}

double energy_audit(const Trace& trace, const ScenarioConfig& cfg) {
    if (trace.size() < 2) throw ValidationError("energy audit needs at least two records");
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (std::fabs(trace[i].t_s - trace[i - 1].t_s - cfg.dt_s) > 1e-9 * std::max(1.0, cfg.dt_s))
            throw ValidationError(
                "energy audit requires a full-resolution trace (trace_decimation = 1)");
    }
    const TraceRecord& a = trace.front();
    const TraceRecord& b = trace.back();
    const double e0 = stored_energy(a.v_dc_V, a.i_phase_A, cfg.plant);
    const double e1 = stored_energy(b.v_dc_V, b.i_phase_A, cfg.plant);
    const double residual = (e1 - e0) -
                            ((b.e_source_in_J - a.e_source_in_J) -
                             (b.e_emf_absorbed_J - a.e_emf_absorbed_J)) +
                            (b.e_dissipated_J - a.e_dissipated_J);
    return std::fabs(residual) / std::max(e0, 1e-9);
}

ImprovementReport compare(const MetricsReport& baseline, const MetricsReport& protected_run) {
    ImprovementReport r;
    r.detection_ratio = improvement_ratio(baseline.t_detect_s, protected_run.t_detect_s);
    r.thermal_stress_ratio =
        improvement_ratio(baseline.thermal_stress_Ks, protected_run.thermal_stress_Ks);
    r.performance_ratio = improvement_ratio(baseline.t_discharge_s, protected_run.t_discharge_s);
    return r;
}

std::vector<CampaignEntry> run_campaign(std::vector<ScenarioConfig> cfgs, int threads) {
    std::sort(cfgs.begin(), cfgs.end(),
              [](const ScenarioConfig& a, const ScenarioConfig& b) { return a.id < b.id; });
    std::vector<CampaignEntry> out(cfgs.size());

    auto run_one = [&](std::size_t i) {
        out[i].id = cfgs[i].id;
        try {
            RunResult r = run(cfgs[i]);
            out[i].metrics = std::move(r.metrics);
            out[i].trace = std::move(r.trace);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    };

#ifdef _OPENMP
    if (threads > 1) {
        // Scenarios are independent; any schedule yields identical output.
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
        for (long i = 0; i < static_cast<long>(cfgs.size()); ++i)
            run_one(static_cast<std::size_t>(i));
        return out;
    }
#endif
    (void)threads;
    for (std::size_t i = 0; i < cfgs.size(); ++i) run_one(i);
    return out;
}

}  // namespace ascsim
