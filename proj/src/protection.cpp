#include "ascsim/protection.hpp"

#include <algorithm>
#include <cmath>

#include "ascsim/errors.hpp"

namespace ascsim {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw ValidationError(msg);
}

}  // namespace

void DetectorConfig::validate() const {
    require(std::isfinite(highpass_cutoff_Hz) && highpass_cutoff_Hz > 0.0,
            "highpass_cutoff must be > 0");
    require(std::isfinite(ripple_threshold_V) && ripple_threshold_V > 0.0,
            "ripple_threshold must be > 0");
    require(std::isfinite(overcurrent_threshold_A) && overcurrent_threshold_A > 0.0,
            "overcurrent_threshold must be > 0");
    require(std::isfinite(sample_period_s) && sample_period_s > 0.0,
            "sample_period must be > 0");
    require(std::isfinite(confirm_window_s) && confirm_window_s >= sample_period_s,
            "confirm_window must be >= sample_period");
}

Detector::Detector(const DetectorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    // Bilinear transform of H(s) = s/(s + wc) at Ts:
    //   y[n] = p*y[n-1] + g*(x[n] - x[n-1])
    const double wcts = 2.0 * 3.14159265358979323846 * cfg_.highpass_cutoff_Hz * cfg_.sample_period_s;
    pole_ = (2.0 - wcts) / (2.0 + wcts);
    gain_ = 2.0 / (2.0 + wcts);
    needed_ = std::max(1, static_cast<int>(std::ceil(cfg_.confirm_window_s / cfg_.sample_period_s - 1e-9)));
}

bool Detector::sample(double t_s, double v_dc_V, const PhaseArray& i_phase_A) {
    if (!primed_) {
        // First sample seeds the filter history; a run that starts at a high
        // bus voltage must not latch on its own initial condition.
        x_prev_ = v_dc_V;
        primed_ = true;
    }
    y_ = pole_ * y_ + gain_ * (v_dc_V - x_prev_);
    x_prev_ = v_dc_V;

    if (latched_) return true;

    bool exceed = std::fabs(y_) > cfg_.ripple_threshold_V;
    for (double i : i_phase_A)
        exceed = exceed || std::fabs(i) > cfg_.overcurrent_threshold_A;

    count_ = exceed ? count_ + 1 : 0;
    if (count_ >= needed_) {
        latched_ = true;
        t_flag_ = t_s;
    }
    return latched_;
}

void Detector::reset() {
    latched_ = false;
    t_flag_.reset();
    count_ = 0;
    y_ = 0.0;
    primed_ = false;
}

const char* to_string(FsmPhase p) {
    switch (p) {
        case FsmPhase::Normal: return "Normal";
        case FsmPhase::Detected: return "Detected";
        case FsmPhase::AscEngaged: return "AscEngaged";
        case FsmPhase::Discharging: return "Discharging";
        case FsmPhase::Safe: return "Safe";
    }
    return "?";
}

const char* to_string(AscPolicy p) {
    return p == AscPolicy::LowSideAll ? "low_side_all" : "high_side_all";
}

const char* to_string(ProtectionResponse r) {
    return r == ProtectionResponse::Asc ? "asc" : "open_all";
}

const char* to_string(DischargeConfig::Mode m) {
    switch (m) {
        case DischargeConfig::Mode::PassiveOnly: return "passive_only";
        case DischargeConfig::Mode::ActiveOnly: return "active_only";
        case DischargeConfig::Mode::Hybrid: return "hybrid";
    }
    return "?";
}

SwitchCommand asc_command(AscPolicy policy) {
    SwitchCommand cmd;
    cmd.contactor_closed = false;
    cmd.active_discharge_current_A = 0.0;
    for (int k = 0; k < kPhases; ++k) {
        cmd.high[k] = policy == AscPolicy::HighSideAll;
        cmd.low[k] = policy == AscPolicy::LowSideAll;
    }
    return cmd;
}

void DischargeConfig::validate() const {
    require(std::isfinite(v_safe_V) && v_safe_V > 0.0, "v_safe must be > 0");
    require(std::isfinite(p_max_W) && p_max_W > 0.0, "p_max must be > 0");
    require(std::isfinite(v_floor_V) && v_floor_V > 0.0, "v_floor must be > 0");
    require(std::isfinite(tj_limit_C), "tj_limit must be finite");
    require(std::isfinite(tj_margin_K) && tj_margin_K > 0.0, "tj_margin must be > 0");
}

double discharge_controller_step(double v_dc_V, double tj_C, const DischargeConfig& cfg) {
    if (cfg.mode == DischargeConfig::Mode::PassiveOnly) return 0.0;
    const double derate = std::clamp((cfg.tj_limit_C - tj_C) / cfg.tj_margin_K, 0.0, 1.0);
    return derate * cfg.p_max_W / std::max(v_dc_V, cfg.v_floor_V);
}

ProtectionFsm::ProtectionFsm(double asc_settle_s, double v_safe_V)
    : asc_settle_s_(asc_settle_s), v_safe_V_(v_safe_V) {
    entry_[static_cast<int>(FsmPhase::Normal)] = 0.0;
}

void ProtectionFsm::enter(FsmPhase p, double t_s) {
    const int from = static_cast<int>(phase_);
    const int to = static_cast<int>(p);
    if (to != from + 1)
        throw IllegalTransition(std::string("protection fsm: ") + to_string(phase_) + " -> " +
                                to_string(p));
    if (entry_[to].has_value())
        throw IllegalTransition(std::string("protection fsm: re-entered ") + to_string(p));
    phase_ = p;
    entry_[to] = t_s;
}

FsmPhase ProtectionFsm::step(double t_s, bool flag, double v_dc_V) {
    // Detection cascades straight into the isolation stage within one
    // sample; entry timestamps stay non-decreasing.
    if (phase_ == FsmPhase::Normal && flag) enter(FsmPhase::Detected, t_s);
    if (phase_ == FsmPhase::Detected) enter(FsmPhase::AscEngaged, t_s);
    if (phase_ == FsmPhase::AscEngaged) {
        const double entered = *entry_[static_cast<int>(FsmPhase::AscEngaged)];
        if (t_s - entered >= asc_settle_s_ - 1e-15) enter(FsmPhase::Discharging, t_s);
    }
    if (phase_ == FsmPhase::Discharging && v_dc_V <= v_safe_V_) enter(FsmPhase::Safe, t_s);
    return phase_;
}

std::optional<double> ProtectionFsm::entry_time(FsmPhase p) const {
    return entry_[static_cast<int>(p)];
}

}  // namespace ascsim
