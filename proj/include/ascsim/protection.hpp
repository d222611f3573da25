#pragma once

#include <optional>
#include <string>

#include "ascsim/types.hpp"

namespace ascsim {

/// First-order high-pass of v_dc (bilinear discretization) with a
/// consecutive-sample confirmation window, OR'd with a phase overcurrent
/// check. Latching: once flagged, stays flagged until reset().
struct DetectorConfig {
    double highpass_cutoff_Hz = 1000.0;
    double ripple_threshold_V = 5.0;
    double overcurrent_threshold_A = 800.0;
    double confirm_window_s = 2e-6;
    double sample_period_s = 0.5e-6;

    void validate() const;
};

class Detector {
public:
    explicit Detector(const DetectorConfig& cfg);

    /// One sample: v_dc and the phase currents at the sample instant.
    /// Returns the latched flag state after this sample.
    bool sample(double t_s, double v_dc_V, const PhaseArray& i_phase_A);

    bool flagged() const { return latched_; }
    std::optional<double> t_flag() const { return t_flag_; }
    double output() const { return y_; }
    void reset();

private:
    DetectorConfig cfg_;
    double pole_ = 0.0;
    double gain_ = 0.0;
    int needed_ = 1;
    int count_ = 0;
    double x_prev_ = 0.0;
    double y_ = 0.0;
    bool primed_ = false;
    bool latched_ = false;
    std::optional<double> t_flag_;
};

enum class AscPolicy : std::uint8_t { LowSideAll, HighSideAll };

/// Isolation stage behaviour: short one rail (active short circuit) or open
/// every switch (the conventional trip used as the system baseline).
enum class ProtectionResponse : std::uint8_t { Asc, OpenAll };

enum class FsmPhase : std::uint8_t { Normal, Detected, AscEngaged, Discharging, Safe };

const char* to_string(FsmPhase p);
const char* to_string(AscPolicy p);
const char* to_string(ProtectionResponse r);

/// Switch pattern for the isolation stage. Idempotent; always opens the
/// contactor and zeroes the discharge command.
SwitchCommand asc_command(AscPolicy policy);

/// Thermally derated constant-power discharge command:
///   i = derate(tj) * p_max / max(v_dc, v_floor),  i * v_dc <= p_max.
/// derate falls linearly from 1 at tj_limit - tj_margin to 0 at tj_limit.
struct DischargeConfig {
    enum class Mode : std::uint8_t { PassiveOnly, ActiveOnly, Hybrid };
    Mode mode = Mode::Hybrid;
    double v_safe_V = 60.0;
    double p_max_W = 800.0;
    double v_floor_V = 10.0;
    double tj_limit_C = 150.0;
    double tj_margin_K = 10.0;

    void validate() const;
};

const char* to_string(DischargeConfig::Mode m);

double discharge_controller_step(double v_dc_V, double tj_C, const DischargeConfig& cfg);

/// Normal -> Detected -> AscEngaged -> Discharging -> Safe, one direction
/// only, Safe absorbing. Normal->Detected->AscEngaged cascade within a single
/// sample; Discharging entered once the ASC settle time has elapsed; Safe
/// once v_dc <= v_safe. Entry timestamps are non-decreasing.
class ProtectionFsm {
public:
    ProtectionFsm(double asc_settle_s, double v_safe_V);

    /// One control sample; returns the phase in effect for the coming step.
    FsmPhase step(double t_s, bool flag, double v_dc_V);

    FsmPhase phase() const { return phase_; }
    std::optional<double> entry_time(FsmPhase p) const;

private:
    void enter(FsmPhase p, double t_s);

    double asc_settle_s_;
    double v_safe_V_;
    FsmPhase phase_ = FsmPhase::Normal;
    std::array<std::optional<double>, 5> entry_;
};

}  // namespace ascsim
