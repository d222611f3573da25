#include "doctest.h"

#include <cmath>

#include "ascsim/errors.hpp"
#include "ascsim/protection.hpp"

using namespace ascsim;
using doctest::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

TEST_CASE("detector latch timing equals the high pass recurrence") {
    DetectorConfig cfg;  // 1 kHz cutoff, 5 V threshold, 2 us window at 0.5 us
    Detector det(cfg);

    const double ts = cfg.sample_period_s;
    const double wcts = 2.0 * kPi * cfg.highpass_cutoff_Hz * ts;
    const double pole = (2.0 - wcts) / (2.0 + wcts);
    const double gain = 2.0 / (2.0 + wcts);
    const int needed = 4;  // ceil(2us / 0.5us)

    const PhaseArray quiet{};
    double y = 0.0, x_prev = 400.0;
    int streak = 0, latch_at = -1, flag_at = -1;
    for (int n = 0; n < 32; ++n) {
        const double v = n < 5 ? 400.0 : 390.0;
        const bool flagged = det.sample(n * ts, v, quiet);
        y = pole * y + gain * (v - x_prev);
        x_prev = v;
        streak = std::fabs(y) > cfg.ripple_threshold_V ? streak + 1 : 0;
        if (latch_at < 0 && streak >= needed) latch_at = n;
        if (flag_at < 0 && flagged) flag_at = n;
    }
    CHECK(latch_at == 5 + needed - 1);
    CHECK(flag_at == latch_at);
    REQUIRE(det.t_flag().has_value());
    CHECK(*det.t_flag() == Approx(latch_at * ts).epsilon(1e-12));
    CHECK(det.flagged());
}

TEST_CASE("phase overcurrent confirms through the same window") {
    DetectorConfig cfg;
    Detector det(cfg);
    PhaseArray i{};
    int flag_at = -1;
    for (int n = 0; n < 16; ++n) {
        if (n >= 3) i[2] = -900.0;  // magnitude check, sign must not matter
        if (det.sample(n * cfg.sample_period_s, 400.0, i) && flag_at < 0) flag_at = n;
    }
    CHECK(flag_at == 3 + 4 - 1);
}

TEST_CASE("a broken streak resets the confirmation count") {
    DetectorConfig cfg;
    Detector det(cfg);
    PhaseArray i{};
    for (int n = 0; n < 1000; ++n) {
        i[0] = (n % 4 == 3) ? 0.0 : 900.0;  // three hot samples, one calm
        det.sample(n * cfg.sample_period_s, 400.0, i);
    }
    CHECK_FALSE(det.flagged());
    CHECK_FALSE(det.t_flag().has_value());
}

TEST_CASE("the first sample seeds the filter instead of tripping it") {
    DetectorConfig cfg;
    Detector det(cfg);
    CHECK_FALSE(det.sample(0.0, 400.0, PhaseArray{}));
    CHECK(det.output() == 0.0);

    det.reset();
    CHECK_FALSE(det.flagged());
    CHECK_FALSE(det.sample(0.0, 123.0, PhaseArray{}));
    CHECK(det.output() == 0.0);
}

TEST_CASE("detector and discharge configs reject bad values") {
    DetectorConfig d;
    d.confirm_window_s = 0.1e-6;  // shorter than one sample
    CHECK_THROWS_AS(d.validate(), ValidationError);

    DischargeConfig c;
    c.tj_margin_K = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = DischargeConfig{};
    c.v_floor_V = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("asc command shorts one rail and opens the contactor") {
    const SwitchCommand low = asc_command(AscPolicy::LowSideAll);
    const SwitchCommand high = asc_command(AscPolicy::HighSideAll);
    for (int k = 0; k < kPhases; ++k) {
        CHECK(low.low[k]);
        CHECK_FALSE(low.high[k]);
        CHECK(high.high[k]);
        CHECK_FALSE(high.low[k]);
    }
    CHECK_FALSE(low.contactor_closed);
    CHECK_FALSE(high.contactor_closed);
    CHECK(low.active_discharge_current_A == 0.0);
}

TEST_CASE("the discharge controller derates linearly into the thermal limit") {
    DischargeConfig cfg;  // 800 W, floor 10 V, limit 150 C, margin 10 K

    CHECK(discharge_controller_step(400.0, 65.0, cfg) == Approx(2.0).epsilon(1e-12));
    CHECK(discharge_controller_step(400.0, 140.0, cfg) == Approx(2.0).epsilon(1e-12));
    CHECK(discharge_controller_step(400.0, 145.0, cfg) == Approx(1.0).epsilon(1e-12));
    CHECK(discharge_controller_step(400.0, 149.0, cfg) == Approx(0.2).epsilon(1e-12));
    CHECK(discharge_controller_step(400.0, 150.0, cfg) == 0.0);
    CHECK(discharge_controller_step(400.0, 500.0, cfg) == 0.0);

    // Below the floor the commanded power drops with the voltage: i is capped.
    const double i_floor = discharge_controller_step(5.0, 65.0, cfg);
    CHECK(i_floor == Approx(cfg.p_max_W / cfg.v_floor_V).epsilon(1e-12));
    CHECK(i_floor * 5.0 <= cfg.p_max_W);

    cfg.mode = DischargeConfig::Mode::PassiveOnly;
    CHECK(discharge_controller_step(400.0, 65.0, cfg) == 0.0);
}

TEST_CASE("the protection fsm cascades, settles, and absorbs in safe") {
    ProtectionFsm fsm(1e-3, 60.0);
    CHECK(fsm.phase() == FsmPhase::Normal);
    CHECK(fsm.step(0.0, false, 400.0) == FsmPhase::Normal);

    // Detection cascades straight into the short-circuit stage.
    CHECK(fsm.step(1e-6, true, 400.0) == FsmPhase::AscEngaged);
    REQUIRE(fsm.entry_time(FsmPhase::Detected).has_value());
    REQUIRE(fsm.entry_time(FsmPhase::AscEngaged).has_value());
    CHECK(*fsm.entry_time(FsmPhase::Detected) == 1e-6);
    CHECK(*fsm.entry_time(FsmPhase::AscEngaged) == 1e-6);

    CHECK(fsm.step(5e-4, true, 400.0) == FsmPhase::AscEngaged);  // settle not elapsed
    CHECK(fsm.step(1e-6 + 1e-3, true, 400.0) == FsmPhase::Discharging);
    CHECK(fsm.step(2e-3, true, 61.0) == FsmPhase::Discharging);  // still above v_safe
    CHECK(fsm.step(3e-3, true, 59.5) == FsmPhase::Safe);

    // Safe is absorbing: neither a cleared flag nor a voltage rise leaves it.
    CHECK(fsm.step(4e-3, false, 400.0) == FsmPhase::Safe);
    CHECK(fsm.step(5e-3, true, 400.0) == FsmPhase::Safe);

    const double t_detected = *fsm.entry_time(FsmPhase::Detected);
    const double t_asc = *fsm.entry_time(FsmPhase::AscEngaged);
    const double t_dis = *fsm.entry_time(FsmPhase::Discharging);
    const double t_safe = *fsm.entry_time(FsmPhase::Safe);
    CHECK(t_detected <= t_asc);
    CHECK(t_asc <= t_dis);
    CHECK(t_dis <= t_safe);
}

TEST_CASE("a zero settle time can reach safe within one sample") {
    ProtectionFsm fsm(0.0, 60.0);
    CHECK(fsm.step(1e-6, true, 30.0) == FsmPhase::Safe);
    CHECK(*fsm.entry_time(FsmPhase::Detected) == 1e-6);
    CHECK(*fsm.entry_time(FsmPhase::Safe) == 1e-6);
}
