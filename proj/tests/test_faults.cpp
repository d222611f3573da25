#include "doctest.h"

#include <string>
#include <vector>

#include "ascsim/faults.hpp"

using namespace ascsim;
using doctest::Approx;

namespace {

FaultEvent make_event(FaultKind kind, int a, int b = -1, double r = 1e-3, double start = 1e-3) {
    FaultEvent ev;
    ev.kind = kind;
    ev.targets[0] = a;
    ev.targets[1] = b;
    ev.fault_resistance_Ohm = r;
    ev.t_start_s = start;
    return ev;
}

}  // namespace

TEST_CASE("fault kinds round trip through their names") {
    for (auto k : {FaultKind::PhaseToPhaseShort, FaultKind::PhaseToGroundShort,
                   FaultKind::SwitchShortHigh, FaultKind::SwitchShortLow,
                   FaultKind::ShootThrough, FaultKind::OpenPhase}) {
        const auto back = fault_kind_from_string(to_string(k));
        REQUIRE(back.has_value());
        CHECK(*back == k);
    }
    CHECK_FALSE(fault_kind_from_string("meteor_strike").has_value());
}

TEST_CASE("events are active from start inclusive to end exclusive") {
    FaultEvent ev = make_event(FaultKind::OpenPhase, 2);
    ev.t_start_s = 1.0;
    ev.t_end_s = 2.0;
    CHECK_FALSE(event_active(ev, 0.999999));
    CHECK(event_active(ev, 1.0));
    CHECK(event_active(ev, 1.999999));
    CHECK_FALSE(event_active(ev, 2.0));

    ev.t_end_s.reset();
    CHECK(event_active(ev, 1e9));
}

TEST_CASE("schedule validation rejects malformed events") {
    const double t_end = 0.1;

    auto reject = [&](FaultEvent ev) {
        std::vector<FaultEvent> sched{ev};
        CHECK_THROWS_AS(validate_schedule(sched, t_end), InvalidFault);
    };

    std::vector<FaultEvent> good{make_event(FaultKind::PhaseToPhaseShort, 0, 1)};
    CHECK_NOTHROW(validate_schedule(good, t_end));

    reject(make_event(FaultKind::OpenPhase, -1));
    reject(make_event(FaultKind::OpenPhase, kPhases));
    reject(make_event(FaultKind::PhaseToPhaseShort, 2, 2));
    reject(make_event(FaultKind::PhaseToPhaseShort, 0, -1));  // needs a second phase
    reject(make_event(FaultKind::PhaseToPhaseShort, 0, 1, 0.0));
    reject(make_event(FaultKind::PhaseToGroundShort, 0, -1, -5.0));

    FaultEvent late = make_event(FaultKind::OpenPhase, 0);
    late.t_start_s = t_end;  // never active inside the run
    reject(late);

    FaultEvent negative = make_event(FaultKind::OpenPhase, 0);
    negative.t_start_s = -1e-6;
    reject(negative);

    FaultEvent reversed = make_event(FaultKind::OpenPhase, 0);
    reversed.t_start_s = 0.02;
    reversed.t_end_s = 0.02;
    reject(reversed);

    // Forced-switch kinds ignore the resistance field entirely.
    std::vector<FaultEvent> forced{make_event(FaultKind::SwitchShortHigh, 1, -1, 0.0)};
    CHECK_NOTHROW(validate_schedule(forced, t_end));
}

TEST_CASE("the overlay superimposes every active event") {
    std::vector<FaultEvent> sched{
        make_event(FaultKind::PhaseToPhaseShort, 0, 1, 1e-3),
        make_event(FaultKind::PhaseToPhaseShort, 1, 2, 2e-3),
        make_event(FaultKind::PhaseToGroundShort, 3, -1, 4e-3),
    };
    sched[2].t_end_s = 2e-3;

    const FaultOverlay before = active_overlay(sched, 0.0);
    CHECK_FALSE(before.any());
    CHECK(before == FaultOverlay{});

    const FaultOverlay on = active_overlay(sched, 1.5e-3);
    CHECK(on.any());
    CHECK(on.g_pp[0][1] == Approx(1000.0).epsilon(1e-12));
    CHECK(on.g_pp[1][0] == Approx(1000.0).epsilon(1e-12));
    CHECK(on.g_pp[1][2] == Approx(500.0).epsilon(1e-12));
    CHECK(on.g_pg[3] == Approx(250.0).epsilon(1e-12));

    const FaultOverlay later = active_overlay(sched, 3e-3);
    CHECK(later.g_pg[3] == 0.0);  // ground short expired
    CHECK(later.g_pp[0][1] == Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("repeated shorts on the same pair add their conductances") {
    std::vector<FaultEvent> sched{
        make_event(FaultKind::PhaseToPhaseShort, 0, 1, 1e-3),
        make_event(FaultKind::PhaseToPhaseShort, 1, 0, 1e-3),
    };
    const FaultOverlay ov = active_overlay(sched, 2e-3);
    CHECK(ov.g_pp[0][1] == Approx(2000.0).epsilon(1e-12));
}

TEST_CASE("forced switch and open phase kinds set their flags") {
    std::vector<FaultEvent> sched{
        make_event(FaultKind::SwitchShortHigh, 0),
        make_event(FaultKind::SwitchShortLow, 1),
        make_event(FaultKind::ShootThrough, 2),
        make_event(FaultKind::OpenPhase, 4),
    };
    const FaultOverlay ov = active_overlay(sched, 2e-3);
    CHECK(ov.force_high[0]);
    CHECK_FALSE(ov.force_low[0]);
    CHECK(ov.force_low[1]);
    CHECK(ov.force_high[2]);
    CHECK(ov.force_low[2]);
    CHECK(ov.open_phase[4]);
    CHECK(ov.any());
}
