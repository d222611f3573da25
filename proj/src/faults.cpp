#include "ascsim/faults.hpp"

#include <cmath>
#include <cstring>

#include "ascsim/errors.hpp"

namespace ascsim {

const char* to_string(FaultKind k) {
    switch (k) {
        case FaultKind::PhaseToPhaseShort: return "phase_to_phase";
        case FaultKind::PhaseToGroundShort: return "phase_to_ground";
        case FaultKind::SwitchShortHigh: return "switch_short_high";
        case FaultKind::SwitchShortLow: return "switch_short_low";
        case FaultKind::ShootThrough: return "shoot_through";
        case FaultKind::OpenPhase: return "open_phase";
    }
    return "?";
}

std::optional<FaultKind> fault_kind_from_string(const std::string& s) {
    for (auto k : {FaultKind::PhaseToPhaseShort, FaultKind::PhaseToGroundShort,
                   FaultKind::SwitchShortHigh, FaultKind::SwitchShortLow,
                   FaultKind::ShootThrough, FaultKind::OpenPhase}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

bool FaultOverlay::any() const {
    for (int a = 0; a < kPhases; ++a) {
        if (g_pg[a] != 0.0 || force_high[a] || force_low[a] || open_phase[a]) return true;
        for (int b = a + 1; b < kPhases; ++b)
            if (g_pp[a][b] != 0.0) return true;
    }
    return false;
}

bool FaultOverlay::operator==(const FaultOverlay& o) const {
    return std::memcmp(g_pp, o.g_pp, sizeof(g_pp)) == 0 && g_pg == o.g_pg &&
           force_high == o.force_high && force_low == o.force_low && open_phase == o.open_phase;
}

bool event_active(const FaultEvent& ev, double t_s) {
    if (t_s < ev.t_start_s) return false;
    if (ev.t_end_s && t_s >= *ev.t_end_s) return false;
    return true;
}

namespace {

bool needs_two_targets(FaultKind k) { return k == FaultKind::PhaseToPhaseShort; }

bool uses_resistance(FaultKind k) {
    return k == FaultKind::PhaseToPhaseShort || k == FaultKind::PhaseToGroundShort;
}

}  // namespace

void validate_schedule(std::span<const FaultEvent> schedule, double t_end_s) {
    for (std::size_t n = 0; n < schedule.size(); ++n) {
        const FaultEvent& ev = schedule[n];
        const std::string at = "fault #" + std::to_string(n) + " (" + to_string(ev.kind) + "): ";

        auto check_target = [&](int idx) {
            if (idx < 0 || idx >= kPhases)
                throw InvalidFault(at + "target " + std::to_string(idx) + " out of range");
        };
        check_target(ev.targets[0]);
        if (needs_two_targets(ev.kind)) {
            check_target(ev.targets[1]);
            if (ev.targets[0] == ev.targets[1])
                throw InvalidFault(at + "targets must name two distinct phases");
        }
        if (uses_resistance(ev.kind) &&
            !(std::isfinite(ev.fault_resistance_Ohm) && ev.fault_resistance_Ohm > 0.0))
            throw InvalidFault(at + "fault resistance must be > 0");
        if (!(std::isfinite(ev.t_start_s) && ev.t_start_s >= 0.0))
            throw InvalidFault(at + "t_start must be >= 0");
        if (ev.t_end_s) {
            if (!(std::isfinite(*ev.t_end_s) && *ev.t_end_s > ev.t_start_s))
                throw InvalidFault(at + "t_end must be > t_start");
        }
        if (ev.t_start_s >= t_end_s)
            throw InvalidFault(at + "scheduled at or after the end of the run");
    }
}

FaultOverlay active_overlay(std::span<const FaultEvent> schedule, double t_s) {
    FaultOverlay ov{};
    for (const FaultEvent& ev : schedule) {
        if (!event_active(ev, t_s)) continue;
        const int a = ev.targets[0];
        switch (ev.kind) {
            case FaultKind::PhaseToPhaseShort: {
                const int b = ev.targets[1];
                const double g = 1.0 / ev.fault_resistance_Ohm;
                ov.g_pp[a][b] += g;
                ov.g_pp[b][a] += g;
                break;
            }
            case FaultKind::PhaseToGroundShort:
                ov.g_pg[a] += 1.0 / ev.fault_resistance_Ohm;
                break;
            case FaultKind::SwitchShortHigh:
                ov.force_high[a] = true;
                break;
            case FaultKind::SwitchShortLow:
                ov.force_low[a] = true;
                break;
            case FaultKind::ShootThrough:
                ov.force_high[a] = true;
                ov.force_low[a] = true;
                break;
            case FaultKind::OpenPhase:
                ov.open_phase[a] = true;
                break;
        }
    }
    return ov;
}

}  // namespace ascsim
