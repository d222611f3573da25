#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ascsim/types.hpp"

namespace ascsim {

enum class FaultKind : std::uint8_t {
    PhaseToPhaseShort,
    PhaseToGroundShort,
    SwitchShortHigh,
    SwitchShortLow,
    ShootThrough,
    OpenPhase,
};

const char* to_string(FaultKind k);
std::optional<FaultKind> fault_kind_from_string(const std::string& s);

/// One scheduled fault. `targets[1]` is used only by PhaseToPhaseShort.
/// `fault_resistance_Ohm` applies to the two short kinds; forced-switch and
/// open-phase kinds ignore it. An absent `t_end_s` means active until t_end.
struct FaultEvent {
    FaultKind kind = FaultKind::PhaseToPhaseShort;
    int targets[2] = {0, -1};
    double fault_resistance_Ohm = 1e-3;
    double t_start_s = 0.0;
    std::optional<double> t_end_s;
};

/// Superposition of every fault active at one instant, expressed as extra
/// conductances, forced switch states, and broken machine branches.
struct FaultOverlay {
    double g_pp[kPhases][kPhases] = {};  // symmetric, diagonal unused
    PhaseArray g_pg{};
    std::array<bool, kPhases> force_high{};
    std::array<bool, kPhases> force_low{};
    std::array<bool, kPhases> open_phase{};

    bool any() const;
    bool operator==(const FaultOverlay&) const;
};

bool event_active(const FaultEvent& ev, double t_s);

/// Rejects bad targets, non-positive short resistance, negative or reversed
/// times, and events scheduled entirely past t_end. Throws InvalidFault.
void validate_schedule(std::span<const FaultEvent> schedule, double t_end_s);

/// Pure: same (schedule, t) always yields the same overlay.
FaultOverlay active_overlay(std::span<const FaultEvent> schedule, double t_s);

}  // namespace ascsim
