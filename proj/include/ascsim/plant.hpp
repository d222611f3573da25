#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "ascsim/faults.hpp"
#include "ascsim/types.hpp"

namespace ascsim {

/// e_k = A * cos(theta - 2*pi*k/5)
PhaseArray back_emf(double theta_rad, const MachineParams& machine);

/// Result of the instantaneous resistive solve at one operating point.
/// Sign conventions: i_high flows rail -> terminal, i_low flows
/// ground -> terminal, dc_link_branch_current flows link -> inverter rail.
struct TerminalSolution {
    PhaseArray v_terminal_V{};
    double v_neutral_V = 0.0;
    double v_rail_V = 0.0;

    std::array<bool, kPhases> high_switch_on{};
    std::array<bool, kPhases> low_switch_on{};
    std::array<bool, kPhases> high_diode_on{};
    std::array<bool, kPhases> low_diode_on{};

    /// Leg has no conduction path and no fault attachment; its phase holds
    /// zero current.
    std::array<bool, kPhases> floating{};
    /// Machine branch participates in the dynamics (present and not isolated).
    std::array<bool, kPhases> machine_connected{};
    /// Phase current is below the blocking threshold and must be snapped to
    /// zero by the integrator before stepping.
    std::array<bool, kPhases> snap_to_zero{};

    PhaseArray i_high_A{};
    PhaseArray i_low_A{};
    double dc_link_branch_current_A = 0.0;
    double i_source_A = 0.0;
    double i_bleed_A = 0.0;
    double i_cap_A = 0.0;  // into the capacitor (positive = charging)

    double fault_branch_current_A = 0.0;  // sum of per-event magnitudes
    int fixpoint_iterations = 0;

    bool leg_conducting(int k) const {
        return high_switch_on[k] || low_switch_on[k] || high_diode_on[k] || low_diode_on[k];
    }
};

/// Warm-start diode guess carried between steps to keep the fixpoint short.
struct DiodeHint {
    std::array<bool, kPhases> high{};
    std::array<bool, kPhases> low{};
};

/// Solves the switched resistive network at the given state with the fault
/// overlay superimposed and forced switch states applied. Phase currents and
/// v_dc enter as fixed sources; diode conduction is iterated to a consistent
/// fixpoint (<= 16 passes, else TopologyUnresolvable).
///
/// `float_current_A`: residual current below which a path-less leg is
/// reported floating instead of forcing a freewheel diode on. Callers that
/// probe single states can leave the default.
TerminalSolution resolve_topology(const ElectricalState& state,
                                  const SwitchCommand& cmd,
                                  const FaultOverlay& overlay,
                                  const PlantParams& params,
                                  double float_current_A = 1e-9,
                                  const DiodeHint* hint = nullptr,
                                  double t_s = 0.0);

struct Derivative {
    double dv_dc = 0.0;
    PhaseArray di_phase{};
    double dtheta = 0.0;
};

/// Continuous-time derivatives at the resolved operating point:
///   di_k/dt = (v_term_k - R i_k - e_k - v_n) / L   (connected phases)
///   dv_dc/dt = (i_source - i_inverter - v_dc/R_bleed - i_discharge) / C
/// Connected di/dt sum to zero exactly; floating and open phases hold zero.
Derivative derivative(const ElectricalState& state,
                      const TerminalSolution& sol,
                      const SwitchCommand& cmd,
                      const PlantParams& params);

/// Conduction losses per tracked device, body-diode loss folded into its
/// switch junction. All entries are non-negative.
struct DeviceLosses {
    std::array<double, kDeviceCount> power_W{};
    double total_W = 0.0;
};

DeviceLosses conduction_losses(const TerminalSolution& sol,
                               const ElectricalState& state,
                               const SwitchCommand& cmd,
                               const PlantParams& params);

/// Per-event fault branch current magnitudes summed; also used standalone by
/// the metrics layer through TerminalSolution::fault_branch_current_A.
double fault_branch_current(const TerminalSolution& sol,
                            const ElectricalState& state,
                            const FaultOverlay& overlay,
                            std::span<const FaultEvent> schedule,
                            double t_s,
                            const PlantParams& params);

/// Energy flows over one integration step. Trapezoidal steps book the
/// trapezoid of the bounding operating points; backward-Euler steps book
/// end-point powers plus the scheme's quadratic smoothing loss, which is the
/// split that closes the discrete energy balance exactly.
struct StepEnergies {
    double dissipated_J = 0.0;     // bleed + ESR + devices + faults + discharge
    double source_in_J = 0.0;      // v_dc * i_source
    double emf_absorbed_J = 0.0;   // sum(e_k * i_k), positive = into the machine
};

struct StepResult {
    TerminalSolution start;   // operating point the step was taken from
    StepEnergies energies;
    int substeps = 1;
    bool backward_euler = false;
};

/// Fixed-step integrator. Trapezoidal companion models while the conduction
/// topology is unchanged from the previous step; backward Euler on
/// topology-change steps; deterministic equal substeps whenever the trial
/// step would move v_dc by more than `dv_max_step_V`. Applies open-phase
/// break surgery and diode turn-off snaps, booking their energy into the
/// dissipation ledger so the audit stays closed.
class PlantStepper {
public:
    PlantStepper(const PlantParams& params, double dt_s, double dv_max_step_V = 1.0);

    /// Advances `state` by dt in place. `t_s` is the time at the start of
    /// the step (used only for error reporting).
    StepResult step(ElectricalState& state,
                    const SwitchCommand& cmd,
                    const FaultOverlay& overlay,
                    double t_s);

    /// Instantaneous solve at the current state with the stepper's warm
    /// start; does not advance anything.
    TerminalSolution peek(const ElectricalState& state,
                          const SwitchCommand& cmd,
                          const FaultOverlay& overlay,
                          double t_s) const;

    double dt() const { return dt_; }

private:
    PlantParams params_;
    double dt_;
    double dv_cap_;
    DiodeHint hint_{};
    std::uint64_t prev_signature_ = ~0ull;
    std::array<bool, kPhases> prev_open_{};

    double float_threshold(const ElectricalState& s) const;
};

}  // namespace ascsim
