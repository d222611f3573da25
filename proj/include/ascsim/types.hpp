#pragma once

#include <array>
#include <cstdint>

#include "ascsim/errors.hpp"

namespace ascsim {

inline constexpr int kPhases = 5;

/// 10 tracked switch junctions (high/low per leg) plus the discharge device.
inline constexpr int kDeviceCount = 2 * kPhases + 1;
inline constexpr int kDischargeDevice = 2 * kPhases;

using PhaseArray = std::array<double, kPhases>;

inline constexpr int high_device(int leg) { return leg; }
inline constexpr int low_device(int leg) { return kPhases + leg; }

/// DC-link network: capacitor with series ESR toward the inverter rail,
/// bleed resistor across the link, source behind a contactor.
struct DcLinkParams {
    double capacitance_F = 500e-6;
    double esr_Ohm = 2e-3;
    double bleed_resistance_Ohm = 10e3;
    double source_voltage_V = 400.0;
    double source_resistance_Ohm = 10e-3;

    void validate() const;
};

/// Piecewise-linear device model: on-state resistance for switches,
/// constant drop plus slope resistance for body diodes.
struct DeviceParams {
    double r_on_Ohm = 5e-3;
    double diode_drop_V = 0.9;
    double diode_r_Ohm = 5e-3;

    void validate() const;
};

/// Star-connected five-phase machine, isolated neutral, sinusoidal back-EMF.
struct MachineParams {
    static constexpr int phase_count = kPhases;
    double resistance_Ohm = 50e-3;
    double inductance_H = 200e-6;
    double bemf_amplitude_V = 150.0;
    double electrical_speed_rad_s = 2.0 * 3.14159265358979323846 * 200.0;

    void validate() const;
};

struct PlantParams {
    DcLinkParams dc;
    DeviceParams device;
    MachineParams machine;
    double v_dc0_V = 400.0;
    double theta0_rad = 0.0;
    bool contactor_closed = true;
    double current_sanity_bound_A = 1e5;

    void validate() const;
};

/// Commanded inverter inputs for one step. A leg with both switches
/// commanded On is only legal when a ShootThrough fault forces it.
struct SwitchCommand {
    std::array<bool, kPhases> high{};
    std::array<bool, kPhases> low{};
    bool contactor_closed = true;
    double active_discharge_current_A = 0.0;

    bool operator==(const SwitchCommand&) const = default;
};

/// Integrated electrical state: capacitor voltage, phase currents
/// (positive into the machine), electrical angle.
struct ElectricalState {
    double v_dc_V = 0.0;
    PhaseArray i_phase_A{};
    double theta_rad = 0.0;
};

/// Single-stage Foster network shared by every tracked device.
struct ThermalParams {
    double r_th_K_W = 0.5;
    double c_th_J_K = 0.1;
    double t_ambient_C = 65.0;
    double t_ref_C = 65.0;

    void validate() const;
};

}  // namespace ascsim
