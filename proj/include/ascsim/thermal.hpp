#pragma once

#include <array>
#include <span>

#include "ascsim/types.hpp"

namespace ascsim {

/// Junction temperatures for the 10 switch positions plus the discharge
/// device, all referenced to one Foster stage.
struct ThermalState {
    std::array<double, kDeviceCount> tj_C{};

    double max_tj() const;
};

ThermalState make_thermal_state(const ThermalParams& params);

/// Exact one-stage Foster update over dt under constant power:
///   T' = T_amb + P*r_th + (T - T_amb - P*r_th) * exp(-dt/(r_th*c_th))
/// Exact for any dt, so splitting a step in half reproduces the full step.
ThermalState thermal_step(const ThermalState& state,
                          std::span<const double> power_W,
                          double dt_s,
                          const ThermalParams& params);

/// Aggregates over a temperature history sampled at fixed spacing.
struct ThermalStress {
    double peak_tj_C = 0.0;
    double time_above_ref_s = 0.0;   // any device above t_ref
    double stress_integral_Ks = 0.0; // sum over devices of max(T - t_ref, 0)*dt
};

ThermalStress stress_metrics(std::span<const ThermalState> history,
                             double dt_s,
                             double t_ref_C);

}  // namespace ascsim
