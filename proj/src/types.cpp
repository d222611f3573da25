#include "ascsim/types.hpp"

#include <cmath>
#include <string>

namespace ascsim {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void DcLinkParams::validate() const {
    require(finite(capacitance_F) && capacitance_F > 0.0, "capacitance must be > 0");
    require(finite(esr_Ohm) && esr_Ohm >= 0.0, "esr must be >= 0");
    require(finite(bleed_resistance_Ohm) && bleed_resistance_Ohm > 0.0,
            "bleed_resistance must be > 0");
    require(finite(source_voltage_V) && source_voltage_V >= 0.0, "source_voltage must be >= 0");
    require(finite(source_resistance_Ohm) && source_resistance_Ohm > 0.0,
            "source_resistance must be > 0");
}

void DeviceParams::validate() const {
    require(finite(r_on_Ohm) && r_on_Ohm > 0.0, "r_on must be > 0");
    require(finite(diode_drop_V) && diode_drop_V >= 0.0, "diode_drop must be >= 0");
    require(finite(diode_r_Ohm) && diode_r_Ohm > 0.0, "diode_r must be > 0");
}

void MachineParams::validate() const {
    require(finite(resistance_Ohm) && resistance_Ohm > 0.0, "machine resistance must be > 0");
    require(finite(inductance_H) && inductance_H > 0.0, "machine inductance must be > 0");
    require(finite(bemf_amplitude_V) && bemf_amplitude_V >= 0.0, "bemf_amplitude must be >= 0");
    require(finite(electrical_speed_rad_s), "electrical_speed must be finite");
}

void PlantParams::validate() const {
    dc.validate();
    device.validate();
    machine.validate();
    require(finite(v_dc0_V) && v_dc0_V >= 0.0, "v_dc0 must be >= 0");
    require(finite(theta0_rad), "theta0 must be finite");
    require(finite(current_sanity_bound_A) && current_sanity_bound_A > 0.0,
            "current_sanity_bound must be > 0");
}

void ThermalParams::validate() const {
    require(finite(r_th_K_W) && r_th_K_W > 0.0, "r_th must be > 0");
    require(finite(c_th_J_K) && c_th_J_K > 0.0, "c_th must be > 0");
    require(finite(t_ambient_C), "t_ambient must be finite");
    require(finite(t_ref_C), "t_ref must be finite");
}

}  // namespace ascsim
