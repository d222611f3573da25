#include "ascsim/thermal.hpp"

#include <algorithm>
#include <cmath>

namespace ascsim {

double ThermalState::max_tj() const {
    return *std::max_element(tj_C.begin(), tj_C.end());
}

ThermalState make_thermal_state(const ThermalParams& params) {
    ThermalState s{};
    s.tj_C.fill(params.t_ambient_C);
    return s;
}

ThermalState thermal_step(const ThermalState& state,
                          std::span<const double> power_W,
                          double dt_s,
                          const ThermalParams& params) {
    const double tau = params.r_th_K_W * params.c_th_J_K;
    const double decay = std::exp(-dt_s / tau);
    ThermalState next = state;
    for (int d = 0; d < kDeviceCount; ++d) {
        const double p = d < static_cast<int>(power_W.size()) ? power_W[d] : 0.0;
        const double t_final = params.t_ambient_C + p * params.r_th_K_W;
        next.tj_C[d] = t_final + (state.tj_C[d] - t_final) * decay;
    }
    return next;
}

ThermalStress stress_metrics(std::span<const ThermalState> history,
                             double dt_s,
                             double t_ref_C) {
    ThermalStress out{};
    if (history.empty()) return out;
    out.peak_tj_C = history.front().tj_C[0];
    for (const ThermalState& s : history) {
        double sample_max = s.tj_C[0];
        for (int d = 0; d < kDeviceCount; ++d) {
            sample_max = std::max(sample_max, s.tj_C[d]);
            out.stress_integral_Ks += std::max(s.tj_C[d] - t_ref_C, 0.0) * dt_s;
        }
        out.peak_tj_C = std::max(out.peak_tj_C, sample_max);
        if (sample_max > t_ref_C) out.time_above_ref_s += dt_s;
    }
    return out;
}

}  // namespace ascsim
