#include "doctest.h"

#include <array>
#include <cmath>
#include <vector>

#include "ascsim/thermal.hpp"

using namespace ascsim;
using doctest::Approx;

TEST_CASE("a fresh thermal state sits at ambient") {
    ThermalParams tp;
    tp.t_ambient_C = 42.0;
    const ThermalState s = make_thermal_state(tp);
    for (double t : s.tj_C) CHECK(t == 42.0);
    CHECK(s.max_tj() == 42.0);
}

TEST_CASE("zero power decays exactly along the exponential") {
    ThermalParams tp;
    ThermalState s = make_thermal_state(tp);
    s.tj_C[3] = tp.t_ambient_C + 10.0;

    const double tau = tp.r_th_K_W * tp.c_th_J_K;
    const std::array<double, kDeviceCount> zero{};
    const ThermalState after = thermal_step(s, zero, tau, tp);
    CHECK(after.tj_C[3] - tp.t_ambient_C == Approx(10.0 * std::exp(-1.0)).epsilon(1e-14));
    for (int d = 0; d < kDeviceCount; ++d)
        if (d != 3) CHECK(after.tj_C[d] == tp.t_ambient_C);
}

TEST_CASE("constant power approaches p times r_th within a tenth percent at 7 tau") {
    ThermalParams tp;
    ThermalState s = make_thermal_state(tp);
    std::array<double, kDeviceCount> power{};
    power[0] = 10.0;

    const double tau = tp.r_th_K_W * tp.c_th_J_K;
    const int n = 700;
    for (int i = 0; i < n; ++i) s = thermal_step(s, power, 7.0 * tau / n, tp);

    const double rise = s.tj_C[0] - tp.t_ambient_C;
    const double target = power[0] * tp.r_th_K_W;
    CHECK(std::fabs(rise - target) / target == Approx(std::exp(-7.0)).epsilon(1e-9));
    CHECK(std::fabs(rise - target) / target < 1e-3);
}

TEST_CASE("the update is exact for any dt so half steps compose") {
    ThermalParams tp;
    ThermalState s = make_thermal_state(tp);
    s.tj_C[0] = 90.0;
    s.tj_C[7] = 71.5;
    std::array<double, kDeviceCount> power{};
    power[0] = 25.0;
    power[7] = 3.0;

    const double dt = 7.3e-3;
    const ThermalState whole = thermal_step(s, power, dt, tp);
    const ThermalState halves = thermal_step(thermal_step(s, power, dt / 2, tp), power, dt / 2, tp);
    for (int d = 0; d < kDeviceCount; ++d)
        CHECK(whole.tj_C[d] == Approx(halves.tj_C[d]).epsilon(1e-13));
}

TEST_CASE("stress metrics aggregate peak, time above reference, and the integral") {
    ThermalParams tp;
    std::vector<ThermalState> history(3, make_thermal_state(tp));
    history[0].tj_C[0] = 67.0;
    history[1].tj_C[0] = 64.0;
    history[2].tj_C[0] = 69.0;

    const ThermalStress st = stress_metrics(history, 0.1, 65.0);
    CHECK(st.peak_tj_C == 69.0);
    CHECK(st.time_above_ref_s == Approx(0.2).epsilon(1e-12));
    CHECK(st.stress_integral_Ks == Approx((2.0 + 0.0 + 4.0) * 0.1).epsilon(1e-12));

    CHECK(stress_metrics({}, 0.1, 65.0).peak_tj_C == 0.0);
    CHECK(stress_metrics({}, 0.1, 65.0).stress_integral_Ks == 0.0);
}
