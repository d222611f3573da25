// Times the campaign axis serial vs parallel over one scenario directory and
// verifies both orderings produce identical results.
//
//   bench_campaign <scenario-dir> [jobs]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ascsim/runner.hpp"
#include "ascsim/scenario_io.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

bool same(double a, double b) { return a == b; }
bool same(const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || *a == *b);
}

bool identical(const ascsim::CampaignEntry& a, const ascsim::CampaignEntry& b) {
    if (a.id != b.id || a.error != b.error) return false;
    if (a.metrics.has_value() != b.metrics.has_value()) return false;
    if (a.metrics) {
        const ascsim::MetricsReport& x = *a.metrics;
        const ascsim::MetricsReport& y = *b.metrics;
        if (!same(x.t_detect_s, y.t_detect_s) || !same(x.t_isolate_s, y.t_isolate_s) ||
            !same(x.t_discharge_s, y.t_discharge_s) || !same(x.peak_tj_C, y.peak_tj_C) ||
            !same(x.thermal_stress_Ks, y.thermal_stress_Ks) ||
            !same(x.energy_audit_error, y.energy_audit_error) ||
            !same(x.score_voltage_drop, y.score_voltage_drop) ||
            !same(x.score_current_flow, y.score_current_flow) ||
            !same(x.score_temperature_response, y.score_temperature_response))
            return false;
    }
    if (a.trace.size() != b.trace.size()) return false;
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        const ascsim::TraceRecord& x = a.trace[i];
        const ascsim::TraceRecord& y = b.trace[i];
        if (!same(x.t_s, y.t_s) || !same(x.v_dc_V, y.v_dc_V) || x.fsm != y.fsm ||
            x.flag != y.flag || !same(x.i_discharge_A, y.i_discharge_A) ||
            !same(x.fault_branch_current_A, y.fault_branch_current_A) ||
            !same(x.e_dissipated_J, y.e_dissipated_J))
            return false;
        for (int k = 0; k < ascsim::kPhases; ++k)
            if (!same(x.i_phase_A[k], y.i_phase_A[k])) return false;
        for (int d = 0; d < ascsim::kDeviceCount; ++d)
            if (!same(x.tj_C[d], y.tj_C[d])) return false;
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2 || argc > 3) {
        std::cerr << "usage: bench_campaign <scenario-dir> [jobs]\n";
        return 2;
    }
    int jobs = 0;
#ifdef _OPENMP
    jobs = omp_get_max_threads();
#else
    jobs = 2;
#endif
    if (argc == 3) jobs = std::atoi(argv[2]);
    if (jobs < 2) jobs = 2;

    std::vector<ascsim::ScenarioConfig> cfgs;
    try {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(argv[1]))
            if (entry.is_regular_file() && entry.path().extension() == ".scn")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) cfgs.push_back(ascsim::load_scenario(f));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (cfgs.empty()) {
        std::cerr << "error: no .scn files in '" << argv[1] << "'\n";
        return 2;
    }
    std::cout << "scenarios = " << cfgs.size() << "\n";

    const auto t0 = Clock::now();
    const auto serial = ascsim::run_campaign(cfgs, 1);
    const auto t1 = Clock::now();
    const auto parallel = ascsim::run_campaign(cfgs, jobs);
    const auto t2 = Clock::now();

    const double serial_s = std::chrono::duration<double>(t1 - t0).count();
    const double parallel_s = std::chrono::duration<double>(t2 - t1).count();
    std::cout << "serial_s = " << serial_s << "\n";
    std::cout << "parallel_s = " << parallel_s << " (jobs = " << jobs << ")\n";
    std::cout << "speedup = " << (parallel_s > 0 ? serial_s / parallel_s : 0.0) << "\n";
#ifndef _OPENMP
    std::cout << "note: built without OpenMP, both passes ran serially\n";
#endif

    if (serial.size() != parallel.size()) {
        std::cout << "identical = no\n";
        return 1;
    }
    for (std::size_t i = 0; i < serial.size(); ++i) {
        if (!identical(serial[i], parallel[i])) {
            std::cout << "identical = no (" << serial[i].id << ")\n";
            return 1;
        }
    }
    std::cout << "identical = yes\n";
    return 0;
}
