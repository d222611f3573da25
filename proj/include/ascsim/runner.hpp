#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ascsim/faults.hpp"
#include "ascsim/plant.hpp"
#include "ascsim/protection.hpp"
#include "ascsim/thermal.hpp"
#include "ascsim/types.hpp"

namespace ascsim {

enum class DriveMode : std::uint8_t { None, Block };

const char* to_string(DriveMode m);

/// Everything a run needs; built from defaults plus scenario-file overrides.
struct ScenarioConfig {
    std::string id = "scenario";

    PlantParams plant;
    ThermalParams thermal;
    std::vector<FaultEvent> faults;
    DetectorConfig detector;
    DischargeConfig discharge;

    bool protection_enabled = true;
    AscPolicy asc_policy = AscPolicy::LowSideAll;
    ProtectionResponse response = ProtectionResponse::Asc;
    double asc_settle_s = 1e-3;

    double dt_s = 0.5e-6;
    double t_end_s = 0.1;
    long trace_decimation = 1;
    DriveMode drive = DriveMode::None;
    double dv_max_step_V = 1.0;

    void validate() const;
};

/// One retained sample. The CSV projection keeps the first 11 columns; the
/// cumulative energy counters exist so a full-resolution trace carries the
/// exact audit integrals between any two records.
struct TraceRecord {
    double t_s = 0.0;
    double v_dc_V = 0.0;
    PhaseArray i_phase_A{};
    FsmPhase fsm = FsmPhase::Normal;
    bool flag = false;
    std::array<double, kDeviceCount> tj_C{};
    double i_discharge_A = 0.0;

    double fault_branch_current_A = 0.0;
    double theta_rad = 0.0;
    double e_dissipated_J = 0.0;    // cumulative since t=0
    double e_source_in_J = 0.0;     // cumulative v_dc*i_source
    double e_emf_absorbed_J = 0.0;  // cumulative sum(e_k*i_k)
};

using Trace = std::vector<TraceRecord>;

/// Timing metrics are absent (not zero) when their trigger never occurred.
struct MetricsReport {
    std::optional<double> t_detect_s;
    std::optional<double> t_isolate_s;
    std::optional<double> t_discharge_s;
    double peak_tj_C = 0.0;
    double thermal_stress_Ks = 0.0;
    double energy_audit_error = 0.0;
    std::optional<double> score_voltage_drop;
    std::optional<double> score_current_flow;
    std::optional<double> score_temperature_response;
};

struct RunResult {
    Trace trace;
    MetricsReport metrics;
};

/// Runs one scenario start to finish. Deterministic: identical config yields
/// bit-identical trace and metrics.
RunResult run(const ScenarioConfig& cfg);

/// Derives the report from a retained trace. Exactly reproduces the
/// streaming metrics of run() when the trace is full resolution
/// (trace_decimation = 1); throws EmptyTrace on an empty trace.
MetricsReport compute_metrics(const Trace& trace, const ScenarioConfig& cfg);

/// Energy-conservation check over a full-resolution trace:
///   |dE_stored - (E_source_in - E_emf_absorbed) + E_dissipated| / E_stored(0)
/// Requires trace_decimation = 1 spacing; throws ValidationError otherwise.
double energy_audit(const Trace& trace, const ScenarioConfig& cfg);

/// baseline / protected, per metric; absent when either side is absent.
struct ImprovementReport {
    std::optional<double> detection_ratio;
    std::optional<double> thermal_stress_ratio;
    std::optional<double> performance_ratio;  // discharge-time ratio
};

ImprovementReport compare(const MetricsReport& baseline, const MetricsReport& protected_run);

struct CampaignEntry {
    std::string id;
    std::optional<MetricsReport> metrics;  // empty on per-scenario failure
    std::string error;                     // failure description, empty on success
    Trace trace;
};

/// Runs every scenario independently (OpenMP across scenarios when
/// threads > 1, plain loop when threads == 1) and returns entries ordered by
/// scenario id. Output is identical regardless of thread count.
std::vector<CampaignEntry> run_campaign(std::vector<ScenarioConfig> cfgs, int threads);

}  // namespace ascsim
