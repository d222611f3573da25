#include "ascsim/scenario_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ascsim/errors.hpp"

namespace ascsim {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::string& where) {
    const std::string v = trim(text);
    double out = 0.0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ParseError(where + ": '" + v + "' is not a number");
    if (!std::isfinite(out)) throw ParseError(where + ": value must be finite");
    return out;
}

long parse_integer(const std::string& text, const std::string& where) {
    const std::string v = trim(text);
    long out = 0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ParseError(where + ": '" + v + "' is not an integer");
    return out;
}

bool parse_bool(const std::string& text, const std::string& where) {
    const std::string v = trim(text);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ParseError(where + ": expected 'true' or 'false', got '" + v + "'");
}

/// `fault = <kind> targets=a[,b] [resistance_mOhm=x] t_start_ms=x [t_end_ms=x]`
FaultEvent parse_fault_line(const std::string& value, const std::string& where) {
    std::istringstream in(value);
    std::string token;
    if (!(in >> token)) throw ParseError(where + ": missing fault kind");
    const auto kind = fault_kind_from_string(token);
    if (!kind) throw ParseError(where + ": unknown fault kind '" + token + "'");

    FaultEvent ev;
    ev.kind = *kind;
    bool have_targets = false;
    bool have_start = false;
    while (in >> token) {
        const std::size_t eq = token.find('=');
        if (eq == std::string::npos)
            throw ParseError(where + ": expected key=value, got '" + token + "'");
        const std::string key = token.substr(0, eq);
        const std::string val = token.substr(eq + 1);
        if (key == "targets") {
            const std::size_t comma = val.find(',');
            if (comma == std::string::npos) {
                ev.targets[0] = static_cast<int>(parse_integer(val, where));
                ev.targets[1] = -1;
            } else {
                ev.targets[0] = static_cast<int>(parse_integer(val.substr(0, comma), where));
                ev.targets[1] = static_cast<int>(parse_integer(val.substr(comma + 1), where));
            }
            have_targets = true;
        } else if (key == "resistance_mOhm") {
            ev.fault_resistance_Ohm = parse_number(val, where) * 1e-3;
        } else if (key == "t_start_ms") {
            ev.t_start_s = parse_number(val, where) * 1e-3;
            have_start = true;
        } else if (key == "t_end_ms") {
            ev.t_end_s = parse_number(val, where) * 1e-3;
        } else {
            throw ParseError(where + ": unknown fault field '" + key + "'");
        }
    }
    if (!have_targets) throw ParseError(where + ": fault line needs targets=");
    if (!have_start) throw ParseError(where + ": fault line needs t_start_ms=");
    return ev;
}

enum class Section { None, Plant, Thermal, Faults, Detector, Discharge, Run };

/// Shortest decimal form that parses back to the same double; keeps
/// serialize -> parse an identity.
std::string num(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void serialize_physical(std::ostream& out, const ScenarioConfig& cfg) {
    const PlantParams& p = cfg.plant;
    out << "[plant]\n";
    out << "capacitance_uF = " << num(p.dc.capacitance_F / 1e-6) << "\n";
    out << "esr_mOhm = " << num(p.dc.esr_Ohm / 1e-3) << "\n";
    out << "bleed_resistance_kOhm = " << num(p.dc.bleed_resistance_Ohm / 1e3) << "\n";
    out << "source_voltage_V = " << num(p.dc.source_voltage_V) << "\n";
    out << "source_resistance_mOhm = " << num(p.dc.source_resistance_Ohm / 1e-3) << "\n";
    out << "r_on_mOhm = " << num(p.device.r_on_Ohm / 1e-3) << "\n";
    out << "diode_drop_V = " << num(p.device.diode_drop_V) << "\n";
    out << "diode_r_mOhm = " << num(p.device.diode_r_Ohm / 1e-3) << "\n";
    out << "machine_resistance_mOhm = " << num(p.machine.resistance_Ohm / 1e-3) << "\n";
    out << "machine_inductance_uH = " << num(p.machine.inductance_H / 1e-6) << "\n";
    out << "bemf_amplitude_V = " << num(p.machine.bemf_amplitude_V) << "\n";
    out << "electrical_speed_rad_s = " << num(p.machine.electrical_speed_rad_s) << "\n";
    out << "v_dc0_V = " << num(p.v_dc0_V) << "\n";
    out << "theta0_rad = " << num(p.theta0_rad) << "\n";
    out << "contactor_closed = " << (p.contactor_closed ? "true" : "false") << "\n";
    out << "current_sanity_bound_A = " << num(p.current_sanity_bound_A) << "\n";
    out << "\n[thermal]\n";
    out << "r_th_K_W = " << num(cfg.thermal.r_th_K_W) << "\n";
    out << "c_th_J_K = " << num(cfg.thermal.c_th_J_K) << "\n";
    out << "t_ambient_C = " << num(cfg.thermal.t_ambient_C) << "\n";
    out << "t_ref_C = " << num(cfg.thermal.t_ref_C) << "\n";
    out << "\n[faults]\n";
    for (const FaultEvent& ev : cfg.faults) {
        out << "fault = " << to_string(ev.kind) << " targets=" << ev.targets[0];
        if (ev.kind == FaultKind::PhaseToPhaseShort) out << "," << ev.targets[1];
        if (ev.kind == FaultKind::PhaseToPhaseShort || ev.kind == FaultKind::PhaseToGroundShort)
            out << " resistance_mOhm=" << num(ev.fault_resistance_Ohm / 1e-3);
        out << " t_start_ms=" << num(ev.t_start_s / 1e-3);
        if (ev.t_end_s) out << " t_end_ms=" << num(*ev.t_end_s / 1e-3);
        out << "\n";
    }
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& id) {
    ScenarioConfig cfg;
    cfg.id = id;

    Section section = Section::None;
    bool sample_period_given = false;
    int line_no = 0;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);

        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(where + ": unterminated section header");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name == "plant")
                section = Section::Plant;
            else if (name == "thermal")
                section = Section::Thermal;
            else if (name == "faults")
                section = Section::Faults;
            else if (name == "detector")
                section = Section::Detector;
            else if (name == "discharge")
                section = Section::Discharge;
            else if (name == "run")
                section = Section::Run;
            else
                throw ParseError(where + ": unknown section [" + name + "]");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(where + ": empty key");

        switch (section) {
            case Section::None:
                throw ParseError(where + ": key outside of any [section]");
            case Section::Plant: {
                PlantParams& p = cfg.plant;
                if (key == "capacitance_uF")
                    p.dc.capacitance_F = parse_number(value, where) * 1e-6;
                else if (key == "esr_mOhm")
                    p.dc.esr_Ohm = parse_number(value, where) * 1e-3;
                else if (key == "bleed_resistance_kOhm")
                    p.dc.bleed_resistance_Ohm = parse_number(value, where) * 1e3;
                else if (key == "source_voltage_V")
                    p.dc.source_voltage_V = parse_number(value, where);
                else if (key == "source_resistance_mOhm")
                    p.dc.source_resistance_Ohm = parse_number(value, where) * 1e-3;
                else if (key == "r_on_mOhm")
                    p.device.r_on_Ohm = parse_number(value, where) * 1e-3;
                else if (key == "diode_drop_V")
                    p.device.diode_drop_V = parse_number(value, where);
                else if (key == "diode_r_mOhm")
                    p.device.diode_r_Ohm = parse_number(value, where) * 1e-3;
                else if (key == "machine_resistance_mOhm")
                    p.machine.resistance_Ohm = parse_number(value, where) * 1e-3;
                else if (key == "machine_inductance_uH")
                    p.machine.inductance_H = parse_number(value, where) * 1e-6;
                else if (key == "bemf_amplitude_V")
                    p.machine.bemf_amplitude_V = parse_number(value, where);
                else if (key == "electrical_speed_rad_s")
                    p.machine.electrical_speed_rad_s = parse_number(value, where);
                else if (key == "v_dc0_V")
                    p.v_dc0_V = parse_number(value, where);
                else if (key == "theta0_rad")
                    p.theta0_rad = parse_number(value, where);
                else if (key == "contactor_closed")
                    p.contactor_closed = parse_bool(value, where);
                else if (key == "current_sanity_bound_A")
                    p.current_sanity_bound_A = parse_number(value, where);
                else
                    throw ParseError(where + ": unknown [plant] key '" + key + "'");
                break;
            }
            case Section::Thermal: {
                if (key == "r_th_K_W")
                    cfg.thermal.r_th_K_W = parse_number(value, where);
                else if (key == "c_th_J_K")
                    cfg.thermal.c_th_J_K = parse_number(value, where);
                else if (key == "t_ambient_C")
                    cfg.thermal.t_ambient_C = parse_number(value, where);
                else if (key == "t_ref_C")
                    cfg.thermal.t_ref_C = parse_number(value, where);
                else
                    throw ParseError(where + ": unknown [thermal] key '" + key + "'");
                break;
            }
            case Section::Faults: {
                if (key != "fault")
                    throw ParseError(where + ": only 'fault =' lines are allowed in [faults]");
                cfg.faults.push_back(parse_fault_line(value, where));
                break;
            }
            case Section::Detector: {
                DetectorConfig& d = cfg.detector;
                if (key == "highpass_cutoff_Hz")
                    d.highpass_cutoff_Hz = parse_number(value, where);
                else if (key == "ripple_threshold_V")
                    d.ripple_threshold_V = parse_number(value, where);
                else if (key == "overcurrent_threshold_A")
                    d.overcurrent_threshold_A = parse_number(value, where);
                else if (key == "confirm_window_us")
                    d.confirm_window_s = parse_number(value, where) * 1e-6;
                else if (key == "sample_period_us") {
                    d.sample_period_s = parse_number(value, where) * 1e-6;
                    sample_period_given = true;
                } else
                    throw ParseError(where + ": unknown [detector] key '" + key + "'");
                break;
            }
            case Section::Discharge: {
                DischargeConfig& d = cfg.discharge;
                if (key == "mode") {
                    if (value == "passive_only")
                        d.mode = DischargeConfig::Mode::PassiveOnly;
                    else if (value == "active_only")
                        d.mode = DischargeConfig::Mode::ActiveOnly;
                    else if (value == "hybrid")
                        d.mode = DischargeConfig::Mode::Hybrid;
                    else
                        throw ParseError(where + ": unknown discharge mode '" + value + "'");
                } else if (key == "v_safe_V")
                    d.v_safe_V = parse_number(value, where);
                else if (key == "p_max_W")
                    d.p_max_W = parse_number(value, where);
                else if (key == "v_floor_V")
                    d.v_floor_V = parse_number(value, where);
                else if (key == "tj_limit_C")
                    d.tj_limit_C = parse_number(value, where);
                else if (key == "tj_margin_K")
                    d.tj_margin_K = parse_number(value, where);
                else
                    throw ParseError(where + ": unknown [discharge] key '" + key + "'");
                break;
            }
            case Section::Run: {
                if (key == "dt_us")
                    cfg.dt_s = parse_number(value, where) * 1e-6;
                else if (key == "t_end_ms")
                    cfg.t_end_s = parse_number(value, where) * 1e-3;
                else if (key == "trace_decimation")
                    cfg.trace_decimation = parse_integer(value, where);
                else if (key == "protection_enabled")
                    cfg.protection_enabled = parse_bool(value, where);
                else if (key == "asc_policy") {
                    if (value == "low_side_all")
                        cfg.asc_policy = AscPolicy::LowSideAll;
                    else if (value == "high_side_all")
                        cfg.asc_policy = AscPolicy::HighSideAll;
                    else
                        throw ParseError(where + ": unknown asc_policy '" + value + "'");
                } else if (key == "response") {
                    if (value == "asc")
                        cfg.response = ProtectionResponse::Asc;
                    else if (value == "open_all")
                        cfg.response = ProtectionResponse::OpenAll;
                    else
                        throw ParseError(where + ": unknown response '" + value + "'");
                } else if (key == "asc_settle_ms")
                    cfg.asc_settle_s = parse_number(value, where) * 1e-3;
                else if (key == "drive") {
                    if (value == "none")
                        cfg.drive = DriveMode::None;
                    else if (value == "block")
                        cfg.drive = DriveMode::Block;
                    else
                        throw ParseError(where + ": unknown drive '" + value + "'");
                } else if (key == "dv_max_step_V")
                    cfg.dv_max_step_V = parse_number(value, where);
                else
                    throw ParseError(where + ": unknown [run] key '" + key + "'");
                break;
            }
        }
    }

    // The detector samples the simulation grid unless told otherwise.
    if (!sample_period_given) cfg.detector.sample_period_s = cfg.dt_s;
    cfg.validate();
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ParseError("cannot read scenario file '" + file.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), file.stem().string());
}

std::string serialize_scenario(const ScenarioConfig& cfg) {
    std::ostringstream out;
    serialize_physical(out, cfg);
    out << "\n[detector]\n";
    out << "highpass_cutoff_Hz = " << num(cfg.detector.highpass_cutoff_Hz) << "\n";
    out << "ripple_threshold_V = " << num(cfg.detector.ripple_threshold_V) << "\n";
    out << "overcurrent_threshold_A = " << num(cfg.detector.overcurrent_threshold_A) << "\n";
    out << "confirm_window_us = " << num(cfg.detector.confirm_window_s / 1e-6) << "\n";
    out << "sample_period_us = " << num(cfg.detector.sample_period_s / 1e-6) << "\n";
    out << "\n[discharge]\n";
    out << "mode = " << to_string(cfg.discharge.mode) << "\n";
    out << "v_safe_V = " << num(cfg.discharge.v_safe_V) << "\n";
    out << "p_max_W = " << num(cfg.discharge.p_max_W) << "\n";
    out << "v_floor_V = " << num(cfg.discharge.v_floor_V) << "\n";
    out << "tj_limit_C = " << num(cfg.discharge.tj_limit_C) << "\n";
    out << "tj_margin_K = " << num(cfg.discharge.tj_margin_K) << "\n";
    out << "\n[run]\n";
    out << "dt_us = " << num(cfg.dt_s / 1e-6) << "\n";
    out << "t_end_ms = " << num(cfg.t_end_s / 1e-3) << "\n";
    out << "trace_decimation = " << cfg.trace_decimation << "\n";
    out << "protection_enabled = " << (cfg.protection_enabled ? "true" : "false") << "\n";
    out << "asc_policy = " << to_string(cfg.asc_policy) << "\n";
    out << "response = " << to_string(cfg.response) << "\n";
    out << "asc_settle_ms = " << num(cfg.asc_settle_s / 1e-3) << "\n";
    out << "drive = " << to_string(cfg.drive) << "\n";
    out << "dv_max_step_V = " << num(cfg.dv_max_step_V) << "\n";
    return out.str();
}

std::uint64_t config_fingerprint(const ScenarioConfig& cfg) {
    std::ostringstream out;
    serialize_physical(out, cfg);
    const std::string text = out.str();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) h = (h ^ c) * 1099511628211ull;
    return h;
}

}  // namespace ascsim
