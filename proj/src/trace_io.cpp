#include "ascsim/trace_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ascsim/errors.hpp"

namespace ascsim {

namespace {

std::string hex16(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::ofstream open_out(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw SimError("cannot write '" + file.string() + "'");
    return out;
}

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

std::optional<double> parse_optional(const std::string& value, const std::string& where) {
    if (value == "nan") return std::nullopt;
    if (value == "inf") return std::numeric_limits<double>::infinity();
    if (value == "-inf") return -std::numeric_limits<double>::infinity();
    double out = 0.0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ParseError(where + ": '" + value + "' is not a number");
    return out;
}

}  // namespace

std::string format_value(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 8);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_value(const std::optional<double>& v) {
    return v ? format_value(*v) : "nan";
}

void write_trace_csv(const std::filesystem::path& file, const Trace& trace) {
    std::ofstream out = open_out(file);
    out << kTraceCsvHeader << "\n";
    for (const TraceRecord& r : trace) {
        out << format_value(r.t_s) << ',' << format_value(r.v_dc_V);
        for (double i : r.i_phase_A) out << ',' << format_value(i);
        const double tj_max = *std::max_element(r.tj_C.begin(), r.tj_C.end());
        out << ',' << to_string(r.fsm) << ',' << (r.flag ? 1 : 0) << ',' << format_value(tj_max)
            << ',' << format_value(r.i_discharge_A) << "\n";
    }
    if (!out) throw SimError("failed while writing '" + file.string() + "'");
}

void write_metrics(const std::filesystem::path& file, const std::string& id,
                   std::uint64_t fingerprint, const MetricsReport& m) {
    std::ofstream out = open_out(file);
    out << "scenario = " << id << "\n";
    out << "config_fingerprint = " << hex16(fingerprint) << "\n";
    out << "t_detect_s = " << format_value(m.t_detect_s) << "\n";
    out << "t_isolate_s = " << format_value(m.t_isolate_s) << "\n";
    out << "t_discharge_s = " << format_value(m.t_discharge_s) << "\n";
    out << "peak_tj_C = " << format_value(m.peak_tj_C) << "\n";
    out << "thermal_stress_Ks = " << format_value(m.thermal_stress_Ks) << "\n";
    out << "energy_audit_error = " << format_value(m.energy_audit_error) << "\n";
    out << "score_voltage_drop = " << format_value(m.score_voltage_drop) << "\n";
    out << "score_current_flow = " << format_value(m.score_current_flow) << "\n";
    out << "score_temperature_response = " << format_value(m.score_temperature_response) << "\n";
    if (!out) throw SimError("failed while writing '" + file.string() + "'");
}

MetricsFile read_metrics(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ParseError("cannot read metrics file '" + file.string() + "'");

    MetricsFile mf;
    bool have_id = false, have_fp = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = file.string() + ":" + std::to_string(line_no);
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 3);

        if (key == "scenario") {
            mf.id = value;
            have_id = true;
        } else if (key == "config_fingerprint") {
            if (value.size() != 16) throw ParseError(where + ": fingerprint must be 16 hex digits");
            std::uint64_t fp = 0;
            for (char c : value) {
                int d;
                if (c >= '0' && c <= '9')
                    d = c - '0';
                else if (c >= 'a' && c <= 'f')
                    d = c - 'a' + 10;
                else
                    throw ParseError(where + ": fingerprint must be lowercase hex");
                fp = fp << 4 | static_cast<std::uint64_t>(d);
            }
            mf.fingerprint = fp;
            have_fp = true;
        } else if (key == "t_detect_s")
            mf.metrics.t_detect_s = parse_optional(value, where);
        else if (key == "t_isolate_s")
            mf.metrics.t_isolate_s = parse_optional(value, where);
        else if (key == "t_discharge_s")
            mf.metrics.t_discharge_s = parse_optional(value, where);
        else if (key == "peak_tj_C")
            mf.metrics.peak_tj_C = parse_optional(value, where).value_or(0.0);
        else if (key == "thermal_stress_Ks")
            mf.metrics.thermal_stress_Ks = parse_optional(value, where).value_or(0.0);
        else if (key == "energy_audit_error")
            mf.metrics.energy_audit_error = parse_optional(value, where).value_or(0.0);
        else if (key == "score_voltage_drop")
            mf.metrics.score_voltage_drop = parse_optional(value, where);
        else if (key == "score_current_flow")
            mf.metrics.score_current_flow = parse_optional(value, where);
        else if (key == "score_temperature_response")
            mf.metrics.score_temperature_response = parse_optional(value, where);
        else
            throw ParseError(where + ": unknown metrics key '" + key + "'");
    }
    if (!have_id || !have_fp)
        throw ParseError(file.string() + ": missing scenario id or config_fingerprint");
    return mf;
}

void write_summary_csv(const std::filesystem::path& file,
                       const std::vector<CampaignEntry>& entries) {
    std::ofstream out = open_out(file);
    out << "scenario,t_detect_s,t_isolate_s,t_discharge_s,peak_tj_C,thermal_stress_Ks,"
           "energy_audit_error,score_voltage_drop,score_current_flow,"
           "score_temperature_response,error\n";
    for (const CampaignEntry& e : entries) {
        out << csv_safe(e.id) << ',';
        if (e.metrics) {
            const MetricsReport& m = *e.metrics;
            out << format_value(m.t_detect_s) << ',' << format_value(m.t_isolate_s) << ','
                << format_value(m.t_discharge_s) << ',' << format_value(m.peak_tj_C) << ','
                << format_value(m.thermal_stress_Ks) << ',' << format_value(m.energy_audit_error)
                << ',' << format_value(m.score_voltage_drop) << ','
                << format_value(m.score_current_flow) << ','
                << format_value(m.score_temperature_response) << ',';
        } else {
            out << "nan,nan,nan,nan,nan,nan,nan,nan,nan,";
        }
        out << csv_safe(e.error) << "\n";
    }
    if (!out) throw SimError("failed while writing '" + file.string() + "'");
}

}  // namespace ascsim
