#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ascsim/runner.hpp"

namespace ascsim {

/// Locale-independent scientific form with 9 significant digits; absent
/// values print as "nan". Every number in every output file goes through
/// this so re-runs are byte-identical.
std::string format_value(double v);
std::string format_value(const std::optional<double>& v);

inline constexpr const char* kTraceCsvHeader =
    "t_s,v_dc_V,i0_A,i1_A,i2_A,i3_A,i4_A,fsm,flag,tj_max_C,i_dis_A";

void write_trace_csv(const std::filesystem::path& file, const Trace& trace);

/// Flat key = value metrics file, one line per field plus the scenario id
/// and the config fingerprint used by compare().
void write_metrics(const std::filesystem::path& file,
                   const std::string& id,
                   std::uint64_t fingerprint,
                   const MetricsReport& m);

struct MetricsFile {
    std::string id;
    std::uint64_t fingerprint = 0;
    MetricsReport metrics;
};

MetricsFile read_metrics(const std::filesystem::path& file);

/// Campaign roll-up, one row per scenario ordered by id.
void write_summary_csv(const std::filesystem::path& file,
                       const std::vector<CampaignEntry>& entries);

}  // namespace ascsim
