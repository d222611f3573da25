#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ascsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSimulationError = 1;
inline constexpr int kExitConfigError = 2;

/// `asc-sim run <scenario.scn> -o <dir>`: writes trace.csv, metrics.txt and
/// the resolved scenario snapshot into <dir>.
int cmd_run(const std::filesystem::path& scenario,
            const std::filesystem::path& out_dir,
            std::ostream& out,
            std::ostream& err);

/// `asc-sim campaign <dir> -o <dir> [-j N]`: every *.scn in <dir>, one output
/// subdirectory per scenario plus summary.csv. A scenario failure is reported
/// in its summary row without aborting the rest.
int cmd_campaign(const std::filesystem::path& scenario_dir,
                 const std::filesystem::path& out_dir,
                 int jobs,
                 std::ostream& out,
                 std::ostream& err);

/// `asc-sim compare <baseline-metrics> <protected-metrics>`: improvement
/// ratios to stdout.
int cmd_compare(const std::filesystem::path& baseline,
                const std::filesystem::path& protected_run,
                std::ostream& out,
                std::ostream& err);

/// `asc-sim validate`: built-in oracle suite (analytic RC decay, thermal
/// step response, shoot-through magnitude, detector window, energy audit).
int cmd_validate(std::ostream& out, std::ostream& err);

/// Full argv dispatch used by main(); returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ascsim::cli
