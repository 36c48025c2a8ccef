#pragma once

#include "talbot/app/config.hpp"

#include <filesystem>
#include <ostream>
#include <string>

namespace talbot::app
{

enum class Mode
{
  quantum,
  classical,
  both
};

Mode mode_from_string(const std::string& text);

struct CommandContext
{
  RunConfig config;
  std::filesystem::path out = "out";
  Mode mode = Mode::both;
  /// stack directory for analyze, tilt and drift
  std::filesystem::path input;
  std::ostream* log = nullptr;
};

/// Applies a seed to every seeded stage of the configuration.
void set_seed(RunConfig& config, std::uint64_t seed);

/// visibility_vs_height.csv and .svg: velocity-averaged quantum curve, its
/// scattering-corrected version, the classical shadow prediction and an
/// optional measured overlay.
void cmd_visibility_curve(const CommandContext& ctx);

/// stack/ (stripe images, reference, dark, stack.json) and
/// deposition_profile.csv with the injected visibility per height.
void cmd_synthesize(const CommandContext& ctx);

/// visibility_curve.csv, fringes.csv, fringes.svg and analysis_report.txt.
void cmd_analyze(const CommandContext& ctx);

/// tilt.csv: unwrapped phase per height, gradient and inferred tilt.
void cmd_tilt(const CommandContext& ctx);

/// drift.csv: block phases, drift rate and displacement bound.
void cmd_drift(const CommandContext& ctx);

namespace exit_code
{
constexpr int ok = 0;
constexpr int config_error = 2;
constexpr int data_error = 3;
constexpr int numerical_failure = 4;
} // namespace exit_code

/// Full command line front end; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace talbot::app
