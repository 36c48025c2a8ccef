#pragma once

#include "talbot/beamline.hpp"
#include "talbot/classical.hpp"
#include "talbot/physics.hpp"
#include "talbot/synthesis.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace talbot::app
{

struct ClassicalSettings
{
  std::uint64_t samples = 200000;
  int scan_points = 40;
};

struct AnalysisSettings
{
  double heights_min_um = 300.0;
  double heights_max_um = 1700.0;
  int n_heights = 43;
  double rect_width_um = 100.0;
  double rect_height_um = 33.0;
  int drift_blocks = 3;
  /// optional measured VisibilityCurve CSV overlaid by visibility-curve
  std::string measured_csv;
};

/// Everything a run depends on. Defaults reproduce the reference apparatus (991 nm gratings, 0.38 m spacing, TPP).
struct RunConfig
{
  physics::InterferometerConfig interferometer;
  physics::TruncationOptions truncation;
  beamline::BeamlineGeometry geometry;
  beamline::SourceModel source;
  beamline::ScatteringModel scattering;
  beamline::TheoryOptions theory;
  ClassicalSettings classical;
  imaging::SynthesisOptions synthesis;
  imaging::ImageFormat image_format = imaging::ImageFormat::tiff;
  AnalysisSettings analysis;
  std::uint64_t seed = 1;

  /// evenly spaced analysis heights
  std::vector<double> analysis_heights_um() const;
};

/// Parses the sectioned key = value format:
///
///   seed = 7
///   [gratings]
///   period_nm = 991.0    # comment
///   [imaging]
///   format = "png"
///
/// Unknown sections or keys, malformed lines and out-of-range values raise
/// ConfigError with the line number.
RunConfig parse_config(const std::string& text);

RunConfig load_config(const std::filesystem::path& path);

/// Checks cross-field consistency; ConfigError on failure.
void validate(const RunConfig& config);

/// Resolved configuration, one `section.key = value` per line in fixed order.
std::string canonical_text(const RunConfig& config);

/// FNV-1a 64 of canonical_text, as 16 hex digits.
std::string config_hash(const RunConfig& config);

} // namespace talbot::app
