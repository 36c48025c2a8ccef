#pragma once

#include "talbot/parallel.hpp"
#include "talbot/physics.hpp"

#include <vector>

/// Independent numerical references used only by the test suites.
namespace talbot::oracles
{

struct FresnelOptions
{
  /// G2 slits fully included on each side of the stationary point, in periods
  double flat_periods = 60.0;
  /// cos^2 taper length beyond the flat region, in periods
  double taper_periods = 20.0;
  /// largest quadrature panel, nm
  double max_panel_nm = 6.0;
  /// largest phase change (rad) of either the chirp or the wall phase per panel
  double max_phase_step = 1.5;
  /// samples of |F(s)|^2 over its 2d period
  int s_points = 1024;
  /// third-grating scan positions over one period
  int scan_points = 64;
  Execution exec = Execution::parallel;
};

struct OracleSignal
{
  std::vector<double> positions_nm;
  std::vector<double> values;

  double visibility() const;
};

/// One-dimensional Fresnel propagation through the three gratings: every point
/// of a G1 slit is an incoherent source, its spherical wave is propagated over
/// L to G2 (complex transmission including the wall phase), over L again, and
/// the resulting intensity is integrated through the shifted G3 mask.
OracleSignal fresnel_fringe_signal(const physics::InterferometerConfig& config, double velocity,
                                   const FresnelOptions& options = {});

/// Geometric shadow (ballistic, no deflection) through three binary gratings:
///   S(x_s) ~ \int\int T1(x0) T2(x1) T3(2 x1 - x0 - x_s) dx0 dx1,
/// evaluated on a uniform grid of `grid` points per period.
OracleSignal moire_shadow_signal(const physics::InterferometerConfig& config, int scan_points, int grid = 4000);

} // namespace talbot::oracles
