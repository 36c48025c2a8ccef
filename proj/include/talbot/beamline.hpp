#pragma once

#include "talbot/parallel.hpp"
#include "talbot/physics.hpp"

#include <cstdint>
#include <span>
#include <vector>

/// Gravitational velocity selection: free-fall parabolas through the oven slit
/// and the selection slit map the longitudinal velocity onto the arrival
/// height at the detector.
namespace talbot::beamline
{

struct BeamlineGeometry
{
  double oven_slit_width_m = 200e-6;
  double selection_slit_width_m = 150e-6;
  double selection_slit_z_m = 1.2;
  double detector_z_m = 2.9;
  double gravity = 9.81;
  /// added to every fall height, m
  double height_reference_offset_m = 0.0;
  /// vertical slit centres (upwards positive), m
  double oven_slit_center_m = 0.0;
  double selection_slit_center_m = 0.0;

  /// g z_d (z_d - z_s) / 2, in m^3/s^2
  double fall_constant() const;
  void validate() const;
};

enum class Distribution
{
  effusive_flux,
  tabulated
};

struct SourceModel
{
  double temperature_k = 693.0;
  double mass_amu = 614.0;
  Distribution distribution = Distribution::effusive_flux;
  /// for Distribution::tabulated: speeds (strictly increasing) and relative flux
  std::vector<double> table_velocities;
  std::vector<double> table_weights;

  /// sqrt(2 k T / m)
  double thermal_velocity() const;
  /// relative flux density at speed v (not normalized)
  double density(double v) const;
  void validate() const;
};

/// Cumulative distribution of a SourceModel on a fine table.
class VelocityCdf
{
public:
  explicit VelocityCdf(const SourceModel& source, int points = 8192);

  double cdf(double v) const;
  double quantile(double u) const;
  double max_velocity() const { return mVelocities.back(); }

private:
  std::vector<double> mVelocities;
  std::vector<double> mCumulative;
};

struct VelocityDistribution
{
  /// bin centres, m/s
  std::vector<double> velocities;
  /// normalized to unit sum
  std::vector<double> weights;
  double bin_width = 0.0;
  double mean = 0.0;
  /// FWHM / mean
  double relative_spread = 0.0;
  /// delete-one-stream jackknife errors
  double mean_error = 0.0;
  double relative_spread_error = 0.0;
  std::uint64_t n_samples = 0;
  /// samples with a non-empty landing interval
  std::uint64_t accepted = 0;
  /// estimated fraction of molecules landing in the window
  double landing_fraction = 0.0;
};

struct DistributionOptions
{
  std::uint64_t n_samples = 200000;
  std::uint64_t seed = 1;
  int bins = 60;
  /// when positive, bins lie on the global grid [k w, (k+1) w) instead of
  /// spanning the reachable range in `bins` steps
  double bin_width_mps = 0.0;
  Execution exec = Execution::parallel;
};

enum class AveragingMode
{
  average_visibility,
  average_signal
};

/// Fall below the reference of the central ray through both slit centres,
///   h(v) = g z_d (z_d - z_s) / (2 v^2) + offset.
double fall_height(double velocity, const BeamlineGeometry& geom);

/// Exact inverse of fall_height.
double velocity_from_height(double height_m, const BeamlineGeometry& geom);

/// Arrival height of the parabola through oven position y1 and selection slit
/// position y2 (both upwards, absolute).
double parabola_height(double velocity, double y1, double y2, const BeamlineGeometry& geom);

/// Monte Carlo over oven position x selection position x source speed for
/// molecules landing within `window` around h. For each slit pair the speeds
/// that land in the window form one interval; the speed is drawn inside it and
/// the sample weighted by the source probability of that interval, which has
/// the same expectation as accept/reject with far less noise.
VelocityDistribution velocity_distribution_at_height(double height_m, double window_m,
                                                     const BeamlineGeometry& geom, const SourceModel& source,
                                                     const DistributionOptions& options = {});

/// Relative flux landing within `window` around h (fraction of all molecules
/// passing both slits), by quadrature over both slits.
double deposition_density(double height_m, double window_m, const BeamlineGeometry& geom,
                          const SourceModel& source);

/// Height of maximum detected flux.
double most_probable_height(double window_m, const BeamlineGeometry& geom, const SourceModel& source);

/// Visibility averaged over a velocity distribution: either the weighted mean
/// of V(v), or the visibility of the weighted mean signal.
physics::Visibility averaged_visibility(const VelocityDistribution& distribution,
                                        const physics::InterferometerConfig& config, AveragingMode mode,
                                        Execution exec = Execution::parallel,
                                        const physics::TruncationOptions& options = {});

/// Weighted average of precomputed signals in the given mode; weights need
/// not be normalized.
physics::Visibility average_signals(std::span<const physics::FringeSignal* const> signals,
                                    std::span<const double> weights, AveragingMode mode, double period_nm,
                                    double imaginary_tolerance = 1e-9);

struct ScatteringModel
{
  double fraction = 0.2;
  double detector_extent_m = 3e-3;
  double window_m = 33e-6;
  /// window count at the most probable height; 0 uses the largest given count
  double reference_count = 0.0;
};

/// V' = V N / (N + rho_bg window) with rho_bg = fraction N_mp / extent.
std::vector<double> scattering_correction(std::span<const double> visibility, std::span<const double> deposition,
                                          const ScatteringModel& model);

struct TheoryOptions
{
  double window_m = 33e-6;
  AveragingMode mode = AveragingMode::average_visibility;
  DistributionOptions distribution{200000, 1, 60, 1.0, Execution::parallel};
  physics::TruncationOptions truncation;
};

struct TheoryPoint
{
  double height_m = 0.0;
  double mean_velocity = 0.0;
  double relative_spread = 0.0;
  /// deposition_density at this height
  double deposition = 0.0;
  physics::Visibility visibility;
};

/// Velocity-averaged quantum visibility at each height. Fringe signals are
/// shared between heights through the global velocity bin grid.
std::vector<TheoryPoint> theory_curve(std::span<const double> heights_m, const physics::InterferometerConfig& config,
                                      const BeamlineGeometry& geom, const SourceModel& source,
                                      const TheoryOptions& options = {});

} // namespace talbot::beamline
