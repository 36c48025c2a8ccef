#pragma once

#include "talbot/parallel.hpp"
#include "talbot/physics.hpp"

#include <cstdint>
#include <span>
#include <vector>

/// Classical Moire baseline: straight ballistic rays through the three
/// gratings with a single van der Waals impulse at the second grating.
namespace talbot::classical
{

struct RaySample
{
  /// transverse positions at G1, G2 and the G3 plane, m
  double x1 = 0.0;
  double x2 = 0.0;
  double x3 = 0.0;
  /// transverse velocity before and after the G2 kick, m/s
  double vx_in = 0.0;
  double vx_out = 0.0;
  /// longitudinal velocity, m/s
  double vz = 0.0;
};

struct MoireOptions
{
  std::uint64_t n_samples = 1000000;
  std::uint64_t seed = 1;
  int scan_points = 40;
  int histogram_bins = 4000;
  /// half width of the sampled angular spread in units of d / L
  double acceptance_periods = 3.0;
  Execution exec = Execution::parallel;
};

struct McResult
{
  double velocity = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
  /// rays passing G1 and G2 (the G3 mask is applied per scan position)
  std::uint64_t transmitted = 0;
  /// arrival positions at the G3 plane modulo d
  std::vector<std::uint64_t> histogram;
  std::vector<double> scan_positions_nm;
  /// rays passing G3 at each scan position
  std::vector<std::uint64_t> scan_counts;
  /// (max - min) / (max + min) over the scan
  double visibility = 0.0;
  /// one-sigma multinomial error of the max and min counts
  double binomial_error = 0.0;
  /// reported one-sigma error: the larger of binomial_error and a
  /// delete-one-stream jackknife, which also covers the max/min selection
  double statistical_error = 0.0;
};

/// Transverse velocity change of a molecule crossing the slit at x,
///   dv = -(L_g / (m v)) dV/dx,  V = -C3 [(a/2 - x)^-3 + (a/2 + x)^-3].
double vdw_kick(double x, const physics::GratingSpec& grating, const physics::MoleculeSpecies& molecule,
                double velocity);

/// Traces one ray from G1 position x0 at angle theta. Returns false when it is
/// stopped at G2 (bar or absorbed wall margin).
bool trace_ray(const physics::InterferometerConfig& config, double velocity, double x0, double theta,
               RaySample& ray);

/// Monte Carlo shadow signal. Rays start uniformly over one G1 slit with
/// angles uniform over +-acceptance_periods * d / L, which covers a whole
/// number of G2 periods. Samples are split over kMonteCarloStreams streams
/// seeded from options.seed, so serial and parallel runs agree bit for bit.
McResult moire_signal(const physics::InterferometerConfig& config, double velocity,
                      const MoireOptions& options = {});

/// moire_signal at each speed; point i uses seed mix_seed(seed + i).
std::vector<McResult> classical_visibility_curve(const physics::InterferometerConfig& config,
                                                 std::span<const double> velocities,
                                                 const MoireOptions& options = {});

} // namespace talbot::classical
