#include "talbot/classical.hpp"

#include "talbot/constants.hpp"
#include "talbot/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace talbot::classical
{

using physics::GratingSpec;
using physics::InterferometerConfig;
using physics::MoleculeSpecies;

namespace
{

/// Position modulo d, in [-d/2, d/2).
double centred(double x, double d)
{
  return x - d * std::floor(x / d + 0.5);
}

/// Ray through G2 given the open half width of its slits.
bool trace_with_edge(const InterferometerConfig& config, double velocity, double edge, double x0, double theta,
                     RaySample& ray)
{
  const double d = config.g2.period_m();
  const double L = config.separation_m;
  ray.vz = velocity;
  ray.x1 = x0;
  ray.vx_in = theta * velocity;
  ray.x2 = x0 + L * theta;
  const double local = centred(ray.x2, d);
  if (!(std::abs(local) < edge))
    return false;
  ray.vx_out = ray.vx_in + vdw_kick(local, config.g2, config.molecule, velocity);
  ray.x3 = ray.x2 + L * ray.vx_out / velocity;
  return true;
}

struct StreamTally
{
  std::uint64_t transmitted = 0;
  std::vector<std::uint64_t> histogram;
  std::vector<std::uint64_t> scan;
};

double scan_visibility(const std::vector<std::uint64_t>& counts)
{
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  const double n_hi = static_cast<double>(*hi);
  const double n_lo = static_cast<double>(*lo);
  return n_hi + n_lo > 0.0 ? (n_hi - n_lo) / (n_hi + n_lo) : 0.0;
}

/// Multinomial counts out of `total` rays, propagated through (max - min) / (max + min).
double binomial_error(const std::vector<std::uint64_t>& counts, std::uint64_t transmitted)
{
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  const double n_hi = static_cast<double>(*hi);
  const double n_lo = static_cast<double>(*lo);
  const double total = static_cast<double>(transmitted);
  const double sum2 = (n_hi + n_lo) * (n_hi + n_lo);
  const double d_hi = 2.0 * n_lo / sum2;
  const double d_lo = -2.0 * n_hi / sum2;
  const double var = d_hi * d_hi * n_hi * (1.0 - n_hi / total) + d_lo * d_lo * n_lo * (1.0 - n_lo / total) -
                     2.0 * d_hi * d_lo * n_hi * n_lo / total;
  return std::sqrt(var);
}

} // namespace

double vdw_kick(double x, const GratingSpec& grating, const MoleculeSpecies& molecule, double velocity)
{
  if (!(velocity > 0.0))
    throw DomainError("velocity must be positive");
  const double half = 0.5 * grating.slit_width_m();
  if (!(std::abs(x) < half))
    throw DomainError("position outside the open slit");
  if (molecule.c3 == 0.0)
    return 0.0;
  // -dV/dx = 3 C3 [(a/2 - x)^-4 - (a/2 + x)^-4]
  const double force = 3.0 * molecule.c3 * (std::pow(half - x, -4) - std::pow(half + x, -4));
  return grating.thickness_m() * force / (molecule.mass_kg() * velocity);
}

bool trace_ray(const InterferometerConfig& config, double velocity, double x0, double theta, RaySample& ray)
{
  const double edge = physics::open_half_width(config.g2, config.molecule, velocity, config.phase_cap);
  return trace_with_edge(config, velocity, edge, x0, theta, ray);
}

McResult moire_signal(const InterferometerConfig& config, double velocity, const MoireOptions& options)
{
  config.validate();
  if (!(velocity > 0.0))
    throw DomainError("velocity must be positive");
  if (options.n_samples == 0 || options.scan_points < 2 || options.histogram_bins < 1)
    throw DomainError("Monte Carlo needs samples, >= 2 scan points and >= 1 bin");

  const double d = config.g2.period_m();
  const double L = config.separation_m;
  const auto& mol = config.molecule;
  const double w1 = physics::open_half_width(config.g1, mol, velocity, config.phase_cap);
  const double w2 = physics::open_half_width(config.g2, mol, velocity, config.phase_cap);
  const double w3 = physics::open_half_width(config.g3, mol, velocity, config.phase_cap);
  const double theta_max = options.acceptance_periods * d / L;
  const int bins = options.histogram_bins;
  const int scans = options.scan_points;

  std::vector<StreamTally> tallies(kMonteCarloStreams);
  parallel_for(kMonteCarloStreams, options.exec, [&](std::size_t s) {
    auto& t = tallies[s];
    t.histogram.assign(bins, 0);
    t.scan.assign(scans, 0);
    const std::uint64_t count =
        options.n_samples / kMonteCarloStreams + (s < options.n_samples % kMonteCarloStreams ? 1 : 0);
    if (w1 <= 0.0 || w2 <= 0.0)
      return;
    std::mt19937_64 rng(stream_seed(options.seed, s));
    std::uniform_real_distribution<double> position(-w1, w1);
    std::uniform_real_distribution<double> angle(-theta_max, theta_max);
    RaySample ray;
    for (std::uint64_t i = 0; i < count; ++i)
    {
      const double x0 = position(rng);
      const double theta = angle(rng);
      if (!trace_with_edge(config, velocity, w2, x0, theta, ray))
        continue;
      ++t.transmitted;
      const double phase = ray.x3 / d - std::floor(ray.x3 / d);
      t.histogram[std::min(bins - 1, static_cast<int>(phase * bins))] += 1;
      for (int k = 0; k < scans; ++k)
        if (std::abs(centred(ray.x3 - d * k / scans, d)) < w3)
          t.scan[k] += 1;
    }
  });

  McResult out;
  out.velocity = velocity;
  out.n_samples = options.n_samples;
  out.seed = options.seed;
  out.histogram.assign(bins, 0);
  out.scan_counts.assign(scans, 0);
  for (const auto& t : tallies)
  {
    out.transmitted += t.transmitted;
    for (int b = 0; b < bins; ++b)
      out.histogram[b] += t.histogram[b];
    for (int k = 0; k < scans; ++k)
      out.scan_counts[k] += t.scan[k];
  }
  if (out.transmitted == 0)
    throw DomainError("no Monte Carlo ray passed the first two gratings");
  for (int k = 0; k < scans; ++k)
    out.scan_positions_nm.push_back(1e9 * d * k / scans);

  if (*std::max_element(out.scan_counts.begin(), out.scan_counts.end()) == 0)
    throw DomainError("no Monte Carlo ray passed the third grating");
  out.visibility = scan_visibility(out.scan_counts);
  out.binomial_error = binomial_error(out.scan_counts, out.transmitted);
  std::vector<std::uint64_t> rest(scans);
  std::vector<double> replicas;
  for (const auto& t : tallies)
  {
    for (int k = 0; k < scans; ++k)
      rest[k] = out.scan_counts[k] - t.scan[k];
    replicas.push_back(scan_visibility(rest));
  }
  const double g = static_cast<double>(replicas.size());
  const double mean = std::accumulate(replicas.begin(), replicas.end(), 0.0) / g;
  double var = 0.0;
  for (double r : replicas)
    var += (r - mean) * (r - mean);
  out.statistical_error = std::max(out.binomial_error, std::sqrt((g - 1.0) / g * var));
  return out;
}

std::vector<McResult> classical_visibility_curve(const InterferometerConfig& config,
                                                 std::span<const double> velocities,
                                                 const MoireOptions& options)
{
  std::vector<McResult> out;
  out.reserve(velocities.size());
  for (std::size_t i = 0; i < velocities.size(); ++i)
  {
    auto point = options;
    point.seed = mix_seed(options.seed + i);
    out.push_back(moire_signal(config, velocities[i], point));
  }
  return out;
}

} // namespace talbot::classical
