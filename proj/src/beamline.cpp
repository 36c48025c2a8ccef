#include "talbot/beamline.hpp"

#include "talbot/constants.hpp"
#include "talbot/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace talbot::beamline
{

namespace
{

struct Acceptance
{
  double c_min = 0.0;
  double c_max = 0.0;
};

/// Range of the height shift c(y1, y2) = h - K / v^2 over both slits.
Acceptance shift_range(const BeamlineGeometry& geom)
{
  Acceptance a{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (double s1 : {-0.5, 0.5})
    for (double s2 : {-0.5, 0.5})
    {
      const double y1 = geom.oven_slit_center_m + s1 * geom.oven_slit_width_m;
      const double y2 = geom.selection_slit_center_m + s2 * geom.selection_slit_width_m;
      const double c = parabola_height(std::numeric_limits<double>::infinity(), y1, y2, geom);
      a.c_min = std::min(a.c_min, c);
      a.c_max = std::max(a.c_max, c);
    }
  return a;
}

/// Speeds whose parabola from height shift c lands in [lo, hi].
std::pair<double, double> speed_interval(double lo, double hi, double c, double K, double v_cap)
{
  const double upper = lo - c > 0.0 ? std::sqrt(K / (lo - c)) : v_cap;
  const double lower = hi - c > 0.0 ? std::sqrt(K / (hi - c)) : v_cap;
  return {std::min(lower, v_cap), std::min(upper, v_cap)};
}

struct StreamTally
{
  std::uint64_t accepted = 0;
  double weight = 0.0;
  double sum_v = 0.0;
  std::vector<double> counts;
};

struct Shape
{
  double mean = 0.0;
  double relative_spread = 0.0;
};

Shape shape_of(const std::vector<double>& counts, double first_centre, double width, double mean)
{
  Shape s;
  s.mean = mean;
  const auto peak = std::max_element(counts.begin(), counts.end());
  if (*peak <= 0.0)
    return s;
  const double half = 0.5 * *peak;
  const auto centre = [&](std::ptrdiff_t i) { return first_centre + static_cast<double>(i) * width; };
  const std::ptrdiff_t p = peak - counts.begin();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(counts.size());
  // half-maximum crossings by linear interpolation; the histogram edge counts as zero
  std::ptrdiff_t i = p;
  while (i > 0 && counts[i - 1] > half)
    --i;
  const double below = i > 0 ? counts[i - 1] : 0.0;
  const double left = centre(i - 1) + width * (half - below) / (counts[i] - below);
  std::ptrdiff_t j = p;
  while (j + 1 < n && counts[j + 1] > half)
    ++j;
  const double after = j + 1 < n ? counts[j + 1] : 0.0;
  const double right = centre(j) + width * (counts[j] - half) / (counts[j] - after);
  s.relative_spread = (right - left) / mean;
  return s;
}

} // namespace

double BeamlineGeometry::fall_constant() const
{
  return 0.5 * gravity * detector_z_m * (detector_z_m - selection_slit_z_m);
}

void BeamlineGeometry::validate() const
{
  if (!(selection_slit_z_m > 0.0 && selection_slit_z_m < detector_z_m))
    throw DomainError("beamline requires 0 < selection slit z < detector z");
  if (!(oven_slit_width_m >= 0.0 && selection_slit_width_m >= 0.0))
    throw DomainError("beamline slit widths must be non-negative");
  if (!(gravity > 0.0))
    throw DomainError("gravity must be positive");
}

double SourceModel::thermal_velocity() const
{
  return std::sqrt(2.0 * constants::boltzmann * temperature_k / (mass_amu * constants::amu));
}

double SourceModel::density(double v) const
{
  if (v <= 0.0)
    return 0.0;
  if (distribution == Distribution::effusive_flux)
  {
    const double u = v / thermal_velocity();
    return u * u * u * std::exp(-u * u);
  }
  const auto& x = table_velocities;
  if (v < x.front() || v > x.back())
    return 0.0;
  const auto it = std::upper_bound(x.begin(), x.end(), v);
  if (it == x.end())
    return table_weights.back();
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  const double t = (v - x[k - 1]) / (x[k] - x[k - 1]);
  return (1.0 - t) * table_weights[k - 1] + t * table_weights[k];
}

void SourceModel::validate() const
{
  if (!(temperature_k > 0.0))
    throw DomainError("source temperature must be positive");
  if (!(mass_amu > 0.0))
    throw DomainError("source mass must be positive");
  if (distribution == Distribution::tabulated)
  {
    if (table_velocities.size() < 2 || table_velocities.size() != table_weights.size())
      throw DomainError("tabulated source needs >= 2 matching speed/weight entries");
    if (table_velocities.front() < 0.0)
      throw DomainError("tabulated speeds must be non-negative");
    for (std::size_t i = 1; i < table_velocities.size(); ++i)
      if (!(table_velocities[i] > table_velocities[i - 1]))
        throw DomainError("tabulated speeds must increase strictly");
    double total = 0.0;
    for (double w : table_weights)
    {
      if (!(w >= 0.0))
        throw DomainError("tabulated weights must be non-negative");
      total += w;
    }
    if (!(total > 0.0))
      throw DomainError("tabulated distribution is not normalizable");
  }
}

VelocityCdf::VelocityCdf(const SourceModel& source, int points)
{
  source.validate();
  const double lo = source.distribution == Distribution::tabulated ? source.table_velocities.front() : 0.0;
  const double hi = source.distribution == Distribution::tabulated ? source.table_velocities.back()
                                                                    : 8.0 * source.thermal_velocity();
  mVelocities.resize(points);
  mCumulative.resize(points);
  double previous = source.density(lo);
  mVelocities[0] = lo;
  mCumulative[0] = 0.0;
  for (int i = 1; i < points; ++i)
  {
    const double v = lo + (hi - lo) * i / (points - 1);
    const double f = source.density(v);
    mVelocities[i] = v;
    mCumulative[i] = mCumulative[i - 1] + 0.5 * (f + previous) * (v - mVelocities[i - 1]);
    previous = f;
  }
  const double total = mCumulative.back();
  for (double& c : mCumulative)
    c /= total;
}

double VelocityCdf::cdf(double v) const
{
  if (v <= mVelocities.front())
    return 0.0;
  if (v >= mVelocities.back())
    return 1.0;
  const auto it = std::upper_bound(mVelocities.begin(), mVelocities.end(), v);
  const std::size_t k = static_cast<std::size_t>(it - mVelocities.begin());
  const double t = (v - mVelocities[k - 1]) / (mVelocities[k] - mVelocities[k - 1]);
  return (1.0 - t) * mCumulative[k - 1] + t * mCumulative[k];
}

double VelocityCdf::quantile(double u) const
{
  if (u <= 0.0)
    return mVelocities.front();
  if (u >= 1.0)
    return mVelocities.back();
  const auto it = std::lower_bound(mCumulative.begin(), mCumulative.end(), u);
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(it - mCumulative.begin()));
  const double span = mCumulative[k] - mCumulative[k - 1];
  const double t = span > 0.0 ? (u - mCumulative[k - 1]) / span : 0.0;
  return mVelocities[k - 1] + t * (mVelocities[k] - mVelocities[k - 1]);
}

double fall_height(double velocity, const BeamlineGeometry& geom)
{
  if (!(velocity > 0.0))
    throw DomainError("velocity must be positive");
  return geom.fall_constant() / (velocity * velocity) + geom.height_reference_offset_m;
}

double velocity_from_height(double height_m, const BeamlineGeometry& geom)
{
  const double drop = height_m - geom.height_reference_offset_m;
  if (!(drop > 0.0))
    throw DomainError("height must lie below the reference");
  return std::sqrt(geom.fall_constant() / drop);
}

double parabola_height(double velocity, double y1, double y2, const BeamlineGeometry& geom)
{
  // y(z) = y1 + s z - g z^2 / (2 v^2) through (0, y1) and (z_s, y2)
  const double ratio = geom.detector_z_m / geom.selection_slit_z_m;
  const double drop = std::isinf(velocity) ? 0.0 : geom.fall_constant() / (velocity * velocity);
  return drop - (y1 + (y2 - y1) * ratio) + geom.height_reference_offset_m;
}

VelocityDistribution velocity_distribution_at_height(double height_m, double window_m,
                                                     const BeamlineGeometry& geom, const SourceModel& source,
                                                     const DistributionOptions& options)
{
  geom.validate();
  if (!(window_m > 0.0))
    throw DomainError("integration window must be positive");
  if (options.n_samples == 0 || options.bins < 1)
    throw DomainError("velocity distribution needs samples and bins");
  const VelocityCdf table(source);
  const double K = geom.fall_constant();
  const double lo_h = height_m - 0.5 * window_m;
  const double hi_h = height_m + 0.5 * window_m;
  const auto shift = shift_range(geom);
  const auto [v_lo, v_hi_a] = speed_interval(lo_h, hi_h, shift.c_max, K, table.max_velocity());
  const auto [v_lo_b, v_hi] = speed_interval(lo_h, hi_h, shift.c_min, K, table.max_velocity());
  const double v_min = std::min(v_lo, v_lo_b);
  const double v_max = std::max(v_hi, v_hi_a);
  const double u_min = table.cdf(v_min);
  const double u_max = table.cdf(v_max);
  if (!(v_max > v_min) || !(u_max > u_min))
    throw DomainError("no molecule can reach the requested height window");

  double width = 0.0;
  double first = 0.0;
  double k0 = 0.0;
  int bins = options.bins;
  if (options.bin_width_mps > 0.0)
  {
    width = options.bin_width_mps;
    k0 = std::floor(v_min / width);
    first = k0 * width;
    bins = std::max(1, static_cast<int>(std::ceil(v_max / width) - k0));
  }
  else
  {
    width = (v_max - v_min) / bins;
    first = v_min;
  }

  std::vector<StreamTally> tallies(kMonteCarloStreams);
  parallel_for(kMonteCarloStreams, options.exec, [&](std::size_t s) {
    auto& t = tallies[s];
    t.counts.assign(bins, 0.0);
    const std::uint64_t count =
        options.n_samples / kMonteCarloStreams + (s < options.n_samples % kMonteCarloStreams ? 1 : 0);
    std::mt19937_64 rng(stream_seed(options.seed, s));
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    std::uniform_real_distribution<double> level(0.0, 1.0);
    for (std::uint64_t i = 0; i < count; ++i)
    {
      const double y1 = geom.oven_slit_center_m + unit(rng) * geom.oven_slit_width_m;
      const double y2 = geom.selection_slit_center_m + unit(rng) * geom.selection_slit_width_m;
      // Speeds landing in the window from (y1, y2) form one interval; draw v
      // inside it and weight by its source probability.
      const double c = parabola_height(std::numeric_limits<double>::infinity(), y1, y2, geom);
      const auto [a, b] = speed_interval(lo_h, hi_h, c, K, table.max_velocity());
      const double ua = table.cdf(a);
      const double ub = table.cdf(b);
      const double u = level(rng);
      if (!(ub > ua))
        continue;
      const double weight = ub - ua;
      const double v = table.quantile(ua + u * weight);
      ++t.accepted;
      t.weight += weight;
      t.sum_v += weight * v;
      const int bin = std::clamp(static_cast<int>(std::floor((v - first) / width)), 0, bins - 1);
      t.counts[bin] += weight;
    }
  });

  VelocityDistribution out;
  out.n_samples = options.n_samples;
  out.bin_width = width;
  std::vector<double> counts(bins, 0.0);
  double sum_v = 0.0;
  double n = 0.0;
  for (const auto& t : tallies)
  {
    out.accepted += t.accepted;
    n += t.weight;
    sum_v += t.sum_v;
    for (int b = 0; b < bins; ++b)
      counts[b] += t.counts[b];
  }
  if (out.accepted == 0)
    throw DomainError("empty acceptance: no sample landed in the height window");

  const double centre0 = first + 0.5 * width;
  const auto full = shape_of(counts, centre0, width, sum_v / n);
  out.mean = full.mean;
  out.landing_fraction = n / static_cast<double>(options.n_samples);
  out.relative_spread = full.relative_spread;
  for (int b = 0; b < bins; ++b)
  {
    out.velocities.push_back(options.bin_width_mps > 0.0 ? (k0 + b + 0.5) * width : centre0 + b * width);
    out.weights.push_back(counts[b] / n);
  }

  // delete-one-stream jackknife
  std::vector<Shape> replicas;
  std::vector<double> rest(bins);
  for (const auto& t : tallies)
  {
    const double m = n - t.weight;
    if (m <= 0.0)
      continue;
    for (int b = 0; b < bins; ++b)
      rest[b] = counts[b] - t.counts[b];
    replicas.push_back(shape_of(rest, centre0, width, (sum_v - t.sum_v) / m));
  }
  const double g = static_cast<double>(replicas.size());
  if (g > 1.0)
  {
    double mm = 0.0;
    double ms = 0.0;
    for (const auto& r : replicas)
    {
      mm += r.mean / g;
      ms += r.relative_spread / g;
    }
    double vm = 0.0;
    double vs = 0.0;
    for (const auto& r : replicas)
    {
      vm += (r.mean - mm) * (r.mean - mm);
      vs += (r.relative_spread - ms) * (r.relative_spread - ms);
    }
    out.mean_error = std::sqrt((g - 1.0) / g * vm);
    out.relative_spread_error = std::sqrt((g - 1.0) / g * vs);
  }
  return out;
}

double deposition_density(double height_m, double window_m, const BeamlineGeometry& geom, const SourceModel& source)
{
  geom.validate();
  if (!(window_m > 0.0))
    throw DomainError("integration window must be positive");
  const VelocityCdf table(source);
  const double K = geom.fall_constant();
  const double lo_h = height_m - 0.5 * window_m;
  const double hi_h = height_m + 0.5 * window_m;
  // midpoint rule over both slits; a zero-width slit collapses to its centre
  constexpr int kPoints = 128;
  const int n1 = geom.oven_slit_width_m > 0.0 ? kPoints : 1;
  const int n2 = geom.selection_slit_width_m > 0.0 ? kPoints : 1;
  double total = 0.0;
  for (int i = 0; i < n1; ++i)
  {
    const double y1 = geom.oven_slit_center_m + ((i + 0.5) / n1 - 0.5) * geom.oven_slit_width_m;
    for (int j = 0; j < n2; ++j)
    {
      const double y2 = geom.selection_slit_center_m + ((j + 0.5) / n2 - 0.5) * geom.selection_slit_width_m;
      const double c = parabola_height(std::numeric_limits<double>::infinity(), y1, y2, geom);
      const auto [a, b] = speed_interval(lo_h, hi_h, c, K, table.max_velocity());
      total += table.cdf(b) - table.cdf(a);
    }
  }
  return total / (static_cast<double>(n1) * n2);
}

double most_probable_height(double window_m, const BeamlineGeometry& geom, const SourceModel& source)
{
  const VelocityCdf table(source);
  // heights reached by the central ray between the 0.1% and 99.9% speed quantiles
  const double top = fall_height(table.quantile(0.999), geom);
  const double bottom = fall_height(std::max(table.quantile(0.001), 1e-3), geom);
  constexpr int kGrid = 400;
  double best_h = top;
  double best = -1.0;
  for (int i = 0; i <= kGrid; ++i)
  {
    const double h = top + (bottom - top) * i / kGrid;
    const double n = deposition_density(h, window_m, geom, source);
    if (n > best)
    {
      best = n;
      best_h = h;
    }
  }
  // golden-section refinement around the grid maximum
  const double step = (bottom - top) / kGrid;
  double a = best_h - step;
  double b = best_h + step;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it)
  {
    const double x1 = b - r * (b - a);
    const double x2 = a + r * (b - a);
    if (deposition_density(x1, window_m, geom, source) >= deposition_density(x2, window_m, geom, source))
      b = x2;
    else
      a = x1;
  }
  return 0.5 * (a + b);
}

physics::Visibility averaged_visibility(const VelocityDistribution& distribution,
                                        const physics::InterferometerConfig& config, AveragingMode mode,
                                        Execution exec, const physics::TruncationOptions& options)
{
  const auto& v = distribution.velocities;
  const auto& w = distribution.weights;
  if (v.empty() || v.size() != w.size())
    throw DomainError("velocity distribution is empty or malformed");
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0)
      used.push_back(i);
  if (used.empty())
    throw DomainError("velocity distribution carries no weight");

  std::vector<physics::FringeSignal> signals(used.size());
  parallel_for(used.size(), exec,
               [&](std::size_t k) { signals[k] = physics::fringe_signal(config, v[used[k]], 256, options); });

  std::vector<const physics::FringeSignal*> pointers;
  std::vector<double> weights;
  for (std::size_t k = 0; k < used.size(); ++k)
  {
    pointers.push_back(&signals[k]);
    weights.push_back(w[used[k]]);
  }
  return average_signals(pointers, weights, mode, config.g2.period_nm, options.imaginary_tolerance);
}

physics::Visibility average_signals(std::span<const physics::FringeSignal* const> signals,
                                    std::span<const double> weights, AveragingMode mode, double period_nm,
                                    double imaginary_tolerance)
{
  if (signals.empty() || signals.size() != weights.size())
    throw DomainError("signals and weights must be non-empty and of equal length");
  double total = 0.0;
  for (double w : weights)
    total += w;
  if (!(total > 0.0))
    throw DomainError("averaging weights carry no mass");
  if (mode == AveragingMode::average_visibility)
  {
    physics::Visibility out;
    for (std::size_t k = 0; k < signals.size(); ++k)
    {
      const auto vis = physics::visibility_of(*signals[k]);
      out.exact += weights[k] / total * vis.exact;
      out.sinusoidal += weights[k] / total * vis.sinusoidal;
    }
    return out;
  }
  int m_max = 0;
  for (const auto* s : signals)
    m_max = std::max(m_max, s->fourier_components.order());
  physics::FourierSeries mean(m_max);
  for (std::size_t k = 0; k < signals.size(); ++k)
    for (int m = -m_max; m <= m_max; ++m)
      mean.at(m) += weights[k] / total * signals[k]->fourier_components[m];
  return physics::visibility_of(physics::reconstruct_signal(std::move(mean), period_nm, 256, imaginary_tolerance));
}

std::vector<double> scattering_correction(std::span<const double> visibility, std::span<const double> deposition,
                                          const ScatteringModel& model)
{
  if (!(model.fraction >= 0.0 && model.fraction < 1.0))
    throw DomainError("scattered fraction must lie in [0, 1)");
  if (visibility.size() != deposition.size())
    throw DomainError("visibility and deposition profiles differ in length");
  if (!(model.detector_extent_m > 0.0 && model.window_m > 0.0))
    throw DomainError("detector extent and window must be positive");
  double reference = model.reference_count;
  if (reference <= 0.0)
    for (double n : deposition)
      reference = std::max(reference, n);
  const double background = model.fraction * reference / model.detector_extent_m * model.window_m;
  std::vector<double> out(visibility.size());
  for (std::size_t i = 0; i < visibility.size(); ++i)
  {
    if (deposition[i] < 0.0)
      throw DomainError("deposition must be non-negative");
    const double total = deposition[i] + background;
    out[i] = total > 0.0 ? visibility[i] * deposition[i] / total : 0.0;
  }
  return out;
}

std::vector<TheoryPoint> theory_curve(std::span<const double> heights_m, const physics::InterferometerConfig& config,
                                      const BeamlineGeometry& geom, const SourceModel& source,
                                      const TheoryOptions& options)
{
  std::vector<VelocityDistribution> distributions;
  std::vector<TheoryPoint> out(heights_m.size());
  for (std::size_t i = 0; i < heights_m.size(); ++i)
  {
    auto dist_opts = options.distribution;
    dist_opts.seed = mix_seed(options.distribution.seed + i);
    distributions.push_back(velocity_distribution_at_height(heights_m[i], options.window_m, geom, source, dist_opts));
    out[i].height_m = heights_m[i];
    out[i].mean_velocity = distributions.back().mean;
    out[i].relative_spread = distributions.back().relative_spread;
    out[i].deposition = deposition_density(heights_m[i], options.window_m, geom, source);
  }

  // one fringe signal per distinct velocity bin across all heights
  std::map<double, std::size_t> index;
  for (const auto& d : distributions)
    for (std::size_t k = 0; k < d.velocities.size(); ++k)
      if (d.weights[k] > 0.0)
        index.emplace(d.velocities[k], 0);
  std::vector<double> speeds;
  for (auto& [v, k] : index)
  {
    k = speeds.size();
    speeds.push_back(v);
  }
  std::vector<physics::FringeSignal> signals(speeds.size());
  parallel_for(speeds.size(), options.distribution.exec,
               [&](std::size_t k) { signals[k] = physics::fringe_signal(config, speeds[k], 256, options.truncation); });

  for (std::size_t i = 0; i < distributions.size(); ++i)
  {
    const auto& d = distributions[i];
    std::vector<const physics::FringeSignal*> pointers;
    std::vector<double> weights;
    for (std::size_t k = 0; k < d.velocities.size(); ++k)
    {
      if (d.weights[k] <= 0.0)
        continue;
      pointers.push_back(&signals[index.at(d.velocities[k])]);
      weights.push_back(d.weights[k]);
    }
    out[i].visibility = average_signals(pointers, weights, options.mode, config.g2.period_nm,
                                        options.truncation.imaginary_tolerance);
  }
  return out;
}

} // namespace talbot::beamline
