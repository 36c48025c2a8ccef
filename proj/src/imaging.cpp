#include "talbot/imaging.hpp"

#include "talbot/constants.hpp"
#include "talbot/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace talbot::imaging
{

using constants::pi;

namespace
{

void require_non_negative(const ImageFrame& frame, const char* name)
{
  for (double v : frame.pixels())
    if (!(v >= 0.0))
      throw DomainError(std::string(name) + " must be non-negative");
}

void require_shape(const ImageFrame& a, const ImageFrame& b, const char* what)
{
  if (!a.same_shape(b))
    throw DataError(std::string("frame shape mismatch: ") + what);
}

ImageFrame evaluate(const FrameFields& f, bool with_density, const NoiseModel& noise, std::uint64_t seed)
{
  require_shape(f.density, f.illumination, "density vs illumination");
  require_shape(f.density, f.collection, "density vs collection");
  require_shape(f.density, f.dark, "density vs dark");
  if (!(f.efficiency >= 0.0 && f.background >= 0.0))
    throw DomainError("efficiency and background must be non-negative");
  require_non_negative(f.density, "surface density");
  require_non_negative(f.illumination, "illumination");
  require_non_negative(f.collection, "collection efficiency");
  require_non_negative(f.dark, "dark frame");
  if (noise.shot && !(noise.gain > 0.0))
    throw DomainError("shot-noise gain must be positive");
  if (!(noise.read_sigma >= 0.0))
    throw DomainError("read noise must be non-negative");

  ImageFrame out(f.density.width(), f.density.height(), f.density.pitch_um(),
                 with_density ? FrameKind::fluorescence : FrameKind::reference);
  out.origin_x_um = f.density.origin_x_um;
  out.origin_y_um = f.density.origin_y_um;
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> read(0.0, 1.0);
  const auto& n = f.density.pixels();
  const auto& ii = f.illumination.pixels();
  const auto& k = f.collection.pixels();
  const auto& c = f.dark.pixels();
  auto& px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
  {
    const double molecules = with_density ? f.efficiency * n[i] : 0.0;
    double value = (molecules + f.background) * k[i] * ii[i] + c[i];
    if (noise.shot)
    {
      std::poisson_distribution<std::int64_t> counts(noise.gain * value);
      value = static_cast<double>(counts(rng)) / noise.gain;
    }
    if (noise.read_sigma > 0.0)
      value += noise.read_sigma * read(rng);
    px[i] = value;
  }
  return out;
}

double wrap(double phase)
{
  return phase - 2.0 * pi * std::floor((phase + pi) / (2.0 * pi));
}

struct LineFit
{
  double slope = 0.0;
  double intercept = 0.0;
  double slope_error = 0.0;
  double chi2 = 0.0;
};

/// Weighted straight line y = a + b x with weights 1 / sigma^2. With
/// scale_by_chi2 the slope error is inflated by sqrt(chi2 / dof) when that
/// exceeds one.
LineFit weighted_line(std::span<const double> x, std::span<const double> y, std::span<const double> sigma,
                      bool scale_by_chi2)
{
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    const double w = 1.0 / (sigma[i] * sigma[i]);
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0))
    throw NumericalError("degenerate straight-line fit");
  LineFit fit;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    const double r = (y[i] - fit.intercept - fit.slope * x[i]) / sigma[i];
    fit.chi2 += r * r;
  }
  const double dof = static_cast<double>(x.size()) - 2.0;
  const double scale = scale_by_chi2 && dof > 0.0 ? std::max(1.0, fit.chi2 / dof) : 1.0;
  fit.slope_error = std::sqrt(sw / det * scale);
  return fit;
}

/// Smallest positive error used when a fit is noise free.
constexpr double kErrorFloor = 1e-15;

} // namespace

ImageFrame synthesize_frame(const FrameFields& fields, const NoiseModel& noise, std::uint64_t seed)
{
  return evaluate(fields, true, noise, seed);
}

ImageFrame synthesize_reference(const FrameFields& fields, const NoiseModel& noise, std::uint64_t seed)
{
  return evaluate(fields, false, noise, seed);
}

ImageFrame correct_frame(const ImageFrame& fluorescence, const ImageFrame& reference, const ImageFrame& dark,
                         double epsilon)
{
  require_shape(fluorescence, reference, "fluorescence vs reference");
  require_shape(fluorescence, dark, "fluorescence vs dark");
  if (!(epsilon >= 0.0))
    throw DomainError("correction threshold must be non-negative");
  ImageFrame out(fluorescence.width(), fluorescence.height(), fluorescence.pitch_um(), FrameKind::corrected);
  out.origin_x_um = fluorescence.origin_x_um;
  out.origin_y_um = fluorescence.origin_y_um;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
    {
      const double denom = reference.at(x, y) - dark.at(x, y);
      const bool ok = fluorescence.valid(x, y) && reference.valid(x, y) && dark.valid(x, y) && denom > epsilon;
      out.set_valid(x, y, ok);
      out.at(x, y) = ok ? (fluorescence.at(x, y) - dark.at(x, y)) / denom - 1.0 : 0.0;
    }
  return out;
}

StripeIntegral integrate_stripe(const ImageFrame& frame, double x_um, double y_um, double width_um,
                                double height_um)
{
  if (!(width_um > 0.0 && height_um > 0.0))
    throw DomainError("integration rectangle must have positive size");
  const double tol = 1e-9 * frame.pitch_um();
  const double x0 = x_um - 0.5 * width_um;
  const double x1 = x_um + 0.5 * width_um;
  const double y0 = y_um - 0.5 * height_um;
  const double y1 = y_um + 0.5 * height_um;
  const double fx1 = frame.origin_x_um + frame.width() * frame.pitch_um();
  const double fy1 = frame.origin_y_um + frame.height() * frame.pitch_um();
  if (x0 < frame.origin_x_um - tol || x1 > fx1 + tol || y0 < frame.origin_y_um - tol || y1 > fy1 + tol)
    throw DomainError("integration rectangle leaves the frame");

  const int ix0 = std::max(0, static_cast<int>(std::floor((x0 - frame.origin_x_um) / frame.pitch_um())));
  const int ix1 = std::min(frame.width() - 1, static_cast<int>(std::ceil((x1 - frame.origin_x_um) / frame.pitch_um())));
  const int iy0 = std::max(0, static_cast<int>(std::floor((y0 - frame.origin_y_um) / frame.pitch_um())));
  const int iy1 = std::min(frame.height() - 1, static_cast<int>(std::ceil((y1 - frame.origin_y_um) / frame.pitch_um())));
  double sum = 0.0;
  int inside = 0;
  int good = 0;
  for (int y = iy0; y <= iy1; ++y)
  {
    const double yc = frame.y_center_um(y);
    if (yc < y0 - tol || yc > y1 + tol)
      continue;
    for (int x = ix0; x <= ix1; ++x)
    {
      const double xc = frame.x_center_um(x);
      if (xc < x0 - tol || xc > x1 + tol)
        continue;
      ++inside;
      if (!frame.valid(x, y))
        continue;
      ++good;
      sum += frame.at(x, y);
    }
  }
  if (inside == 0)
    throw DomainError("integration rectangle contains no pixel centre");
  if (good == 0)
    throw DataError("integration rectangle holds no valid pixel");
  StripeIntegral out;
  out.value = sum / good;
  out.pixels = good;
  out.valid_fraction = static_cast<double>(good) / inside;
  return out;
}

FringeFit fit_fringe(std::span<const double> values, std::span<const double> positions_nm, double period_nm)
{
  if (values.size() != positions_nm.size())
    throw DomainError("fringe samples and positions differ in length");
  if (values.size() < 5)
    throw DomainError("fringe fit needs at least 5 samples");
  if (!(period_nm > 0.0))
    throw DomainError("grating period must be positive");
  const int n = static_cast<int>(values.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i)
  {
    const double arg = 2.0 * pi * positions_nm[i] / period_nm;
    X(i, 0) = 1.0;
    X(i, 1) = std::cos(arg);
    X(i, 2) = std::sin(arg);
    y(i) = values[i];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 3)
    throw NumericalError("fringe design matrix is rank deficient");
  const Eigen::Vector3d p = qr.solve(y);
  const Eigen::VectorXd r = y - X * p;
  const double rss = r.squaredNorm();
  const double sigma2 = n > 3 ? rss / (n - 3) : 0.0;
  const Eigen::Matrix3d cov = sigma2 * (X.transpose() * X).inverse();

  FringeFit fit;
  fit.a0 = p(0);
  if (!(fit.a0 > 0.0))
    throw DataError("invalid fringe fit: offset a0 <= 0");
  const double c = p(1);
  const double s = p(2);
  fit.amplitude = std::hypot(c, s);
  fit.phase = std::atan2(-s, c);
  fit.visibility = fit.amplitude / fit.a0;
  fit.out_of_range = fit.visibility > 1.0;
  const auto [lo, hi] = std::minmax_element(positions_nm.begin(), positions_nm.end());
  fit.partial_period = (*hi - *lo) * n / (n - 1.0) < period_nm * (1.0 - 1e-12);
  fit.residual_norm = std::sqrt(rss);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      fit.covariance[3 * i + j] = cov(i, j);

  const double A = std::max(fit.amplitude, 1e-300);
  Eigen::RowVector3d dv(-fit.amplitude / (fit.a0 * fit.a0), c / (A * fit.a0), s / (A * fit.a0));
  Eigen::RowVector3d dphi(0.0, s / (A * A), -c / (A * A));
  if (fit.amplitude == 0.0)
  {
    // amplitude error alone when the fitted fringe vanishes
    dv << 0.0, 1.0 / fit.a0, 0.0;
    dphi.setZero();
  }
  fit.visibility_error = std::sqrt(std::max(0.0, (dv * cov * dv.transpose())(0, 0)));
  fit.phase_error = std::sqrt(std::max(0.0, (dphi * cov * dphi.transpose())(0, 0)));
  return fit;
}

VisibilityCurve visibility_vs_height(const StripeStack& stack, std::span<const double> heights_um,
                                     const beamline::BeamlineGeometry& geom, const AnalysisOptions& options)
{
  for (std::size_t i = 1; i < heights_um.size(); ++i)
    if (!(heights_um[i] > heights_um[i - 1]))
      throw DomainError("curve heights must increase strictly");
  VisibilityCurve curve;
  curve.points.resize(heights_um.size());
  parallel_for(heights_um.size(), options.exec, [&](std::size_t k) {
    auto& pt = curve.points[k];
    pt.height_um = heights_um[k];
    const double drop = pt.height_um * 1e-6 - geom.height_reference_offset_m;
    pt.velocity_mps = drop > 0.0 ? beamline::velocity_from_height(pt.height_um * 1e-6, geom)
                                 : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> values;
    std::vector<double> positions;
    std::string skipped;
    for (int i = 0; i < stack.n_stripes(); ++i)
    {
      try
      {
        const auto s = integrate_stripe(stack.frames[i], stack.adsorber_position_um(i), pt.height_um,
                                        options.rect_width_um, options.rect_height_um);
        values.push_back(s.value);
        positions.push_back(stack.grating_position_nm(i));
      }
      catch (const Error& e)
      {
        skipped += (skipped.empty() ? "" : "; ") + std::string("stripe ") + std::to_string(i) + ": " + e.what();
      }
    }
    pt.stripes_used = static_cast<int>(values.size());
    try
    {
      pt.fit = fit_fringe(values, positions, stack.period_nm);
      pt.visibility = pt.fit.visibility;
      pt.visibility_err = pt.fit.visibility_error;
      pt.phase_rad = pt.fit.phase;
      pt.phase_err = pt.fit.phase_error;
      pt.ok = true;
      pt.message = skipped;
    }
    catch (const Error& e)
    {
      pt.ok = false;
      pt.message = e.what() + (skipped.empty() ? std::string() : " (" + skipped + ")");
    }
  });
  return curve;
}

PhaseGradient phase_gradient(const VisibilityCurve& curve)
{
  std::vector<double> h;
  std::vector<double> phase;
  std::vector<double> sigma;
  PhaseGradient out;
  for (const auto& p : curve.points)
  {
    if (!p.ok)
      continue;
    double value = p.phase_rad;
    if (!phase.empty())
    {
      value += 2.0 * pi * std::round((phase.back() - value) / (2.0 * pi));
      if (std::abs(value - phase.back()) > 0.5 * pi)
        out.unwrap_ambiguous = true;
    }
    h.push_back(p.height_um * 1e-6);
    phase.push_back(value);
    sigma.push_back(std::max(p.phase_err, kErrorFloor));
  }
  out.points = static_cast<int>(h.size());
  if (out.points < 3)
    throw DataError("phase gradient needs at least 3 valid points");
  const auto fit = weighted_line(h, phase, sigma, true);
  out.slope = fit.slope;
  out.slope_error = fit.slope_error;
  out.intercept = fit.intercept;
  out.unwrapped = phase;
  return out;
}

double tilt_from_phase_gradient(double slope_rad_per_m, double period_m)
{
  return slope_rad_per_m * period_m / (2.0 * pi);
}

std::vector<BlockPhase> block_phases(const StripeStack& stack, std::span<const double> heights_um, int blocks,
                                     const AnalysisOptions& options)
{
  if (blocks < 2)
    throw DomainError("drift analysis needs at least 2 blocks");
  const int n = stack.n_stripes();
  if (n < 5 * blocks)
    throw DomainError("drift analysis needs at least 5 stripes per block");

  struct Accum
  {
    double sum = 0.0;
    double weight = 0.0;
  };
  std::vector<std::vector<Accum>> per_height(heights_um.size(), std::vector<Accum>(blocks));
  parallel_for(heights_um.size(), options.exec, [&](std::size_t k) {
    std::vector<double> values(n);
    std::vector<double> positions(n);
    try
    {
      for (int i = 0; i < n; ++i)
      {
        values[i] = integrate_stripe(stack.frames[i], stack.adsorber_position_um(i), heights_um[k],
                                     options.rect_width_um, options.rect_height_um)
                        .value;
        positions[i] = stack.grating_position_nm(i);
      }
      const auto full = fit_fringe(values, positions, stack.period_nm);
      for (int b = 0; b < blocks; ++b)
      {
        const int first = b * n / blocks;
        const int last = (b + 1) * n / blocks;
        const auto fit = fit_fringe(std::span(values).subspan(first, last - first),
                                    std::span(positions).subspan(first, last - first), stack.period_nm);
        const double sigma = std::max(fit.phase_error, kErrorFloor);
        const double w = 1.0 / (sigma * sigma);
        per_height[k][b].sum = w * wrap(fit.phase - full.phase);
        per_height[k][b].weight = w;
      }
    }
    catch (const Error&)
    {
      // a height without a usable fit does not contribute
      for (auto& a : per_height[k])
        a = Accum{};
    }
  });

  std::vector<BlockPhase> out(blocks);
  for (int b = 0; b < blocks; ++b)
  {
    const int first = b * n / blocks;
    const int last = (b + 1) * n / blocks;
    out[b].time_s = 0.5 * (stack.stripe_time_s(first) + stack.stripe_time_s(last - 1));
    Accum total;
    for (const auto& h : per_height)
    {
      total.sum += h[b].sum;
      total.weight += h[b].weight;
    }
    if (!(total.weight > 0.0))
      throw DataError("no height yielded a usable block fit");
    out[b].phase = total.sum / total.weight;
    out[b].phase_error = 1.0 / std::sqrt(total.weight);
  }
  return out;
}

DriftReport drift_bound(std::span<const BlockPhase> blocks, double duration_s, double period_nm)
{
  if (blocks.size() < 2)
    throw DomainError("drift bound needs at least 2 blocks");
  if (!(duration_s > 0.0 && period_nm > 0.0))
    throw DomainError("duration and period must be positive");
  std::vector<double> t;
  std::vector<double> phase;
  std::vector<double> sigma;
  for (const auto& b : blocks)
  {
    t.push_back(b.time_s);
    phase.push_back(b.phase);
    sigma.push_back(std::max(b.phase_error, kErrorFloor));
  }
  const double to_nm = period_nm / (2.0 * pi);
  DriftReport out;
  const auto fit = weighted_line(t, phase, sigma, false);
  out.rate_rad_per_s = fit.slope;
  out.rate_error = fit.slope_error;
  out.displacement_nm = fit.slope * duration_s * to_nm;
  out.displacement_error_nm = fit.slope_error * duration_s * to_nm;
  out.bound_nm = std::abs(out.displacement_nm) + 2.0 * out.displacement_error_nm;
  out.trend_detected = std::abs(fit.slope) > 3.0 * fit.slope_error;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    for (std::size_t j = i + 1; j < blocks.size(); ++j)
      out.max_discrepancy_nm = std::max(out.max_discrepancy_nm, std::abs(phase[i] - phase[j]) * to_nm);
  return out;
}

} // namespace talbot::imaging
