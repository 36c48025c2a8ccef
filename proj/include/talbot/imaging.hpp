#pragma once

#include "talbot/beamline.hpp"
#include "talbot/image.hpp"
#include "talbot/parallel.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

/// Fluorescence image model, flat-field correction, stripe integration and
/// fringe analysis of mechanically magnified deposition records.
namespace talbot::imaging
{

struct NoiseModel
{
  /// scaled Poisson: I -> Poisson(gain I) / gain
  bool shot = false;
  double gain = 1.0;
  /// additive Gaussian readout noise (intensity units); 0 disables
  double read_sigma = 0.0;

  bool enabled() const { return shot || read_sigma > 0.0; }
};

/// Pixel fields of the fluorescence model I_f = (eta N + B) K I_i + I_c.
struct FrameFields
{
  ImageFrame density;
  ImageFrame illumination;
  ImageFrame collection;
  ImageFrame dark;
  double efficiency = 1.0;
  double background = 1.0;
};

ImageFrame synthesize_frame(const FrameFields& fields, const NoiseModel& noise = {}, std::uint64_t seed = 0);

/// The same model with N = 0.
ImageFrame synthesize_reference(const FrameFields& fields, const NoiseModel& noise = {}, std::uint64_t seed = 0);

/// N~ = (I_f - I_c) / (I_r - I_c) - 1; pixels with I_r - I_c <= epsilon or an
/// invalid input are marked invalid and hold 0.
ImageFrame correct_frame(const ImageFrame& fluorescence, const ImageFrame& reference, const ImageFrame& dark,
                         double epsilon = 1e-9);

struct StripeIntegral
{
  /// mean of the valid pixels whose centres lie in the rectangle
  double value = 0.0;
  double valid_fraction = 0.0;
  int pixels = 0;
};

/// Rectangle of width x height (um) centred at (x_um, y_um).
StripeIntegral integrate_stripe(const ImageFrame& frame, double x_um, double y_um, double width_um = 100.0,
                                double height_um = 33.0);

struct FringeFit
{
  double a0 = 0.0;
  double amplitude = 0.0;
  /// model a0 + amplitude cos(2 pi x / d + phase)
  double phase = 0.0;
  double visibility = 0.0;
  double visibility_error = 0.0;
  double phase_error = 0.0;
  /// covariance of (a0, c, s) in a0 + c cos + s sin
  std::array<double, 9> covariance{};
  double residual_norm = 0.0;
  /// visibility outside [0, 1]; reported, not clamped
  bool out_of_range = false;
  /// the samples cover less than one period
  bool partial_period = false;
};

/// Linear least squares of a0 + c cos(2 pi x/d) + s sin(2 pi x/d); needs >= 5
/// samples. Fits over less than one period are flagged, not rejected.
FringeFit fit_fringe(std::span<const double> values, std::span<const double> positions_nm, double period_nm);

struct StripeStack
{
  /// corrected frames, one per stripe, in exposure order
  std::vector<ImageFrame> frames;
  double grating_step_nm = 100.0;
  double adsorber_step_um = 425.0;
  double period_nm = 991.0;
  double exposure_per_stripe_s = 480.0;

  int n_stripes() const { return static_cast<int>(frames.size()); }
  double magnification() const { return adsorber_step_um * 1e3 / grating_step_nm; }
  double grating_position_nm(int i) const { return i * grating_step_nm; }
  /// stripe centre along x on the adsorber
  double adsorber_position_um(int i) const { return i * adsorber_step_um; }
  /// grating periods covered by the scan
  double span_periods() const { return n_stripes() * grating_step_nm / period_nm; }
  /// exposure midpoint of stripe i
  double stripe_time_s(int i) const { return (i + 0.5) * exposure_per_stripe_s; }
  double duration_s() const { return n_stripes() * exposure_per_stripe_s; }
};

struct AnalysisOptions
{
  double rect_width_um = 100.0;
  double rect_height_um = 33.0;
  Execution exec = Execution::parallel;
};

struct CurvePoint
{
  double height_um = 0.0;
  /// NaN when the height lies above the beamline reference
  double velocity_mps = 0.0;
  double visibility = 0.0;
  double visibility_err = 0.0;
  double phase_rad = 0.0;
  double phase_err = 0.0;
  int stripes_used = 0;
  bool ok = false;
  std::string message;
  FringeFit fit;
};

struct VisibilityCurve
{
  std::vector<CurvePoint> points;
};

/// Integrates every stripe at each height and fits the fringe. Stripes that
/// cannot be integrated are skipped; heights with failed fits are kept with
/// ok = false and a message.
VisibilityCurve visibility_vs_height(const StripeStack& stack, std::span<const double> heights_um,
                                     const beamline::BeamlineGeometry& geom, const AnalysisOptions& options = {});

struct PhaseGradient
{
  /// rad per m of height
  double slope = 0.0;
  double slope_error = 0.0;
  double intercept = 0.0;
  int points = 0;
  /// an adjacent unwrapped step exceeded pi/2
  bool unwrap_ambiguous = false;
  std::vector<double> unwrapped;
};

/// Weighted linear fit of the unwrapped phase against height (valid points).
PhaseGradient phase_gradient(const VisibilityCurve& curve);

/// A roll of G3 by theta shifts the local grating phase by 2 pi theta h / d.
double tilt_from_phase_gradient(double slope_rad_per_m, double period_m);

struct BlockPhase
{
  /// mid-exposure time of the block
  double time_s = 0.0;
  /// phase relative to the full-scan fit, averaged over heights
  double phase = 0.0;
  double phase_error = 0.0;
};

/// Splits the stack into `blocks` time-ordered groups of stripes and fits each
/// group at every height.
std::vector<BlockPhase> block_phases(const StripeStack& stack, std::span<const double> heights_um, int blocks = 3,
                                     const AnalysisOptions& options = {});

struct DriftReport
{
  /// weighted linear trend of block phase against time
  double rate_rad_per_s = 0.0;
  double rate_error = 0.0;
  /// trend extrapolated over the duration, in nm
  double displacement_nm = 0.0;
  double displacement_error_nm = 0.0;
  /// |displacement| + 2 sigma
  double bound_nm = 0.0;
  /// largest phase difference between any two blocks, in nm
  double max_discrepancy_nm = 0.0;
  /// trend beyond 3 sigma
  bool trend_detected = false;
};

DriftReport drift_bound(std::span<const BlockPhase> blocks, double duration_s, double period_nm);

} // namespace talbot::imaging
