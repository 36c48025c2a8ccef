#pragma once

#include "talbot/imaging.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

/// Synthetic stripe stacks: deposition of the fringe pattern on the adsorber,
/// the fluorescence forward model per stripe, and the on-disk stack format.
namespace talbot::imaging
{

/// Height-dependent deposition, h in um below the reference.
struct DepositionProfile
{
  /// relative flux (molecules per second per unit density)
  std::function<double(double)> flux;
  std::function<double(double)> visibility;
  /// fringe phase at zero grating shift, rad
  std::function<double(double)> phase;

  static DepositionProfile uniform(double flux, double visibility, double phase);
  /// Linear interpolation in a table, clamped at its ends.
  static DepositionProfile table(std::vector<double> heights_um, std::vector<double> flux,
                                 std::vector<double> visibility, std::vector<double> phase);
};

struct SynthesisOptions
{
  int n_stripes = 30;
  double grating_step_nm = 100.0;
  double adsorber_step_um = 425.0;
  double period_nm = 991.0;
  double pixel_pitch_um = 2.0;
  double frame_width_um = 250.0;
  /// exposed width of each stripe behind the adsorber slit
  double stripe_width_um = 165.0;
  double height_min_um = 0.0;
  double height_max_um = 3000.0;
  double exposure_per_stripe_s = 480.0;
  /// surface density per second of exposure at unit flux
  double density_rate = 1.0 / 480.0;
  /// roll of G3 relative to G2, rad
  double tilt_rad = 0.0;
  /// linear grating drift accumulated over the whole scan, nm
  double drift_nm = 0.0;

  double efficiency = 1.0;
  double background = 1.0;
  double illumination = 1000.0;
  double collection = 0.8;
  double dark_level = 100.0;
  /// relative illumination fall-off across the frame (0 = flat)
  double illumination_rolloff = 0.3;
  /// relative collection fall-off along the height axis
  double collection_rolloff = 0.1;

  NoiseModel noise;
  /// apply the noise model to the reference and dark frames as well
  bool noisy_calibration = false;
  std::uint64_t seed = 1;
  Execution exec = Execution::parallel;
};

struct StackMetadata
{
  int n_stripes = 0;
  double grating_step_nm = 100.0;
  double adsorber_step_um = 425.0;
  double period_nm = 991.0;
  double exposure_per_stripe_s = 480.0;
  double pixel_pitch_um = 2.0;
  double frame_width_um = 250.0;
  double height_min_um = 0.0;
  std::string config_hash;
};

struct RawStack
{
  std::vector<ImageFrame> stripes;
  ImageFrame reference;
  ImageFrame dark;
  StackMetadata metadata;
  /// per-stripe read problems (empty when all frames loaded)
  std::vector<std::string> problems;
};

/// Deposited surface density of stripe i (no fluorescence model applied).
ImageFrame deposition_frame(const DepositionProfile& profile, const SynthesisOptions& options, int stripe);

RawStack synthesize_stack(const DepositionProfile& profile, const SynthesisOptions& options);

StripeStack correct_stack(const RawStack& raw, double epsilon = 1e-9);

enum class ImageFormat
{
  tiff,
  png
};

/// Writes stripe_NN, reference and dark images plus the stack.json sidecar.
void write_stack(const RawStack& stack, const std::filesystem::path& directory, ImageFormat format);

/// Reads a stack written by write_stack. A missing or inconsistent sidecar is a
/// DataError; an unreadable stripe image becomes an all-invalid frame and is
/// listed in RawStack::problems.
RawStack read_stack(const std::filesystem::path& directory);

} // namespace talbot::imaging
