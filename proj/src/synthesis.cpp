#include "talbot/synthesis.hpp"

#include "talbot/constants.hpp"
#include "talbot/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace talbot::imaging
{

using constants::pi;

namespace
{

double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at)
{
  if (at <= x.front())
    return y.front();
  if (at >= x.back())
    return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), at);
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  const double t = (at - x[k - 1]) / (x[k] - x[k - 1]);
  return (1.0 - t) * y[k - 1] + t * y[k];
}

struct Geometry
{
  int width = 0;
  int height = 0;
};

Geometry frame_geometry(const SynthesisOptions& o)
{
  if (!(o.pixel_pitch_um > 0.0 && o.frame_width_um > 0.0 && o.height_max_um > o.height_min_um))
    throw DomainError("synthesis frame geometry is empty");
  Geometry g;
  g.width = static_cast<int>(std::lround(o.frame_width_um / o.pixel_pitch_um));
  g.height = static_cast<int>(std::lround((o.height_max_um - o.height_min_um) / o.pixel_pitch_um));
  if (g.width < 1 || g.height < 1)
    throw DomainError("synthesis frame has no pixels");
  return g;
}

ImageFrame blank(const SynthesisOptions& o, int stripe, FrameKind kind, double fill = 0.0)
{
  const auto g = frame_geometry(o);
  ImageFrame f(g.width, g.height, o.pixel_pitch_um, kind, fill);
  f.origin_x_um = stripe * o.adsorber_step_um - 0.5 * o.frame_width_um;
  f.origin_y_um = o.height_min_um;
  return f;
}

/// Illumination, collection and dark fields in frame coordinates; every stripe
/// is imaged at the same place on the camera.
FrameFields instrument_fields(const SynthesisOptions& o, int stripe)
{
  FrameFields f;
  f.density = blank(o, stripe, FrameKind::fluorescence);
  f.illumination = f.density;
  f.collection = f.density;
  f.dark = blank(o, stripe, FrameKind::dark);
  f.efficiency = o.efficiency;
  f.background = o.background;
  const double half_w = 0.5 * f.density.width();
  const double half_h = 0.5 * f.density.height();
  for (int y = 0; y < f.density.height(); ++y)
    for (int x = 0; x < f.density.width(); ++x)
    {
      const double u = (x + 0.5 - half_w) / half_w;
      const double w = (y + 0.5 - half_h) / half_h;
      f.illumination.at(x, y) = o.illumination * (1.0 - o.illumination_rolloff * u * u) *
                                (1.0 - 0.5 * o.illumination_rolloff * w * w);
      f.collection.at(x, y) = o.collection * (1.0 - o.collection_rolloff * w * w);
      f.dark.at(x, y) = o.dark_level * (1.0 + 0.02 * std::cos(2.0 * pi * y / 250.0));
    }
  return f;
}

ImageFrame add_read_noise(ImageFrame frame, const NoiseModel& noise, std::uint64_t seed)
{
  if (noise.read_sigma <= 0.0)
    return frame;
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> read(0.0, noise.read_sigma);
  for (double& v : frame.pixels())
    v += read(rng);
  return frame;
}

std::string stripe_name(int i, ImageFormat format)
{
  std::ostringstream s;
  s << "stripe_" << std::setw(2) << std::setfill('0') << i << (format == ImageFormat::png ? ".png" : ".tiff");
  return s.str();
}

double require_number(const nlohmann::json& j, const char* key)
{
  if (!j.contains(key) || !j.at(key).is_number())
    throw DataError(std::string("stack sidecar lacks numeric field '") + key + "'");
  return j.at(key).get<double>();
}

std::string require_string(const nlohmann::json& j, const char* key)
{
  if (!j.contains(key) || !j.at(key).is_string())
    throw DataError(std::string("stack sidecar lacks text field '") + key + "'");
  return j.at(key).get<std::string>();
}

} // namespace

DepositionProfile DepositionProfile::uniform(double flux, double visibility, double phase)
{
  return {[flux](double) { return flux; }, [visibility](double) { return visibility; },
          [phase](double) { return phase; }};
}

DepositionProfile DepositionProfile::table(std::vector<double> heights_um, std::vector<double> flux,
                                           std::vector<double> visibility, std::vector<double> phase)
{
  const std::size_t n = heights_um.size();
  if (n == 0 || flux.size() != n || visibility.size() != n || phase.size() != n)
    throw DomainError("deposition table columns must be non-empty and of equal length");
  for (std::size_t i = 1; i < n; ++i)
    if (!(heights_um[i] > heights_um[i - 1]))
      throw DomainError("deposition table heights must increase strictly");
  auto h = std::make_shared<const std::vector<double>>(std::move(heights_um));
  auto f = std::make_shared<const std::vector<double>>(std::move(flux));
  auto v = std::make_shared<const std::vector<double>>(std::move(visibility));
  auto p = std::make_shared<const std::vector<double>>(std::move(phase));
  return {[h, f](double at) { return interpolate(*h, *f, at); }, [h, v](double at) { return interpolate(*h, *v, at); },
          [h, p](double at) { return interpolate(*h, *p, at); }};
}

ImageFrame deposition_frame(const DepositionProfile& profile, const SynthesisOptions& o, int stripe)
{
  auto frame = blank(o, stripe, FrameKind::fluorescence);
  const double centre = stripe * o.adsorber_step_um;
  const double duration = o.n_stripes * o.exposure_per_stripe_s;
  const double t = (stripe + 0.5) * o.exposure_per_stripe_s;
  const double shift_nm = stripe * o.grating_step_nm + (duration > 0.0 ? o.drift_nm * t / duration : 0.0);
  const double exposure = o.density_rate * o.exposure_per_stripe_s;
  for (int y = 0; y < frame.height(); ++y)
  {
    const double h = frame.y_center_um(y);
    const double phase = 2.0 * pi * shift_nm / o.period_nm + profile.phase(h) +
                         2.0 * pi * o.tilt_rad * (h * 1e3) / o.period_nm;
    const double n = exposure * profile.flux(h) * (1.0 + profile.visibility(h) * std::cos(phase));
    if (!(n >= 0.0))
      throw DomainError("deposition profile yields negative density");
    for (int x = 0; x < frame.width(); ++x)
      if (std::abs(frame.x_center_um(x) - centre) <= 0.5 * o.stripe_width_um)
        frame.at(x, y) = n;
  }
  return frame;
}

RawStack synthesize_stack(const DepositionProfile& profile, const SynthesisOptions& o)
{
  if (o.n_stripes < 1)
    throw DomainError("stack needs at least one stripe");
  if (!(o.exposure_per_stripe_s >= 0.0 && o.density_rate >= 0.0))
    throw DomainError("exposure must be non-negative");
  RawStack out;
  out.metadata.n_stripes = o.n_stripes;
  out.metadata.grating_step_nm = o.grating_step_nm;
  out.metadata.adsorber_step_um = o.adsorber_step_um;
  out.metadata.period_nm = o.period_nm;
  out.metadata.exposure_per_stripe_s = o.exposure_per_stripe_s;
  out.metadata.pixel_pitch_um = o.pixel_pitch_um;
  out.metadata.frame_width_um = o.frame_width_um;
  out.metadata.height_min_um = o.height_min_um;

  // reference and dark are taken in frame coordinates of stripe 0
  const auto fields = instrument_fields(o, 0);
  const NoiseModel none;
  const auto& calib = o.noisy_calibration ? o.noise : none;
  out.reference = synthesize_reference(fields, calib, stream_seed(o.seed, 100000));
  out.dark = add_read_noise(fields.dark, calib, stream_seed(o.seed, 100001));

  out.stripes.resize(o.n_stripes);
  parallel_for(static_cast<std::size_t>(o.n_stripes), o.exec, [&](std::size_t i) {
    auto f = instrument_fields(o, static_cast<int>(i));
    f.density = deposition_frame(profile, o, static_cast<int>(i));
    out.stripes[i] = synthesize_frame(f, o.noise, stream_seed(o.seed, i));
  });
  return out;
}

StripeStack correct_stack(const RawStack& raw, double epsilon)
{
  StripeStack stack;
  stack.grating_step_nm = raw.metadata.grating_step_nm;
  stack.adsorber_step_um = raw.metadata.adsorber_step_um;
  stack.period_nm = raw.metadata.period_nm;
  stack.exposure_per_stripe_s = raw.metadata.exposure_per_stripe_s;
  for (const auto& frame : raw.stripes)
  {
    auto corrected = correct_frame(frame, raw.reference, raw.dark, epsilon);
    corrected.origin_x_um = frame.origin_x_um;
    corrected.origin_y_um = frame.origin_y_um;
    stack.frames.push_back(std::move(corrected));
  }
  return stack;
}

void write_stack(const RawStack& stack, const std::filesystem::path& directory, ImageFormat format)
{
  std::filesystem::create_directories(directory);
  const auto& m = stack.metadata;
  double scale = 0.0;
  if (format == ImageFormat::png)
  {
    double peak = 0.0;
    auto scan = [&](const ImageFrame& f) {
      for (double v : f.pixels())
        peak = std::max(peak, v);
    };
    for (const auto& f : stack.stripes)
      scan(f);
    scan(stack.reference);
    scan(stack.dark);
    scale = peak > 0.0 ? peak / 65535.0 : 1.0;
  }
  auto write = [&](const ImageFrame& f, const std::string& name) {
    if (format == ImageFormat::png)
      write_png16(f, directory / name, scale);
    else
      write_tiff(f, directory / name);
  };

  nlohmann::ordered_json j;
  j["format"] = format == ImageFormat::png ? "png16" : "tiff32f";
  j["png_scale"] = scale;
  j["config_hash"] = m.config_hash;
  j["period_nm"] = m.period_nm;
  j["grating_step_nm"] = m.grating_step_nm;
  j["adsorber_step_um"] = m.adsorber_step_um;
  j["pixel_pitch_um"] = m.pixel_pitch_um;
  j["frame_width_um"] = m.frame_width_um;
  j["height_min_um"] = m.height_min_um;
  j["exposure_per_stripe_s"] = m.exposure_per_stripe_s;
  const std::string ext = format == ImageFormat::png ? ".png" : ".tiff";
  j["reference"] = "reference" + ext;
  j["dark"] = "dark" + ext;
  write(stack.reference, "reference" + ext);
  write(stack.dark, "dark" + ext);
  auto stripes = nlohmann::ordered_json::array();
  for (int i = 0; i < static_cast<int>(stack.stripes.size()); ++i)
  {
    const auto name = stripe_name(i, format);
    write(stack.stripes[i], name);
    nlohmann::ordered_json s;
    s["index"] = i;
    s["file"] = name;
    s["grating_position_nm"] = i * m.grating_step_nm;
    s["adsorber_position_um"] = i * m.adsorber_step_um;
    s["exposure_s"] = m.exposure_per_stripe_s;
    s["start_time_s"] = i * m.exposure_per_stripe_s;
    stripes.push_back(s);
  }
  j["stripes"] = stripes;
  std::ofstream out(directory / "stack.json");
  if (!out)
    throw DataError("cannot write stack sidecar in " + directory.string());
  out << j.dump(2) << "\n";
}

RawStack read_stack(const std::filesystem::path& directory)
{
  const auto sidecar = directory / "stack.json";
  std::ifstream in(sidecar);
  if (!in)
    throw DataError("stack sidecar not found: " + sidecar.string());
  nlohmann::json j;
  try
  {
    in >> j;
  }
  catch (const nlohmann::json::exception& e)
  {
    throw DataError("malformed stack sidecar: " + std::string(e.what()));
  }

  RawStack out;
  auto& m = out.metadata;
  const auto format = require_string(j, "format");
  if (format != "png16" && format != "tiff32f")
    throw DataError("unknown image format '" + format + "' in sidecar");
  const double scale = require_number(j, "png_scale");
  m.period_nm = require_number(j, "period_nm");
  m.grating_step_nm = require_number(j, "grating_step_nm");
  m.adsorber_step_um = require_number(j, "adsorber_step_um");
  m.pixel_pitch_um = require_number(j, "pixel_pitch_um");
  m.frame_width_um = require_number(j, "frame_width_um");
  m.height_min_um = require_number(j, "height_min_um");
  m.exposure_per_stripe_s = require_number(j, "exposure_per_stripe_s");
  if (j.contains("config_hash") && j["config_hash"].is_string())
    m.config_hash = j["config_hash"].get<std::string>();
  if (!(m.period_nm > 0.0 && m.grating_step_nm > 0.0 && m.pixel_pitch_um > 0.0))
    throw DataError("stack sidecar holds non-positive geometry");

  auto load = [&](const std::string& name, FrameKind kind) {
    const auto path = directory / name;
    return format == "png16" ? read_png16(path, scale, m.pixel_pitch_um, kind)
                             : read_tiff(path, m.pixel_pitch_um, kind);
  };
  auto place = [&](ImageFrame& f, int stripe) {
    f.origin_x_um = stripe * m.adsorber_step_um - 0.5 * m.frame_width_um;
    f.origin_y_um = m.height_min_um;
  };
  out.reference = load(require_string(j, "reference"), FrameKind::reference);
  out.dark = load(require_string(j, "dark"), FrameKind::dark);
  place(out.reference, 0);
  place(out.dark, 0);
  if (!out.reference.same_shape(out.dark))
    throw DataError("reference and dark frames differ in shape");

  if (!j.contains("stripes") || !j["stripes"].is_array() || j["stripes"].empty())
    throw DataError("stack sidecar lists no stripes");
  int expected = 0;
  for (const auto& s : j["stripes"])
  {
    const int index = static_cast<int>(require_number(s, "index"));
    if (index != expected)
      throw DataError("stack sidecar stripes are not in exposure order");
    if (std::abs(require_number(s, "grating_position_nm") - index * m.grating_step_nm) > 1e-6 ||
        std::abs(require_number(s, "adsorber_position_um") - index * m.adsorber_step_um) > 1e-6)
      throw DataError("stripe " + std::to_string(index) + " positions disagree with the step sizes");
    ++expected;
    ImageFrame frame;
    try
    {
      frame = load(require_string(s, "file"), FrameKind::fluorescence);
      if (!frame.same_shape(out.reference))
        throw DataError("shape differs from the reference frame");
    }
    catch (const DataError& e)
    {
      out.problems.push_back("stripe " + std::to_string(index) + ": " + e.what());
      frame = ImageFrame(out.reference.width(), out.reference.height(), m.pixel_pitch_um, FrameKind::fluorescence);
      for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x)
          frame.set_valid(x, y, false);
    }
    place(frame, index);
    out.stripes.push_back(std::move(frame));
  }
  m.n_stripes = expected;
  return out;
}

} // namespace talbot::imaging
