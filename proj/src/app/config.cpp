#include "talbot/app/config.hpp"

#include "talbot/error.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <variant>

namespace talbot::app
{

namespace
{

using Value = std::variant<double, bool, std::string>;

/// One configuration key: how to read it from and write it into RunConfig.
struct Key
{
  std::string section;
  std::string name;
  std::function<Value(const RunConfig&)> get;
  std::function<void(RunConfig&, const Value&, int line)> set;
};

std::string describe(const Value& v)
{
  if (std::holds_alternative<double>(v))
    return "number";
  if (std::holds_alternative<bool>(v))
    return "boolean";
  return "string";
}

double as_number(const Value& v, const std::string& key, int line)
{
  if (!std::holds_alternative<double>(v))
    throw ConfigError(key + " expects a number, got a " + describe(v), line);
  return std::get<double>(v);
}

/// Real-valued key with an inclusive lower bound (and strict when `strict`).
/// The stored value is the written one divided by `per_unit` (1e6 for um -> m).
Key real(std::string section, std::string name, std::function<double&(RunConfig&)> ref, double lower = -1e300,
         bool strict = false, double per_unit = 1.0)
{
  const std::string full = section + "." + name;
  return Key{section, name,
             [ref, per_unit](const RunConfig& c) { return Value(ref(const_cast<RunConfig&>(c)) * per_unit); },
             [ref, full, lower, strict, per_unit](RunConfig& c, const Value& v, int line) {
               const double x = as_number(v, full, line);
               if (!std::isfinite(x) || (strict ? !(x > lower) : !(x >= lower)))
                 throw ConfigError(fmt::format("{} must be {} {}", full, strict ? ">" : ">=", lower), line);
               ref(c) = x / per_unit;
             }};
}

template <class Int>
Key integer(std::string section, std::string name, std::function<Int&(RunConfig&)> ref, long long lower)
{
  const std::string full = section + "." + name;
  return Key{section, name,
             [ref](const RunConfig& c) { return Value(static_cast<double>(ref(const_cast<RunConfig&>(c)))); },
             [ref, full, lower](RunConfig& c, const Value& v, int line) {
               const double x = as_number(v, full, line);
               if (x != std::floor(x) || x < static_cast<double>(lower) || x > 9.007199254740992e15)
                 throw ConfigError(fmt::format("{} must be an integer >= {}", full, lower), line);
               ref(c) = static_cast<Int>(x);
             }};
}

Key boolean(std::string section, std::string name, std::function<bool&(RunConfig&)> ref)
{
  const std::string full = section + "." + name;
  return Key{section, name, [ref](const RunConfig& c) { return Value(ref(const_cast<RunConfig&>(c))); },
             [ref, full](RunConfig& c, const Value& v, int line) {
               if (!std::holds_alternative<bool>(v))
                 throw ConfigError(full + " expects true or false, got a " + describe(v), line);
               ref(c) = std::get<bool>(v);
             }};
}

Key text(std::string section, std::string name, std::function<Value(const RunConfig&)> get,
         std::function<void(RunConfig&, const std::string&, int)> set)
{
  const std::string full = section + "." + name;
  return Key{section, name, std::move(get), [set, full](RunConfig& c, const Value& v, int line) {
               if (!std::holds_alternative<std::string>(v))
                 throw ConfigError(full + " expects a quoted string, got a " + describe(v), line);
               set(c, std::get<std::string>(v), line);
             }};
}

const std::vector<Key>& registry()
{
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(integer<std::uint64_t>("", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }, 0));

    k.push_back(text(
        "molecule", "name", [](const RunConfig& c) { return Value(c.interferometer.molecule.name); },
        [](RunConfig& c, const std::string& s, int) { c.interferometer.molecule.name = s; }));
    k.push_back(real("molecule", "mass_amu", [](RunConfig& c) -> double& { return c.interferometer.molecule.mass_amu; }, 0.0, true));
    k.push_back(real("molecule", "c3", [](RunConfig& c) -> double& { return c.interferometer.molecule.c3; }, 0.0));

    auto grating = [&k](const std::string& prefix, auto pick) {
      k.push_back(real("gratings", prefix + "open_fraction", [pick](RunConfig& c) -> double& { return pick(c).open_fraction; }, 0.0, true));
    };
    k.push_back(Key{"gratings", "open_fraction",
                    [](const RunConfig& c) { return Value(c.interferometer.g2.open_fraction); },
                    [](RunConfig& c, const Value& v, int line) {
                      const double f = as_number(v, "gratings.open_fraction", line);
                      if (!(f > 0.0 && f <= 1.0))
                        throw ConfigError("gratings.open_fraction must lie in (0, 1]", line);
                      c.interferometer.g1.open_fraction = c.interferometer.g2.open_fraction = c.interferometer.g3.open_fraction = f;
                    }});
    k.push_back(real("gratings", "period_nm", [](RunConfig& c) -> double& { return c.interferometer.g2.period_nm; }, 0.0, true));
    k.push_back(real("gratings", "thickness_nm", [](RunConfig& c) -> double& { return c.interferometer.g2.thickness_nm; }, 0.0, true));
    grating("g1_", [](RunConfig& c) -> physics::GratingSpec& { return c.interferometer.g1; });
    grating("g2_", [](RunConfig& c) -> physics::GratingSpec& { return c.interferometer.g2; });
    grating("g3_", [](RunConfig& c) -> physics::GratingSpec& { return c.interferometer.g3; });
    k.push_back(real("gratings", "phase_cap", [](RunConfig& c) -> double& { return c.interferometer.phase_cap; }, 0.0, true));

    k.push_back(real("interferometer", "separation_m", [](RunConfig& c) -> double& { return c.interferometer.separation_m; }, 0.0, true));
    k.push_back(integer<int>("interferometer", "n_max", [](RunConfig& c) -> int& { return c.truncation.n_max; }, 1));
    k.push_back(integer<int>("interferometer", "m_max", [](RunConfig& c) -> int& { return c.truncation.m_max; }, 1));
    k.push_back(boolean("interferometer", "complete_background", [](RunConfig& c) -> bool& { return c.truncation.complete_background; }));

    k.push_back(real("beamline", "oven_slit_width_um", [](RunConfig& c) -> double& { return c.geometry.oven_slit_width_m; }, 0.0, false, 1e6));
    k.push_back(real("beamline", "selection_slit_width_um", [](RunConfig& c) -> double& { return c.geometry.selection_slit_width_m; }, 0.0, false, 1e6));
    k.push_back(real("beamline", "selection_slit_z_m", [](RunConfig& c) -> double& { return c.geometry.selection_slit_z_m; }, 0.0, true));
    k.push_back(real("beamline", "detector_z_m", [](RunConfig& c) -> double& { return c.geometry.detector_z_m; }, 0.0, true));
    k.push_back(real("beamline", "gravity", [](RunConfig& c) -> double& { return c.geometry.gravity; }, 0.0, true));
    k.push_back(real("beamline", "height_offset_um", [](RunConfig& c) -> double& { return c.geometry.height_reference_offset_m; }, -1e300, false, 1e6));
    k.push_back(real("beamline", "window_um", [](RunConfig& c) -> double& { return c.theory.window_m; }, 0.0, true, 1e6));
    k.push_back(integer<std::uint64_t>("beamline", "samples", [](RunConfig& c) -> std::uint64_t& { return c.theory.distribution.n_samples; }, 1));
    k.push_back(real("beamline", "bin_width_mps", [](RunConfig& c) -> double& { return c.theory.distribution.bin_width_mps; }, 0.0, true));
    k.push_back(text(
        "beamline", "averaging",
        [](const RunConfig& c) {
          return Value(std::string(c.theory.mode == beamline::AveragingMode::average_signal ? "signal" : "visibility"));
        },
        [](RunConfig& c, const std::string& s, int line) {
          if (s == "signal")
            c.theory.mode = beamline::AveragingMode::average_signal;
          else if (s == "visibility")
            c.theory.mode = beamline::AveragingMode::average_visibility;
          else
            throw ConfigError("beamline.averaging must be \"visibility\" or \"signal\"", line);
        }));

    k.push_back(real("source", "temperature_k", [](RunConfig& c) -> double& { return c.source.temperature_k; }, 0.0, true));

    k.push_back(real("scattering", "fraction", [](RunConfig& c) -> double& { return c.scattering.fraction; }, 0.0));
    k.push_back(real("scattering", "detector_extent_um", [](RunConfig& c) -> double& { return c.scattering.detector_extent_m; }, 0.0, true, 1e6));

    k.push_back(integer<std::uint64_t>("classical", "samples", [](RunConfig& c) -> std::uint64_t& { return c.classical.samples; }, 1));
    k.push_back(integer<int>("classical", "scan_points", [](RunConfig& c) -> int& { return c.classical.scan_points; }, 4));

    auto& s = k;
    auto syn = [](auto member) { return [member](RunConfig& c) -> double& { return c.synthesis.*member; }; };
    using O = imaging::SynthesisOptions;
    s.push_back(integer<int>("imaging", "n_stripes", [](RunConfig& c) -> int& { return c.synthesis.n_stripes; }, 1));
    s.push_back(real("imaging", "grating_step_nm", syn(&O::grating_step_nm), 0.0, true));
    s.push_back(real("imaging", "adsorber_step_um", syn(&O::adsorber_step_um), 0.0, true));
    s.push_back(real("imaging", "exposure_s", syn(&O::exposure_per_stripe_s), 0.0));
    s.push_back(real("imaging", "density_rate", syn(&O::density_rate), 0.0));
    s.push_back(real("imaging", "pixel_pitch_um", syn(&O::pixel_pitch_um), 0.0, true));
    s.push_back(real("imaging", "frame_width_um", syn(&O::frame_width_um), 0.0, true));
    s.push_back(real("imaging", "stripe_width_um", syn(&O::stripe_width_um), 0.0, true));
    s.push_back(real("imaging", "height_min_um", syn(&O::height_min_um), 0.0));
    s.push_back(real("imaging", "height_max_um", syn(&O::height_max_um), 0.0, true));
    s.push_back(real("imaging", "tilt_urad", syn(&O::tilt_rad), -1e300, false, 1e6));
    s.push_back(real("imaging", "drift_nm", syn(&O::drift_nm), -1e300));
    s.push_back(real("imaging", "efficiency", syn(&O::efficiency), 0.0));
    s.push_back(real("imaging", "background", syn(&O::background), 0.0, true));
    s.push_back(real("imaging", "illumination", syn(&O::illumination), 0.0, true));
    s.push_back(real("imaging", "collection", syn(&O::collection), 0.0, true));
    s.push_back(real("imaging", "dark_level", syn(&O::dark_level), 0.0));
    s.push_back(real("imaging", "illumination_rolloff", syn(&O::illumination_rolloff), 0.0));
    s.push_back(real("imaging", "collection_rolloff", syn(&O::collection_rolloff), 0.0));
    s.push_back(boolean("imaging", "shot_noise", [](RunConfig& c) -> bool& { return c.synthesis.noise.shot; }));
    s.push_back(real("imaging", "gain", [](RunConfig& c) -> double& { return c.synthesis.noise.gain; }, 0.0, true));
    s.push_back(real("imaging", "read_noise", [](RunConfig& c) -> double& { return c.synthesis.noise.read_sigma; }, 0.0));
    s.push_back(boolean("imaging", "noisy_calibration", [](RunConfig& c) -> bool& { return c.synthesis.noisy_calibration; }));
    s.push_back(text(
        "imaging", "format",
        [](const RunConfig& c) { return Value(std::string(c.image_format == imaging::ImageFormat::png ? "png" : "tiff")); },
        [](RunConfig& c, const std::string& v, int line) {
          if (v == "png")
            c.image_format = imaging::ImageFormat::png;
          else if (v == "tiff")
            c.image_format = imaging::ImageFormat::tiff;
          else
            throw ConfigError("imaging.format must be \"png\" or \"tiff\"", line);
        }));

    auto an = [](auto member) { return [member](RunConfig& c) -> double& { return c.analysis.*member; }; };
    using A = AnalysisSettings;
    s.push_back(real("analysis", "heights_min_um", an(&A::heights_min_um), 0.0));
    s.push_back(real("analysis", "heights_max_um", an(&A::heights_max_um), 0.0, true));
    s.push_back(integer<int>("analysis", "n_heights", [](RunConfig& c) -> int& { return c.analysis.n_heights; }, 1));
    s.push_back(real("analysis", "rect_width_um", an(&A::rect_width_um), 0.0, true));
    s.push_back(real("analysis", "rect_height_um", an(&A::rect_height_um), 0.0, true));
    s.push_back(integer<int>("analysis", "drift_blocks", [](RunConfig& c) -> int& { return c.analysis.drift_blocks; }, 2));
    s.push_back(text(
        "analysis", "measured_csv", [](const RunConfig& c) { return Value(c.analysis.measured_csv); },
        [](RunConfig& c, const std::string& v, int) { c.analysis.measured_csv = v; }));
    return k;
  }();
  return keys;
}

std::string trim(const std::string& s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s)
{
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i)
  {
    if (s[i] == '"')
      quoted = !quoted;
    else if (s[i] == '#' && !quoted)
      return s.substr(0, i);
  }
  return s;
}

Value parse_value(const std::string& raw, int line)
{
  if (raw.empty())
    throw ConfigError("missing value", line);
  if (raw.front() == '"')
  {
    if (raw.size() < 2 || raw.back() != '"' || raw.find('"', 1) != raw.size() - 1)
      throw ConfigError("unterminated or malformed string " + raw, line);
    return raw.substr(1, raw.size() - 2);
  }
  if (raw == "true")
    return true;
  if (raw == "false")
    return false;
  std::string digits;
  for (char ch : raw)
    if (ch != '_')
      digits += ch;
  double x = 0.0;
  const auto* end = digits.data() + digits.size();
  const auto [ptr, ec] = std::from_chars(digits.data(), end, x);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("cannot parse value '" + raw + "'", line);
  return x;
}

std::string format_value(const Value& v)
{
  if (const auto* d = std::get_if<double>(&v))
    return fmt::format("{:.15g}", *d);
  if (const auto* b = std::get_if<bool>(&v))
    return *b ? "true" : "false";
  return "\"" + std::get<std::string>(v) + "\"";
}

} // namespace

std::vector<double> RunConfig::analysis_heights_um() const
{
  std::vector<double> out;
  const int n = analysis.n_heights;
  for (int i = 0; i < n; ++i)
    out.push_back(n == 1 ? analysis.heights_min_um
                         : analysis.heights_min_um + (analysis.heights_max_um - analysis.heights_min_um) * i / (n - 1));
  return out;
}

RunConfig parse_config(const std::string& text)
{
  RunConfig config;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw))
  {
    ++line;
    const auto content = trim(strip_comment(raw));
    if (content.empty())
      continue;
    if (content.front() == '[')
    {
      if (content.back() != ']')
        throw ConfigError("malformed section header " + content, line);
      section = trim(content.substr(1, content.size() - 2));
      bool known = false;
      for (const auto& k : registry())
        known = known || k.section == section;
      if (!known || section.empty())
        throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value, got '" + content + "'", line);
    const auto name = trim(content.substr(0, eq));
    const auto value = parse_value(trim(content.substr(eq + 1)), line);
    const Key* key = nullptr;
    for (const auto& k : registry())
      if (k.section == section && k.name == name)
        key = &k;
    const std::string full = section.empty() ? name : section + "." + name;
    if (key == nullptr)
      throw ConfigError("unknown key '" + full + "'", line);
    for (const auto& s : seen)
      if (s == full)
        throw ConfigError("duplicate key '" + full + "'", line);
    seen.push_back(full);
    key->set(config, value, line);
  }
  // all three gratings share period and thickness
  config.interferometer.g1.period_nm = config.interferometer.g3.period_nm = config.interferometer.g2.period_nm;
  config.interferometer.g1.thickness_nm = config.interferometer.g3.thickness_nm = config.interferometer.g2.thickness_nm;
  config.source.mass_amu = config.interferometer.molecule.mass_amu;
  config.synthesis.period_nm = config.interferometer.g2.period_nm;
  config.synthesis.seed = config.seed;
  config.theory.distribution.seed = config.seed;
  config.theory.truncation = config.truncation;
  config.scattering.window_m = config.theory.window_m;
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void validate(const RunConfig& c)
{
  try
  {
    c.interferometer.validate();
    c.geometry.validate();
    c.source.validate();
  }
  catch (const DomainError& e)
  {
    throw ConfigError(e.what());
  }
  if (c.truncation.n_max < 2 * c.truncation.m_max)
    throw ConfigError("interferometer.n_max must be at least 2 * m_max");
  if (c.scattering.fraction >= 1.0)
    throw ConfigError("scattering.fraction must be below 1");
  if (!(c.synthesis.height_max_um > c.synthesis.height_min_um))
    throw ConfigError("imaging.height_max_um must exceed imaging.height_min_um");
  if (c.synthesis.stripe_width_um > c.synthesis.adsorber_step_um)
    throw ConfigError("imaging.stripe_width_um exceeds the adsorber step: stripes would overlap");
  if (c.synthesis.illumination_rolloff >= 1.0 || c.synthesis.collection_rolloff >= 1.0)
    throw ConfigError("imaging roll-offs must be below 1");
  if (!(c.analysis.heights_max_um >= c.analysis.heights_min_um))
    throw ConfigError("analysis.heights_max_um must not be below analysis.heights_min_um");
  if (c.analysis.n_heights > 1 && !(c.analysis.heights_max_um > c.analysis.heights_min_um))
    throw ConfigError("several analysis heights need heights_max_um > heights_min_um");
  if (c.analysis.heights_min_um * 1e-6 <= c.geometry.height_reference_offset_m)
    throw ConfigError("analysis heights must lie below the beamline reference");
  if (c.analysis.rect_width_um > c.synthesis.frame_width_um)
    throw ConfigError("analysis.rect_width_um exceeds imaging.frame_width_um");
}

std::string canonical_text(const RunConfig& config)
{
  std::string out;
  for (const auto& k : registry())
  {
    // the per-grating fractions already carry it
    if (k.section == "gratings" && k.name == "open_fraction")
      continue;
    out += (k.section.empty() ? "" : k.section + ".") + k.name + " = " + format_value(k.get(config)) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& config)
{
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : canonical_text(config))
  {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

} // namespace talbot::app
