#include "talbot/app/commands.hpp"

#include "talbot/app/csv.hpp"
#include "talbot/app/svg.hpp"
#include "talbot/constants.hpp"
#include "talbot/error.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace talbot::app
{

namespace
{

using constants::pi;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::ostream& log_of(const CommandContext& ctx)
{
  static std::ofstream sink;
  return ctx.log != nullptr ? *ctx.log : sink;
}

std::vector<double> to_metres(const std::vector<double>& um)
{
  std::vector<double> out;
  for (double h : um)
    out.push_back(h * 1e-6);
  return out;
}

/// Scattering model with the reference count fixed at the most probable
/// height, so every command uses the same background level.
beamline::ScatteringModel scattering_model(const RunConfig& c)
{
  auto model = c.scattering;
  model.window_m = c.theory.window_m;
  const double h_mp = beamline::most_probable_height(c.theory.window_m, c.geometry, c.source);
  model.reference_count = beamline::deposition_density(h_mp, c.theory.window_m, c.geometry, c.source);
  return model;
}

std::vector<classical::McResult> classical_curve(const RunConfig& c, const std::vector<double>& heights_um)
{
  std::vector<double> velocities;
  for (double h : heights_um)
    velocities.push_back(beamline::velocity_from_height(h * 1e-6, c.geometry));
  classical::MoireOptions o;
  o.n_samples = c.classical.samples;
  o.seed = c.seed;
  o.scan_points = c.classical.scan_points;
  return classical::classical_visibility_curve(c.interferometer, velocities, o);
}

struct QuantumCurve
{
  std::vector<beamline::TheoryPoint> points;
  std::vector<double> visibility;
  std::vector<double> corrected;
  std::vector<double> deposition;
  double reference_count = 0.0;
  double background = 0.0;
};

QuantumCurve quantum_curve(const RunConfig& c, const std::vector<double>& heights_um)
{
  QuantumCurve q;
  q.points = beamline::theory_curve(to_metres(heights_um), c.interferometer, c.geometry, c.source, c.theory);
  for (const auto& p : q.points)
  {
    q.visibility.push_back(p.visibility.sinusoidal);
    q.deposition.push_back(p.deposition);
  }
  const auto model = scattering_model(c);
  q.corrected = beamline::scattering_correction(q.visibility, q.deposition, model);
  q.reference_count = model.reference_count;
  q.background = model.fraction * model.reference_count * model.window_m / model.detector_extent_m;
  return q;
}

std::filesystem::path prepare_out(const CommandContext& ctx)
{
  std::error_code ec;
  std::filesystem::create_directories(ctx.out, ec);
  if (ec)
    throw DataError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
  return ctx.out;
}

struct StackAnalysis
{
  imaging::RawStack raw;
  imaging::StripeStack stack;
  imaging::VisibilityCurve curve;
  imaging::AnalysisOptions options;
};

StackAnalysis analyse_stack(const CommandContext& ctx)
{
  if (ctx.input.empty())
    throw ConfigError("this command needs the stack directory as its argument");
  StackAnalysis a;
  a.raw = imaging::read_stack(ctx.input);
  a.stack = imaging::correct_stack(a.raw);
  a.options.rect_width_um = ctx.config.analysis.rect_width_um;
  a.options.rect_height_um = ctx.config.analysis.rect_height_um;
  a.curve = imaging::visibility_vs_height(a.stack, ctx.config.analysis_heights_um(), ctx.config.geometry, a.options);
  for (const auto& p : a.raw.problems)
    log_of(ctx) << "warning: " << p << "\n";
  return a;
}

int valid_points(const imaging::VisibilityCurve& curve)
{
  int n = 0;
  for (const auto& p : curve.points)
    n += p.ok ? 1 : 0;
  return n;
}

} // namespace

Mode mode_from_string(const std::string& text)
{
  if (text == "quantum")
    return Mode::quantum;
  if (text == "classical")
    return Mode::classical;
  if (text == "both")
    return Mode::both;
  throw ConfigError("mode must be quantum, classical or both");
}

void set_seed(RunConfig& config, std::uint64_t seed)
{
  config.seed = seed;
  config.synthesis.seed = seed;
  config.theory.distribution.seed = seed;
}

void cmd_visibility_curve(const CommandContext& ctx)
{
  const auto& c = ctx.config;
  const auto hash = config_hash(c);
  const auto dir = prepare_out(ctx);
  const auto heights = c.analysis_heights_um();
  const bool quantum = ctx.mode != Mode::classical;
  const bool shadow = ctx.mode != Mode::quantum;

  QuantumCurve q;
  if (quantum)
    q = quantum_curve(c, heights);
  std::vector<classical::McResult> mc;
  if (shadow)
    mc = classical_curve(c, heights);

  imaging::VisibilityCurve measured;
  if (!c.analysis.measured_csv.empty())
    measured = read_visibility_csv(c.analysis.measured_csv);

  std::vector<std::string> columns{"height_um", "velocity_mps"};
  if (quantum)
    columns.insert(columns.end(), {"mean_velocity_mps", "relative_spread", "deposition", "quantum", "quantum_exact",
                                   "quantum_corrected"});
  if (shadow)
    columns.insert(columns.end(), {"classical", "classical_err"});
  CsvWriter csv(dir / "visibility_vs_height.csv", "visibility-curve", hash, columns);
  if (!c.analysis.measured_csv.empty())
    csv.comment("measured", c.analysis.measured_csv);
  for (std::size_t i = 0; i < heights.size(); ++i)
  {
    std::vector<double> row{heights[i], beamline::velocity_from_height(heights[i] * 1e-6, c.geometry)};
    if (quantum)
    {
      const auto& p = q.points[i];
      row.insert(row.end(), {p.mean_velocity, p.relative_spread, p.deposition, p.visibility.sinusoidal,
                             p.visibility.exact, q.corrected[i]});
    }
    if (shadow)
      row.insert(row.end(), {mc[i].visibility, mc[i].statistical_error});
    csv.row(row);
  }

  Plot plot{"Visibility vs deposition height", "height (um)", "visibility", {}};
  if (quantum)
  {
    plot.series.push_back({"quantum", heights, q.visibility, {}, "#1f77b4", true});
    plot.series.push_back({"quantum + scattering", heights, q.corrected, {}, "#1f77b4", false});
  }
  if (shadow)
  {
    Series s{"classical", heights, {}, {}, "#2ca02c", false};
    for (const auto& r : mc)
    {
      s.y.push_back(r.visibility);
      s.error.push_back(r.statistical_error);
    }
    plot.series.push_back(s);
  }
  if (!measured.points.empty())
  {
    Series s{"measured", {}, {}, {}, "#d62728", false, false, true};
    for (const auto& p : measured.points)
    {
      s.x.push_back(p.height_um);
      s.y.push_back(p.ok ? p.visibility : kNan);
      s.error.push_back(p.visibility_err);
    }
    plot.series.push_back(s);
  }
  write_svg(dir / "visibility_vs_height.svg", {plot});
  log_of(ctx) << fmt::format("visibility-curve: {} heights written to {}\n", heights.size(),
                             (dir / "visibility_vs_height.csv").string());
}

void cmd_synthesize(const CommandContext& ctx)
{
  const auto& c = ctx.config;
  const auto hash = config_hash(c);
  const auto dir = prepare_out(ctx);

  // injected deposition on a 50 um table over the imaged heights
  const double first = std::max(c.synthesis.height_min_um, c.geometry.height_reference_offset_m * 1e6 + 50.0);
  std::vector<double> table;
  for (double h = first; h < c.synthesis.height_max_um; h += 50.0)
    table.push_back(h);
  table.push_back(c.synthesis.height_max_um);

  std::vector<double> flux, vis, phase, model;
  const auto q = quantum_curve(c, table);
  if (ctx.mode == Mode::classical)
  {
    for (const auto& r : classical_curve(c, table))
      model.push_back(r.visibility);
  }
  else
    model = q.visibility;
  for (std::size_t i = 0; i < table.size(); ++i)
  {
    const double dep = q.deposition[i];
    flux.push_back((dep + q.background) / q.reference_count);
    vis.push_back(dep + q.background > 0.0 ? model[i] * dep / (dep + q.background) : 0.0);
    phase.push_back(0.0);
  }
  const auto profile = imaging::DepositionProfile::table(table, flux, vis, phase);
  auto raw = imaging::synthesize_stack(profile, c.synthesis);
  raw.metadata.config_hash = hash;
  imaging::write_stack(raw, dir / "stack", c.image_format);

  CsvWriter csv(dir / "deposition_profile.csv", "synthesize", hash,
                {"height_um", "velocity_mps", "flux", "visibility_model", "visibility_injected"});
  for (std::size_t i = 0; i < table.size(); ++i)
    csv.row({table[i], beamline::velocity_from_height(table[i] * 1e-6, c.geometry), flux[i], model[i], vis[i]});
  log_of(ctx) << fmt::format("synthesize: {} stripes written to {}\n", raw.stripes.size(), (dir / "stack").string());
}

void cmd_analyze(const CommandContext& ctx)
{
  const auto& c = ctx.config;
  const auto hash = config_hash(c);
  const auto dir = prepare_out(ctx);
  const auto a = analyse_stack(ctx);
  write_visibility_csv(a.curve, dir / "visibility_curve.csv", "analyze", hash);

  CsvWriter fringes(dir / "fringes.csv", "analyze", hash,
                    {"height_um", "stripe", "grating_position_nm", "value", "model"});
  std::vector<Plot> panels;
  for (const auto& p : a.curve.points)
  {
    if (!p.ok)
      continue;
    Series data{"", {}, {}, {}, "#000000", false, false, true};
    Series fit{"", {}, {}, {}, "#d62728", false};
    for (int i = 0; i < a.stack.n_stripes(); ++i)
    {
      double value = kNan;
      try
      {
        value = imaging::integrate_stripe(a.stack.frames[i], a.stack.adsorber_position_um(i), p.height_um,
                                          a.options.rect_width_um, a.options.rect_height_um)
                    .value;
      }
      catch (const Error&)
      {
      }
      const double x = a.stack.grating_position_nm(i);
      const double m = p.fit.a0 + p.fit.amplitude * std::cos(2.0 * pi * x / a.stack.period_nm + p.fit.phase);
      fringes.row({p.height_um, static_cast<double>(i), x, value, m});
      data.x.push_back(x);
      data.y.push_back(value);
      fit.x.push_back(x);
      fit.y.push_back(m);
    }
    panels.push_back({fmt::format("h = {:.0f} um, V = {:.3f}", p.height_um, p.visibility), "grating position (nm)",
                      "N~", {data, fit}});
  }
  write_svg(dir / "fringes.svg", panels, 6, 320, 220);

  std::ofstream report(dir / "analysis_report.txt", std::ios::binary);
  if (!report)
    throw DataError("cannot write analysis report");
  report << "config_hash = \"" << hash << "\"\n";
  report << "stack = \"" << ctx.input.generic_string() << "\"\n";
  report << "stripes = " << a.stack.n_stripes() << "\n";
  report << "magnification = " << format_number(a.stack.magnification()) << "\n";
  report << "span_periods = " << format_number(a.stack.span_periods()) << "\n";
  report << "unreadable_stripes = " << a.raw.problems.size() << "\n";
  report << "heights = " << a.curve.points.size() << "\n";
  report << "heights_fitted = " << valid_points(a.curve) << "\n";

  report << "\n[phase_gradient]\n";
  try
  {
    const auto g = imaging::phase_gradient(a.curve);
    const double tilt = imaging::tilt_from_phase_gradient(g.slope, a.stack.period_nm * 1e-9);
    report << "slope_rad_per_mm = " << format_number(g.slope * 1e-3) << "\n";
    report << "slope_error_rad_per_mm = " << format_number(g.slope_error * 1e-3) << "\n";
    report << "slope_pi_per_mm = " << format_number(g.slope * 1e-3 / pi) << "\n";
    report << "tilt_urad = " << format_number(tilt * 1e6) << "\n";
    report << "tilt_error_urad = "
           << format_number(imaging::tilt_from_phase_gradient(g.slope_error, a.stack.period_nm * 1e-9) * 1e6) << "\n";
    report << "unwrap_ambiguous = " << (g.unwrap_ambiguous ? "true" : "false") << "\n";
    log_of(ctx) << fmt::format("phase gradient {:.4g} pi/mm, tilt {:.4g} urad\n", g.slope * 1e-3 / pi, tilt * 1e6);
  }
  catch (const Error& e)
  {
    report << "status = \"" << e.what() << "\"\n";
  }

  report << "\n[drift]\n";
  try
  {
    const auto blocks = imaging::block_phases(a.stack, c.analysis_heights_um(), c.analysis.drift_blocks, a.options);
    const auto d = imaging::drift_bound(blocks, a.stack.duration_s(), a.stack.period_nm);
    report << "blocks = " << blocks.size() << "\n";
    report << "duration_s = " << format_number(a.stack.duration_s()) << "\n";
    report << "displacement_nm = " << format_number(d.displacement_nm) << "\n";
    report << "displacement_error_nm = " << format_number(d.displacement_error_nm) << "\n";
    report << "bound_nm = " << format_number(d.bound_nm) << "\n";
    report << "max_discrepancy_nm = " << format_number(d.max_discrepancy_nm) << "\n";
    report << "trend_detected = " << (d.trend_detected ? "true" : "false") << "\n";
    log_of(ctx) << fmt::format("drift bound {:.3g} nm over {:.3g} h\n", d.bound_nm, a.stack.duration_s() / 3600.0);
  }
  catch (const Error& e)
  {
    report << "status = \"" << e.what() << "\"\n";
  }

  report << "\n[failures]\n";
  for (const auto& p : a.curve.points)
    if (!p.ok || !p.message.empty())
      report << fmt::format("\"{}\" = \"{}\"\n", format_number(p.height_um), p.message);
  for (const auto& p : a.raw.problems)
    report << fmt::format("\"read\" = \"{}\"\n", p);

  log_of(ctx) << fmt::format("analyze: {}/{} heights fitted, results in {}\n", valid_points(a.curve),
                             a.curve.points.size(), dir.string());
  if (valid_points(a.curve) == 0)
    throw DataError("no height could be fitted");
}

void cmd_tilt(const CommandContext& ctx)
{
  const auto hash = config_hash(ctx.config);
  const auto dir = prepare_out(ctx);
  const auto a = analyse_stack(ctx);
  const auto g = imaging::phase_gradient(a.curve);
  const double d = a.stack.period_nm * 1e-9;
  const double tilt = imaging::tilt_from_phase_gradient(g.slope, d);
  CsvWriter csv(dir / "tilt.csv", "tilt", hash, {"height_um", "phase_rad", "phase_unwrapped_rad", "phase_err"});
  csv.comment("slope_rad_per_mm", format_number(g.slope * 1e-3));
  csv.comment("slope_error_rad_per_mm", format_number(g.slope_error * 1e-3));
  csv.comment("tilt_urad", format_number(tilt * 1e6));
  csv.comment("tilt_error_urad", format_number(imaging::tilt_from_phase_gradient(g.slope_error, d) * 1e6));
  csv.comment("unwrap_ambiguous", g.unwrap_ambiguous ? "true" : "false");
  std::size_t k = 0;
  for (const auto& p : a.curve.points)
    if (p.ok)
      csv.row({p.height_um, p.phase_rad, g.unwrapped[k++], p.phase_err});
  log_of(ctx) << fmt::format("phase gradient {:.5g} +- {:.2g} rad/mm ({:.4g} pi/mm), tilt {:.4g} +- {:.2g} urad{}\n",
                             g.slope * 1e-3, g.slope_error * 1e-3, g.slope * 1e-3 / pi, tilt * 1e6,
                             imaging::tilt_from_phase_gradient(g.slope_error, d) * 1e6,
                             g.unwrap_ambiguous ? " (unwrapping ambiguous)" : "");
}

void cmd_drift(const CommandContext& ctx)
{
  const auto& c = ctx.config;
  const auto hash = config_hash(c);
  const auto dir = prepare_out(ctx);
  if (ctx.input.empty())
    throw ConfigError("drift needs the stack directory as its argument");
  const auto raw = imaging::read_stack(ctx.input);
  for (const auto& p : raw.problems)
    log_of(ctx) << "warning: " << p << "\n";
  const auto stack = imaging::correct_stack(raw);
  imaging::AnalysisOptions o;
  o.rect_width_um = c.analysis.rect_width_um;
  o.rect_height_um = c.analysis.rect_height_um;
  const auto blocks = imaging::block_phases(stack, c.analysis_heights_um(), c.analysis.drift_blocks, o);
  const auto d = imaging::drift_bound(blocks, stack.duration_s(), stack.period_nm);
  CsvWriter csv(dir / "drift.csv", "drift", hash, {"block", "time_s", "phase_rad", "phase_err"});
  csv.comment("displacement_nm", format_number(d.displacement_nm));
  csv.comment("displacement_error_nm", format_number(d.displacement_error_nm));
  csv.comment("bound_nm", format_number(d.bound_nm));
  csv.comment("max_discrepancy_nm", format_number(d.max_discrepancy_nm));
  csv.comment("trend_detected", d.trend_detected ? "true" : "false");
  for (std::size_t b = 0; b < blocks.size(); ++b)
    csv.row({static_cast<double>(b), blocks[b].time_s, blocks[b].phase, blocks[b].phase_error});
  log_of(ctx) << fmt::format("drift {:.3g} +- {:.2g} nm over {:.3g} h, bound {:.3g} nm, trend {}\n",
                             d.displacement_nm, d.displacement_error_nm, stack.duration_s() / 3600.0, d.bound_nm,
                             d.trend_detected ? "detected" : "not detected");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Talbot-Lau interferometer simulation and fluorescence-image analysis", "talbot"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::uint64_t samples = 0;
  std::string mode = "both";
  std::string input;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file (built-in defaults when omitted)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--samples", samples, "classical Monte Carlo samples per point (overrides the config)");
    sub->add_option("--mode", mode, "model selection")
        ->check(CLI::IsMember({"quantum", "classical", "both"}))
        ->capture_default_str();
  };
  auto* curve = app.add_subcommand("visibility-curve", "quantum, classical and corrected visibility vs height");
  auto* synth = app.add_subcommand("synthesize", "synthetic stripe image stack with sidecar");
  auto* analyze = app.add_subcommand("analyze", "visibility curve, fringes, tilt and drift of a stack");
  auto* tilt = app.add_subcommand("tilt", "phase gradient and G3 tilt of a stack");
  auto* drift = app.add_subcommand("drift", "grating drift bound of a stack");
  for (auto* sub : {curve, synth, analyze, tilt, drift})
    common(sub);
  for (auto* sub : {analyze, tilt, drift})
    sub->add_option("stack", input, "stack directory (with stack.json)")->required();

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::config_error;
  }

  try
  {
    CommandContext ctx;
    ctx.config = config_path.empty() ? parse_config("") : load_config(config_path);
    for (auto* sub : {curve, synth, analyze, tilt, drift})
      if (sub->parsed())
      {
        if (sub->count("--seed") > 0)
          set_seed(ctx.config, seed);
        if (sub->count("--samples") > 0)
        {
          if (samples == 0)
            throw ConfigError("--samples must be positive");
          ctx.config.classical.samples = samples;
        }
      }
    ctx.out = out_dir;
    ctx.mode = mode_from_string(mode);
    ctx.input = input;
    ctx.log = &out;
    if (curve->parsed())
      cmd_visibility_curve(ctx);
    else if (synth->parsed())
      cmd_synthesize(ctx);
    else if (analyze->parsed())
      cmd_analyze(ctx);
    else if (tilt->parsed())
      cmd_tilt(ctx);
    else
      cmd_drift(ctx);
    return exit_code::ok;
  }
  catch (const ConfigError& e)
  {
    err << "config error: " << e.what() << "\n";
    return exit_code::config_error;
  }
  catch (const DomainError& e)
  {
    err << "invalid parameter: " << e.what() << "\n";
    return exit_code::config_error;
  }
  catch (const DataError& e)
  {
    err << "data error: " << e.what() << "\n";
    return exit_code::data_error;
  }
  catch (const std::filesystem::filesystem_error& e)
  {
    err << "data error: " << e.what() << "\n";
    return exit_code::data_error;
  }
  catch (const NumericalError& e)
  {
    err << "numerical failure: " << e.what() << "\n";
    return exit_code::numerical_failure;
  }
  catch (const std::exception& e)
  {
    err << "numerical failure: " << e.what() << "\n";
    return exit_code::numerical_failure;
  }
}

} // namespace talbot::app
