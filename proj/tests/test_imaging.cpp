#include <doctest.h>

#include "calibration.hpp"
#include "talbot/beamline.hpp"
#include "talbot/constants.hpp"
#include "talbot/error.hpp"
#include "talbot/imaging.hpp"
#include "talbot/synthesis.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

using namespace talbot;
using namespace talbot::imaging;
using constants::pi;

namespace
{

FrameFields smooth_fields(int w, int h, double density)
{
  FrameFields f;
  f.density = ImageFrame(w, h, 2.0, FrameKind::fluorescence, density);
  f.illumination = ImageFrame(w, h, 2.0, FrameKind::fluorescence);
  f.collection = ImageFrame(w, h, 2.0, FrameKind::fluorescence);
  f.dark = ImageFrame(w, h, 2.0, FrameKind::dark);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      f.illumination.at(x, y) = 800.0 + 10.0 * x - 3.0 * y;
      f.collection.at(x, y) = 0.5 + 0.01 * ((x * 7 + y * 3) % 11);
      f.dark.at(x, y) = 50.0 + (x + 2 * y) % 5;
      f.density.at(x, y) = density * (1.0 + 0.3 * std::cos(0.4 * x));
    }
  f.efficiency = 0.7;
  f.background = 2.0;
  return f;
}

std::vector<double> sinusoid(int n, double a0, double v, double phase, double step, double d)
{
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(a0 * (1.0 + v * std::cos(2.0 * pi * i * step / d + phase)));
  return out;
}

std::vector<double> grating_positions(int n, double step = 100.0)
{
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(i * step);
  return out;
}

SynthesisOptions small_stack()
{
  SynthesisOptions o;
  o.height_min_um = 0.0;
  o.height_max_um = 600.0;
  o.frame_width_um = 120.0;
  return o;
}

std::vector<double> heights_every(double first, double step, int n)
{
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(first + i * step);
  return out;
}

} // namespace

TEST_CASE("forward model special cases")
{
  auto f = smooth_fields(20, 10, 3.0);
  const auto frame = synthesize_frame(f);
  const auto ref = synthesize_reference(f);

  SUBCASE("eta = 0 gives B K I_i + I_c")
  {
    auto g = f;
    g.efficiency = 0.0;
    const auto out = synthesize_frame(g);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 20; ++x)
        CHECK(out.at(x, y) == g.background * g.collection.at(x, y) * g.illumination.at(x, y) + g.dark.at(x, y));
  }
  SUBCASE("N = 0 equals the reference")
  {
    auto g = f;
    g.density = ImageFrame(20, 10, 2.0, FrameKind::fluorescence, 0.0);
    const auto out = synthesize_frame(g);
    CHECK(out.pixels() == ref.pixels());
  }
  SUBCASE("doubling N doubles I_f - I_r")
  {
    auto g = f;
    for (double& v : g.density.pixels())
      v *= 2.0;
    const auto twice = synthesize_frame(g);
    for (std::size_t i = 0; i < twice.pixels().size(); ++i)
      CHECK(twice.pixels()[i] - ref.pixels()[i] ==
            doctest::Approx(2.0 * (frame.pixels()[i] - ref.pixels()[i])).epsilon(1e-12));
  }
  SUBCASE("negative inputs are rejected")
  {
    auto g = f;
    g.density.at(3, 3) = -1.0;
    CHECK_THROWS_AS(synthesize_frame(g), DomainError);
    g = f;
    g.background = -0.1;
    CHECK_THROWS_AS(synthesize_frame(g), DomainError);
  }
  SUBCASE("noise is deterministic under the seed")
  {
    NoiseModel n{true, 5.0, 2.0};
    const auto a = synthesize_frame(f, n, 4);
    const auto b = synthesize_frame(f, n, 4);
    const auto c = synthesize_frame(f, n, 5);
    CHECK(a.pixels() == b.pixels());
    CHECK(a.pixels() != c.pixels());
  }
}

TEST_CASE("correction inverts the forward model")
{
  auto f = smooth_fields(24, 12, 1.5);
  const auto out = correct_frame(synthesize_frame(f), synthesize_reference(f), f.dark);
  CHECK(out.kind() == FrameKind::corrected);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 24; ++x)
    {
      const double expected = f.efficiency / f.background * f.density.at(x, y);
      CHECK(out.at(x, y) == doctest::Approx(expected).epsilon(1e-12));
    }

  SUBCASE("identical frames give zero")
  {
    const auto ref = synthesize_reference(f);
    const auto zero = correct_frame(ref, ref, f.dark);
    for (double v : zero.pixels())
      CHECK(v == 0.0);
  }
  SUBCASE("sinusoidal density keeps its visibility")
  {
    double lo = 1e300, hi = -1e300;
    for (int x = 0; x < 24; ++x)
    {
      lo = std::min(lo, out.at(x, 0));
      hi = std::max(hi, out.at(x, 0));
    }
    double nlo = 1e300, nhi = -1e300;
    for (int x = 0; x < 24; ++x)
    {
      nlo = std::min(nlo, f.density.at(x, 0));
      nhi = std::max(nhi, f.density.at(x, 0));
    }
    CHECK((hi - lo) / (hi + lo) == doctest::Approx((nhi - nlo) / (nhi + nlo)).epsilon(1e-12));
  }
  SUBCASE("dead reference pixels are masked")
  {
    auto ref = synthesize_reference(f);
    ref.at(2, 3) = f.dark.at(2, 3);
    const auto masked = correct_frame(synthesize_frame(f), ref, f.dark);
    CHECK_FALSE(masked.valid(2, 3));
    CHECK(std::isfinite(masked.at(2, 3)));
    CHECK(masked.invalid_count() == 1);
  }
  SUBCASE("shape mismatch")
  {
    ImageFrame other(5, 5, 2.0, FrameKind::reference, 1.0);
    CHECK_THROWS_AS(correct_frame(synthesize_frame(f), other, f.dark), DataError);
  }
}

TEST_CASE("stripe integration")
{
  ImageFrame frame(60, 40, 2.0, FrameKind::corrected, 0.25);
  frame.origin_x_um = -60.0;
  SUBCASE("uniform value")
  {
    const auto s = integrate_stripe(frame, 0.0, 40.0);
    CHECK(s.value == doctest::Approx(0.25));
    CHECK(s.pixels == 50 * 16);
    CHECK(s.valid_fraction == 1.0);
  }
  SUBCASE("half invalid rectangle averages the valid half")
  {
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 30; ++x)
      {
        frame.at(x, y) = 1e6;
        frame.set_valid(x, y, false);
      }
    for (int y = 0; y < 40; ++y)
      for (int x = 30; x < 60; ++x)
        frame.at(x, y) = 0.5;
    const auto s = integrate_stripe(frame, 0.0, 40.0);
    CHECK(s.value == doctest::Approx(0.5));
    CHECK(s.valid_fraction == doctest::Approx(0.5));
  }
  SUBCASE("all invalid")
  {
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 60; ++x)
        frame.set_valid(x, y, false);
    CHECK_THROWS_AS(integrate_stripe(frame, 0.0, 40.0), DataError);
  }
  SUBCASE("outside the frame")
  {
    CHECK_THROWS_AS(integrate_stripe(frame, 20.0, 40.0), DomainError);
    CHECK_THROWS_AS(integrate_stripe(frame, 0.0, 70.0), DomainError);
  }
}

TEST_CASE("fringe fit")
{
  const auto x = grating_positions(30);
  SUBCASE("noise free recovery")
  {
    const auto y = sinusoid(30, 2.0, 0.25, 1.0, 100.0, 991.0);
    const auto fit = fit_fringe(y, x, 991.0);
    CHECK(fit.visibility == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(std::abs(fit.phase - 1.0) < 1e-9);
    CHECK(fit.a0 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_FALSE(fit.partial_period);
    CHECK_FALSE(fit.out_of_range);
  }
  SUBCASE("zero visibility")
  {
    std::vector<double> y(30, 1.0);
    for (int i = 0; i < 30; ++i)
      y[i] += 0.01 * std::sin(1.7 * i * i);
    const auto fit = fit_fringe(y, x, 991.0);
    CHECK(fit.visibility < 2.0 * fit.visibility_error + 1e-12);
  }
  SUBCASE("scale invariance")
  {
    std::vector<double> y = sinusoid(30, 1.0, 0.4, -2.0, 100.0, 991.0);
    for (int i = 0; i < 30; ++i)
      y[i] += 0.02 * std::cos(3.1 * i);
    auto scaled = y;
    for (double& v : scaled)
      v *= 37.5;
    const auto a = fit_fringe(y, x, 991.0);
    const auto b = fit_fringe(scaled, x, 991.0);
    CHECK(b.visibility == doctest::Approx(a.visibility).epsilon(1e-12));
    CHECK(b.visibility_error == doctest::Approx(a.visibility_error).epsilon(1e-9));
    CHECK(b.phase == doctest::Approx(a.phase).epsilon(1e-12));
  }
  SUBCASE("constant phase offset changes only the phase")
  {
    const auto a = fit_fringe(sinusoid(30, 1.0, 0.3, 0.2, 100.0, 991.0), x, 991.0);
    const auto b = fit_fringe(sinusoid(30, 1.0, 0.3, 1.4, 100.0, 991.0), x, 991.0);
    CHECK(b.visibility == doctest::Approx(a.visibility).epsilon(1e-12));
    CHECK(b.phase - a.phase == doctest::Approx(1.2).epsilon(1e-12));
  }
  SUBCASE("preconditions")
  {
    const auto y = sinusoid(4, 1.0, 0.3, 0.0, 100.0, 991.0);
    CHECK_THROWS_AS(fit_fringe(y, grating_positions(4), 991.0), DomainError);
    std::vector<double> same(6, 0.0);
    CHECK_THROWS_AS(fit_fringe(std::vector<double>(6, 1.0), same, 991.0), NumericalError);
    CHECK_THROWS_AS(fit_fringe(std::vector<double>(6, -1.0), grating_positions(6), 991.0), DataError);
  }
  SUBCASE("five stripes fit but cover half a period")
  {
    const auto fit = fit_fringe(sinusoid(5, 1.0, 0.3, 0.5, 100.0, 991.0), grating_positions(5), 991.0);
    CHECK(fit.partial_period);
    CHECK(fit.visibility == doctest::Approx(0.3).epsilon(1e-9));
  }
  SUBCASE("visibility above one is flagged, not clamped")
  {
    std::vector<double> y = sinusoid(30, 1.0, 1.2, 0.0, 100.0, 991.0);
    const auto fit = fit_fringe(y, x, 991.0);
    CHECK(fit.out_of_range);
    CHECK(fit.visibility == doctest::Approx(1.2).epsilon(1e-9));
  }
}

TEST_CASE("stack bookkeeping")
{
  StripeStack stack;
  stack.frames.resize(30);
  CHECK(stack.magnification() == 4250.0);
  CHECK(stack.span_periods() == doctest::Approx(3000.0 / 991.0));
  CHECK(std::round(stack.span_periods() * 1000.0) / 1000.0 == 3.027);
  CHECK(stack.grating_position_nm(7) == 700.0);
  CHECK(stack.adsorber_position_um(7) == 2975.0);
  CHECK(stack.duration_s() == 4.0 * 3600.0);
}

TEST_CASE("synthetic stack traces the injected fringe")
{
  auto o = small_stack();
  const auto stack = correct_stack(synthesize_stack(DepositionProfile::uniform(1.0, 0.25, 1.0), o));
  REQUIRE(stack.n_stripes() == 30);
  const double expected_a0 = o.efficiency / o.background * o.density_rate * o.exposure_per_stripe_s;
  for (int i = 0; i < 30; ++i)
  {
    const auto s = integrate_stripe(stack.frames[i], stack.adsorber_position_um(i), 300.0);
    CHECK(s.value == doctest::Approx(expected_a0 * (1.0 + 0.25 * std::cos(2.0 * pi * i * 100.0 / 991.0 + 1.0)))
                         .epsilon(1e-12));
  }
  beamline::BeamlineGeometry geom;
  const std::vector<double> heights{100.0, 300.0, 500.0};
  const auto curve = visibility_vs_height(stack, heights, geom);
  for (const auto& p : curve.points)
  {
    REQUIRE(p.ok);
    CHECK(p.visibility == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(std::abs(p.phase_rad - 1.0) < 1e-9);
    CHECK(p.stripes_used == 30);
    CHECK(p.velocity_mps == doctest::Approx(beamline::velocity_from_height(p.height_um * 1e-6, geom)));
  }
}

TEST_CASE("zero exposure frames equal the reference")
{
  auto o = small_stack();
  o.exposure_per_stripe_s = 0.0;
  const auto raw = synthesize_stack(DepositionProfile::uniform(1.0, 0.3, 0.0), o);
  for (const auto& f : raw.stripes)
    CHECK(f.pixels() == raw.reference.pixels());
}

TEST_CASE("flat stack gives vanishing visibility")
{
  auto o = small_stack();
  o.noise.read_sigma = 0.5;
  const auto stack = correct_stack(synthesize_stack(DepositionProfile::uniform(1.0, 0.0, 0.0), o));
  const auto curve = visibility_vs_height(stack, heights_every(50.0, 100.0, 5), beamline::BeamlineGeometry{});
  for (const auto& p : curve.points)
  {
    REQUIRE(p.ok);
    CHECK(p.visibility < 3.0 * p.visibility_err);
  }
}

TEST_CASE("closed loop against the quantum and beamline models")
{
  physics::InterferometerConfig config;
  beamline::BeamlineGeometry geom;
  beamline::SourceModel source;
  beamline::TheoryOptions t;
  t.distribution.n_samples = 20000;
  const auto table_h = heights_every(300.0, 150.0, 15);
  std::vector<double> hm;
  for (double h : table_h)
    hm.push_back(h * 1e-6);
  const auto theory = beamline::theory_curve(hm, config, geom, source, t);
  std::vector<double> flux, vis, phase;
  double peak = 0.0;
  for (const auto& p : theory)
    peak = std::max(peak, p.deposition);
  for (const auto& p : theory)
  {
    flux.push_back(p.deposition / peak);
    vis.push_back(p.visibility.sinusoidal);
    phase.push_back(0.0);
  }
  const auto profile = DepositionProfile::table(table_h, flux, vis, phase);

  auto o = small_stack();
  o.height_min_um = 200.0;
  o.height_max_um = 2500.0;
  const auto stack = correct_stack(synthesize_stack(profile, o));
  const auto heights = heights_every(400.0, 150.0, 13);
  const auto curve = visibility_vs_height(stack, heights, geom);
  for (const auto& p : curve.points)
  {
    REQUIRE(p.ok);
    // independent expectation: flux-weighted mean of V over the pixel rows
    // whose centres lie inside the 33 um rectangle
    double num = 0.0, den = 0.0;
    for (double y = o.height_min_um + 1.0; y < o.height_max_um; y += 2.0)
      if (std::abs(y - p.height_um) <= 16.5)
      {
        num += profile.flux(y) * profile.visibility(y);
        den += profile.flux(y);
      }
    CHECK(p.visibility == doctest::Approx(num / den).epsilon(1e-9));
    CHECK(std::abs(p.visibility - profile.visibility(p.height_um)) < 0.01);
  }
}

TEST_CASE("phase gradient and tilt")
{
  CHECK(tilt_from_phase_gradient(0.4 * pi * 1e3, 991e-9) == doctest::Approx(1.982e-4).epsilon(1e-3));
  CHECK(tilt_from_phase_gradient(0.0, 991e-9) == 0.0);
  CHECK(tilt_from_phase_gradient(1000.0, 2 * 991e-9) == doctest::Approx(2.0 * tilt_from_phase_gradient(1000.0, 991e-9)));

  beamline::BeamlineGeometry geom;
  auto run = [&](double tilt) {
    auto o = small_stack();
    o.height_max_um = 1500.0;
    o.tilt_rad = tilt;
    o.noise.read_sigma = 2.0;
    const auto stack = correct_stack(synthesize_stack(DepositionProfile::uniform(1.0, 0.3, 0.5), o));
    return phase_gradient(visibility_vs_height(stack, heights_every(100.0, 100.0, 13), geom));
  };
  const double slope = 0.4 * pi * 1e3;
  const double tilt = slope * 991e-9 / (2.0 * pi);
  SUBCASE("recovers 0.4 pi per mm")
  {
    const auto g = run(tilt);
    CHECK(g.slope == doctest::Approx(slope).epsilon(0.02));
    CHECK_FALSE(g.unwrap_ambiguous);
    CHECK(tilt_from_phase_gradient(g.slope, 991e-9) == doctest::Approx(tilt).epsilon(0.02));
  }
  SUBCASE("sign flip")
  {
    const auto g = run(-tilt);
    CHECK(g.slope == doctest::Approx(-slope).epsilon(0.02));
  }
  SUBCASE("zero gradient")
  {
    const auto g = run(0.0);
    CHECK(std::abs(g.slope) < 3.0 * g.slope_error);
  }
  SUBCASE("ambiguous unwrapping is flagged")
  {
    VisibilityCurve c;
    for (int i = 0; i < 5; ++i)
    {
      CurvePoint p;
      p.ok = true;
      p.height_um = 100.0 * i;
      p.phase_rad = std::remainder(2.0 * i, 2.0 * pi);
      p.phase_err = 0.01;
      c.points.push_back(p);
    }
    CHECK(phase_gradient(c).unwrap_ambiguous);
    c.points.resize(2);
    CHECK_THROWS_AS(phase_gradient(c), DataError);
  }
}

TEST_CASE("drift bound")
{
  auto run = [](double drift_nm, std::uint64_t seed) {
    auto o = small_stack();
    o.drift_nm = drift_nm;
    o.seed = seed;
    // stripe SNR 20 with a 100 x 33 um rectangle of 850 pixels
    o.illumination_rolloff = 0.0;
    o.collection_rolloff = 0.0;
    o.noise.read_sigma = o.background * o.collection * o.illumination * std::sqrt(850.0) / 20.0;
    const auto stack = correct_stack(synthesize_stack(DepositionProfile::uniform(1.0, 0.3, 0.0), o));
    const auto blocks = block_phases(stack, heights_every(17.0, 34.0, 17));
    return drift_bound(blocks, stack.duration_s(), stack.period_nm);
  };
  const auto d50 = run(50.0, 3);
  const auto d10 = run(10.0, 3);
  const auto d0 = run(0.0, 3);
  SUBCASE("50 nm is bounded and detected")
  {
    CHECK(d50.bound_nm >= 45.0);
    CHECK(d50.trend_detected);
    CHECK(d50.displacement_nm == doctest::Approx(50.0 * (2.0 / 3.0) * 1.5).epsilon(0.3));
  }
  SUBCASE("no drift stays within the noise floor")
  {
    CHECK_FALSE(d0.trend_detected);
    CHECK(std::abs(d0.displacement_nm) < 3.0 * d0.displacement_error_nm);
  }
  SUBCASE("10 nm is distinguishable from 50 nm")
  {
    const double sigma = std::hypot(d10.displacement_error_nm, d50.displacement_error_nm);
    CHECK(d50.displacement_nm - d10.displacement_nm > 3.0 * sigma);
  }
  SUBCASE("needs two blocks")
  {
    std::vector<BlockPhase> one(1);
    CHECK_THROWS_AS(drift_bound(one, 100.0, 991.0), DomainError);
  }
}

TEST_CASE("stack files round trip")
{
  const auto dir = std::filesystem::temp_directory_path() / "talbot_test_stack";
  std::filesystem::remove_all(dir);
  auto o = small_stack();
  o.n_stripes = 6;
  auto raw = synthesize_stack(DepositionProfile::uniform(1.0, 0.3, 0.2), o);
  raw.metadata.config_hash = "abc";

  SUBCASE("tiff is lossless")
  {
    write_stack(raw, dir, ImageFormat::tiff);
    const auto back = read_stack(dir);
    REQUIRE(back.stripes.size() == 6);
    CHECK(back.problems.empty());
    CHECK(back.metadata.config_hash == "abc");
    for (int i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < raw.stripes[i].pixels().size(); k += 97)
        CHECK(back.stripes[i].pixels()[k] == doctest::Approx(raw.stripes[i].pixels()[k]).epsilon(1e-6));
    CHECK(back.stripes[3].origin_x_um == raw.stripes[3].origin_x_um);
  }
  SUBCASE("png keeps the fringe")
  {
    write_stack(raw, dir, ImageFormat::png);
    const auto stack = correct_stack(read_stack(dir));
    const auto fit = visibility_vs_height(stack, std::vector<double>{300.0}, beamline::BeamlineGeometry{});
    REQUIRE(fit.points[0].ok);
    CHECK(fit.points[0].visibility == doctest::Approx(0.3).epsilon(1e-2));
  }
  SUBCASE("corrupt stripe is reported, not fatal")
  {
    write_stack(raw, dir, ImageFormat::tiff);
    std::ofstream(dir / "stripe_02.tiff") << "not an image";
    const auto back = read_stack(dir);
    REQUIRE(back.problems.size() == 1);
    const auto curve = visibility_vs_height(correct_stack(back), std::vector<double>{300.0}, beamline::BeamlineGeometry{});
    CHECK(curve.points[0].ok);
    CHECK(curve.points[0].stripes_used == 5);
    CHECK(curve.points[0].message.find("stripe 2") != std::string::npos);
  }
  SUBCASE("missing sidecar")
  {
    write_stack(raw, dir, ImageFormat::tiff);
    std::filesystem::remove(dir / "stack.json");
    CHECK_THROWS_AS(read_stack(dir), DataError);
  }
  SUBCASE("inconsistent sidecar")
  {
    write_stack(raw, dir, ImageFormat::tiff);
    std::ofstream(dir / "stack.json") << R"({"format": "tiff32f", "period_nm": 991})";
    CHECK_THROWS_AS(read_stack(dir), DataError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("serial and parallel synthesis agree")
{
  auto o = small_stack();
  o.noise = NoiseModel{true, 2.0, 1.0};
  o.exec = Execution::serial;
  const auto a = synthesize_stack(DepositionProfile::uniform(1.0, 0.3, 0.2), o);
  o.exec = Execution::parallel;
  const auto b = synthesize_stack(DepositionProfile::uniform(1.0, 0.3, 0.2), o);
  for (int i = 0; i < o.n_stripes; ++i)
    CHECK(a.stripes[i].pixels() == b.stripes[i].pixels());
}

TEST_CASE("noise calibration of the fit at SNR 20")
{
  oracles::CoverageStudy study;
  study.seeds = 60;
  const auto r = oracles::run_coverage_study(study);
  CHECK(r.fits == 60 * 43);
  CHECK(r.measured_snr == doctest::Approx(20.0).epsilon(0.05));
  CHECK(std::abs(r.relative_bias) < 0.01);
  CHECK(r.coverage > 0.63);
  CHECK(r.coverage < 0.73);
  CHECK(r.phase_coverage > 0.63);
  CHECK(r.phase_coverage < 0.73);
}
