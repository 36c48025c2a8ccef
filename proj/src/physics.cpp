#include "talbot/physics.hpp"

#include "talbot/constants.hpp"
#include "talbot/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace talbot::physics
{

namespace
{

using constants::pi;

void require_positive_velocity(double velocity)
{
  if (!(velocity > 0.0) || !std::isfinite(velocity))
    throw DomainError("velocity must be positive, got " + std::to_string(velocity));
}

/// C3 L_g / (hbar v), in m^3.
double vdw_strength(const GratingSpec& grating, const MoleculeSpecies& molecule, double velocity)
{
  return molecule.c3 * grating.thickness_m() / (constants::hbar * velocity);
}

} // namespace

double MoleculeSpecies::mass_kg() const
{
  return mass_amu * constants::amu;
}

void MoleculeSpecies::validate() const
{
  if (!(mass_amu > 0.0))
    throw DomainError("molecule mass must be positive");
  if (!(c3 >= 0.0))
    throw DomainError("van der Waals C3 must be non-negative");
}

void GratingSpec::validate() const
{
  if (!(period_nm > 0.0))
    throw DomainError("grating period must be positive");
  if (!(open_fraction > 0.0 && open_fraction <= 1.0))
    throw DomainError("grating open fraction must lie in (0, 1]");
  if (!(thickness_nm >= 0.0))
    throw DomainError("grating thickness must be non-negative");
}

void InterferometerConfig::validate() const
{
  g1.validate();
  g2.validate();
  g3.validate();
  molecule.validate();
  if (!(separation_m > 0.0))
    throw DomainError("grating separation must be positive");
  if (!(phase_cap > 0.0))
    throw DomainError("phase cap must be positive");
  const double d = g2.period_nm;
  if (std::abs(g1.period_nm - d) > 1e-12 * d || std::abs(g3.period_nm - d) > 1e-12 * d)
    throw DomainError("all three gratings must share one period");
}

double de_broglie_wavelength(const MoleculeSpecies& molecule, double velocity)
{
  require_positive_velocity(velocity);
  molecule.validate();
  return constants::planck / (molecule.mass_kg() * velocity);
}

double talbot_length(double period_m, double wavelength_m)
{
  if (!(period_m > 0.0) || !(wavelength_m > 0.0))
    throw DomainError("Talbot length needs positive period and wavelength");
  return period_m * period_m / wavelength_m;
}

double talbot_ratio(const InterferometerConfig& config, double velocity)
{
  const double lambda = de_broglie_wavelength(config.molecule, velocity);
  return config.separation_m / talbot_length(config.g2.period_m(), lambda);
}

double vdw_phase(double x, const GratingSpec& grating, const MoleculeSpecies& molecule, double velocity)
{
  require_positive_velocity(velocity);
  const double half = 0.5 * grating.slit_width_m();
  if (!(std::abs(x) < half))
    throw DomainError("position lies outside the open slit");
  if (molecule.c3 == 0.0)
    return 0.0;
  const double kappa = vdw_strength(grating, molecule, velocity);
  return kappa * (std::pow(half - x, -3) + std::pow(half + x, -3));
}

double open_half_width(const GratingSpec& grating, const MoleculeSpecies& molecule, double velocity,
                       double phase_cap)
{
  require_positive_velocity(velocity);
  const double half = 0.5 * grating.slit_width_m();
  if (molecule.c3 == 0.0 || grating.thickness_nm == 0.0)
    return half;
  if (vdw_phase(0.0, grating, molecule, velocity) > phase_cap)
    return 0.0;
  // phi is even and increasing in |x|; bisect phi(x) = cap.
  double lo = 0.0;
  double hi = half;
  for (int i = 0; i < 200 && hi - lo > 1e-16 * half; ++i)
  {
    const double mid = 0.5 * (lo + hi);
    if (vdw_phase(mid, grating, molecule, velocity) > phase_cap)
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

GratingCoefficients grating_coefficients_quadrature(const GratingSpec& grating,
                                                    const MoleculeSpecies& molecule, double velocity,
                                                    int n_max, double phase_cap, double tolerance)
{
  if (n_max < 1)
    throw DomainError("n_max must be at least 1");
  grating.validate();
  molecule.validate();
  require_positive_velocity(velocity);

  GratingCoefficients out{FourierSeries(n_max), open_half_width(grating, molecule, velocity, phase_cap)};
  const double d = grating.period_m();
  const double edge = out.open_half_width;
  if (edge == 0.0)
    return out;

  const double kappa = vdw_strength(grating, molecule, velocity);
  const double half = 0.5 * grating.slit_width_m();
  auto phase = [&](double x) {
    return kappa == 0.0 ? 0.0 : kappa * (std::pow(half - x, -3) + std::pow(half + x, -3));
  };

  auto slope = [&](double x) {
    return kappa == 0.0 ? 0.0 : 3.0 * kappa * (std::pow(half - x, -4) - std::pow(half + x, -4));
  };

  // Split [0, edge] so that the wall phase plus the highest harmonic advance by
  // at most pi/2 per piece. The adaptive rule's relative tolerance then applies
  // to pieces that do not cancel internally.
  const double k_max = 2.0 * pi * n_max / d;
  std::vector<double> cuts{0.0};
  while (cuts.back() < edge)
  {
    const double x = cuts.back();
    double h = edge - x;
    for (int it = 0; it < 60; ++it)
    {
      const double far = std::min(x + h, edge);
      if ((std::abs(slope(far)) + k_max) * (far - x) <= 0.5 * pi)
        break;
      h *= 0.5;
    }
    cuts.push_back(std::min(x + h, edge));
  }

  using Quadrature = boost::math::quadrature::gauss_kronrod<double, 15>;
  constexpr unsigned max_depth = 12;
  // The phase is even in x, so the slit integral folds onto [0, edge].
  for (int n = 0; n <= n_max; ++n)
  {
    const double k = 2.0 * pi * n / d;
    // Integrate over t = x / edge; the Kronrod error floor is absolute, so the
    // variable must be O(1) rather than O(1e-7) m.
    auto integrand = [&](double t) { return std::cos(k * edge * t) * std::polar(1.0, phase(edge * t)); };
    Complex sum{};
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p)
      sum += Quadrature::integrate(integrand, cuts[p] / edge, cuts[p + 1] / edge, max_depth, tolerance);
    const Complex value = 2.0 * edge / d * sum;
    out.b.at(n) = value;
    out.b.at(-n) = value;
  }
  return out;
}

GratingCoefficients grating_coefficients(const GratingSpec& grating, const MoleculeSpecies& molecule,
                                         double velocity, int n_max, double phase_cap, double tolerance)
{
  if (molecule.c3 != 0.0 && grating.thickness_nm != 0.0)
    return grating_coefficients_quadrature(grating, molecule, velocity, n_max, phase_cap, tolerance);

  if (n_max < 1)
    throw DomainError("n_max must be at least 1");
  grating.validate();
  molecule.validate();
  require_positive_velocity(velocity);

  GratingCoefficients out{FourierSeries(n_max), 0.5 * grating.slit_width_m()};
  const double f = grating.open_fraction;
  out.b.at(0) = f;
  for (int n = 1; n <= n_max; ++n)
  {
    const double value = std::sin(pi * n * f) / (pi * n);
    out.b.at(n) = value;
    out.b.at(-n) = value;
  }
  return out;
}

FourierSeries intensity_coefficients(double period_m, double open_half_width, int m_max)
{
  FourierSeries out(m_max);
  out.at(0) = 2.0 * open_half_width / period_m;
  for (int m = 1; m <= m_max; ++m)
  {
    const double value = std::sin(2.0 * pi * m * open_half_width / period_m) / (pi * m);
    out.at(m) = value;
    out.at(-m) = value;
  }
  return out;
}

Complex talbot_lau_coefficient(const FourierSeries& b, int m, double xi)
{
  const int n = b.order();
  const int lo = std::max(-n, m - n);
  const int hi = std::min(n, m + n);
  Complex sum{};
  for (int j = lo; j <= hi; ++j)
  {
    // Reduce the exponent modulo 2 before scaling by pi to keep B periodic in xi
    // to rounding precision.
    const double turns = std::fmod(xi * static_cast<double>(m - 2 * j), 2.0);
    sum += b[j] * std::conj(b[j - m]) * std::polar(1.0, pi * turns);
  }
  return sum;
}

TalbotLauCoefficients talbot_lau_coefficients(const FourierSeries& b, double xi, int m_max)
{
  TalbotLauCoefficients out{FourierSeries(m_max), b.order() < 2 * m_max};
  for (int m = -m_max; m <= m_max; ++m)
    out.values.at(m) = talbot_lau_coefficient(b, m, xi);
  return out;
}

FringeSignal fringe_signal(const InterferometerConfig& config, double velocity, int resolution,
                           const TruncationOptions& options)
{
  config.validate();
  require_positive_velocity(velocity);
  if (resolution < 2)
    throw DomainError("fringe resolution must be at least 2");
  const int m_max = options.m_max;
  if (m_max < 1)
    throw DomainError("m_max must be at least 1");

  const auto& molecule = config.molecule;
  const double d = config.g2.period_m();
  const double xi = talbot_ratio(config, velocity);

  const auto g2 = grating_coefficients(config.g2, molecule, velocity, options.n_max, config.phase_cap,
                                       options.quadrature_tolerance);
  const auto source = intensity_coefficients(
      d, open_half_width(config.g1, molecule, velocity, config.phase_cap), m_max);
  const auto mask = intensity_coefficients(
      d, open_half_width(config.g3, molecule, velocity, config.phase_cap), m_max);

  FringeSignal out;
  out.talbot_ratio = xi;
  out.truncation_warning = options.n_max < 2 * m_max;
  out.fourier_components = FourierSeries(m_max);
  for (int m = -m_max; m <= m_max; ++m)
    out.fourier_components.at(m) =
        source[-m] * talbot_lau_coefficient(g2.b, 2 * m, m * xi) * mask[-m];

  // Parseval: sum_n |b_n|^2 over all orders equals the open fraction of G2.
  double kept = 0.0;
  for (int n = -g2.b.order(); n <= g2.b.order(); ++n)
    kept += std::norm(g2.b[n]);
  out.truncated_power = std::max(0.0, 2.0 * g2.open_half_width / d - kept);
  if (options.complete_background)
    out.fourier_components.at(0) += source[0] * out.truncated_power * mask[0];

  auto signal = reconstruct_signal(std::move(out.fourier_components), config.g2.period_nm, resolution,
                                   options.imaginary_tolerance);
  signal.talbot_ratio = out.talbot_ratio;
  signal.truncation_warning = out.truncation_warning;
  signal.truncated_power = out.truncated_power;
  return signal;
}

FringeSignal reconstruct_signal(FourierSeries components, double period_nm, int resolution,
                                double imaginary_tolerance)
{
  if (resolution < 2)
    throw DomainError("fringe resolution must be at least 2");
  FringeSignal out;
  out.fourier_components = std::move(components);
  const auto& S = out.fourier_components;
  const int m_max = S.order();
  const double scale = std::abs(S[0]);
  for (int m = 1; m <= m_max; ++m)
    if (std::abs(S[-m] - std::conj(S[m])) > 1e-12 * std::max(scale, 1e-300))
      throw NumericalError("fringe harmonics violate Hermitian symmetry at m = " + std::to_string(m));

  out.positions_nm.resize(resolution);
  out.values.resize(resolution);
  double max_abs = 0.0;
  double max_imag = 0.0;
  for (int k = 0; k < resolution; ++k)
  {
    const double x = static_cast<double>(k) / resolution;
    Complex value{};
    for (int m = -m_max; m <= m_max; ++m)
      value += S[m] * std::polar(1.0, 2.0 * pi * m * x);
    out.positions_nm[k] = x * period_nm;
    out.values[k] = value.real();
    max_abs = std::max(max_abs, std::abs(value));
    max_imag = std::max(max_imag, std::abs(value.imag()));
  }
  out.imaginary_residue = max_abs > 0.0 ? max_imag / max_abs : 0.0;
  if (out.imaginary_residue > imaginary_tolerance)
    throw NumericalError("reconstructed fringe signal has imaginary residue " +
                         std::to_string(out.imaginary_residue));
  return out;
}

Visibility visibility_of(const FringeSignal& signal)
{
  const double s0 = signal.fourier_components[0].real();
  if (!(s0 > 0.0))
    throw DomainError("degenerate configuration: no transmitted flux");
  const auto [lo, hi] = std::minmax_element(signal.values.begin(), signal.values.end());
  Visibility v;
  v.exact = (*hi - *lo) / (*hi + *lo);
  v.sinusoidal = 2.0 * std::abs(signal.fourier_components[1]) / s0;
  return v;
}

Visibility quantum_visibility(const InterferometerConfig& config, double velocity,
                              const TruncationOptions& options)
{
  return visibility_of(fringe_signal(config, velocity, 256, options));
}

std::vector<Visibility> visibility_map(const InterferometerConfig& config, std::span<const double> velocities,
                                       Execution exec, const TruncationOptions& options)
{
  std::vector<Visibility> out(velocities.size());
  parallel_for(velocities.size(), exec,
               [&](std::size_t i) { out[i] = quantum_visibility(config, velocities[i], options); });
  return out;
}

} // namespace talbot::physics
