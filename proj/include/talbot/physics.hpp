#pragma once

#include "talbot/parallel.hpp"

#include <complex>
#include <span>
#include <string>
#include <vector>

/// Near-field (Talbot-Lau) interferometer physics: de Broglie optics, grating
/// Fourier coefficients with the van der Waals eikonal phase, and the fringe
/// signal recorded by scanning the third grating.
namespace talbot::physics
{

using Complex = std::complex<double>;

struct MoleculeSpecies
{
  std::string name = "TPP";
  /// mass in amu
  double mass_amu = 614.0;
  /// van der Waals coefficient in J m^3 (zero disables the wall interaction)
  double c3 = 0.0;

  double mass_kg() const;
  void validate() const;
};

struct GratingSpec
{
  double period_nm = 991.0;
  /// slit width / period
  double open_fraction = 0.40;
  double thickness_nm = 500.0;

  double period_m() const { return period_nm * 1e-9; }
  double slit_width_m() const { return open_fraction * period_nm * 1e-9; }
  double thickness_m() const { return thickness_nm * 1e-9; }
  void validate() const;
};

/// Symmetric three-grating setup. All gratings share one period.
struct InterferometerConfig
{
  GratingSpec g1;
  GratingSpec g2;
  GratingSpec g3;
  /// distance G1-G2 = distance G2-G3, in m
  double separation_m = 0.38;
  MoleculeSpecies molecule;
  /// slit regions where |phi| exceeds this cap (rad) are treated as absorbed
  double phase_cap = 50.0;

  void validate() const;
};

/// Fourier coefficients c_n for |n| <= order(); reads beyond the truncation
/// return zero.
class FourierSeries
{
public:
  FourierSeries() = default;
  explicit FourierSeries(int order) : mOrder(order), mValues(2 * order + 1) {}

  int order() const { return mOrder; }
  Complex operator[](int n) const
  {
    return (n < -mOrder || n > mOrder) ? Complex{} : mValues[n + mOrder];
  }
  Complex& at(int n) { return mValues.at(n + mOrder); }

private:
  int mOrder = 0;
  std::vector<Complex> mValues;
};

struct TruncationOptions
{
  /// grating diffraction orders kept
  int n_max = 40;
  /// fringe harmonics kept
  int m_max = 10;
  /// relative tolerance of the adaptive slit quadrature
  double quadrature_tolerance = 1e-8;
  /// |Im S(x)| / max |S(x)| above this is reported as a numerical failure
  double imaginary_tolerance = 1e-9;
  /// Return the flux of diffraction orders beyond n_max to S_0 as a flat
  /// background (their power follows from Parseval's identity).
  bool complete_background = true;
};

struct GratingCoefficients
{
  FourierSeries b;
  /// half width of the transmitting part of the slit after the phase cap, m
  double open_half_width = 0.0;
};

struct TalbotLauCoefficients
{
  FourierSeries values;
  /// set when b was truncated below 2 * m_max
  bool truncation_warning = false;
};

struct FringeSignal
{
  /// lateral shift of the third grating, nm, over one period
  std::vector<double> positions_nm;
  std::vector<double> values;
  FourierSeries fourier_components;
  /// L / L_T
  double talbot_ratio = 0.0;
  /// max |Im| / max |S| seen during reconstruction
  double imaginary_residue = 0.0;
  /// set when n_max < 2 m_max
  bool truncation_warning = false;
  /// flux fraction of G2 diffraction orders beyond n_max (Parseval deficit)
  double truncated_power = 0.0;
};

struct Visibility
{
  /// (max - min) / (max + min) of the reconstructed signal
  double exact = 0.0;
  /// 2 |S_1| / S_0
  double sinusoidal = 0.0;
};

double de_broglie_wavelength(const MoleculeSpecies& molecule, double velocity);

double talbot_length(double period_m, double wavelength_m);

/// L / L_T for the configuration at the given speed.
double talbot_ratio(const InterferometerConfig& config, double velocity);

/// Eikonal phase acquired at lateral position x (m, relative to the slit
/// centre) while crossing a slit of the grating:
///   phi(x) = C3 L_g / (hbar v) [ (a/2 - x)^-3 + (a/2 + x)^-3 ].
double vdw_phase(double x, const GratingSpec& grating, const MoleculeSpecies& molecule, double velocity);

/// Half width of the slit region where |phi| <= phase_cap. Equals a/2 when C3 = 0.
double open_half_width(const GratingSpec& grating, const MoleculeSpecies& molecule, double velocity,
                       double phase_cap);

/// Amplitude transmission coefficients
///   b_n = (1/d) \int_slit exp(i phi(x)) exp(-2 pi i n x / d) dx.
GratingCoefficients grating_coefficients(const GratingSpec& grating, const MoleculeSpecies& molecule,
                                         double velocity, int n_max, double phase_cap = 50.0,
                                         double tolerance = 1e-8);

/// Same integral evaluated by adaptive quadrature even when C3 = 0.
GratingCoefficients grating_coefficients_quadrature(const GratingSpec& grating,
                                                    const MoleculeSpecies& molecule, double velocity,
                                                    int n_max, double phase_cap = 50.0,
                                                    double tolerance = 1e-8);

/// Fourier coefficients of the intensity transmission |t(x)|^2 (binary mask of
/// the given open half width).
FourierSeries intensity_coefficients(double period_m, double open_half_width, int m_max);

/// B_m(xi) = sum_j b_j conj(b_{j-m}) exp(i pi xi (m - 2j)).
Complex talbot_lau_coefficient(const FourierSeries& b, int m, double xi);

TalbotLauCoefficients talbot_lau_coefficients(const FourierSeries& b, double xi, int m_max);

/// Flux behind the third grating as a function of its lateral shift,
///   S_m = A_{-m} B_{2m}(m L / L_T) C_{-m},
/// sampled at `resolution` points over one period. Orders of G2 beyond n_max
/// land spread over many periods; with complete_background their Parseval
/// deficit is added to S_0 as a flat background.
FringeSignal fringe_signal(const InterferometerConfig& config, double velocity, int resolution = 64,
                           const TruncationOptions& options = {});

/// Samples S(x) = sum_m S_m exp(2 pi i m x / d) at `resolution` points over one
/// period after checking Hermitian symmetry and the imaginary residue.
FringeSignal reconstruct_signal(FourierSeries components, double period_nm, int resolution,
                                double imaginary_tolerance = 1e-9);

/// Visibility of an already computed signal.
Visibility visibility_of(const FringeSignal& signal);

Visibility quantum_visibility(const InterferometerConfig& config, double velocity,
                              const TruncationOptions& options = {});

/// quantum_visibility over a list of speeds.
std::vector<Visibility> visibility_map(const InterferometerConfig& config, std::span<const double> velocities,
                                       Execution exec = Execution::parallel,
                                       const TruncationOptions& options = {});

} // namespace talbot::physics
