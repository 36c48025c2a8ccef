#include "fresnel_oracle.hpp"
#include "talbot/beamline.hpp"
#include "talbot/classical.hpp"
#include "talbot/physics.hpp"
#include "talbot/synthesis.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace talbot;

namespace
{

double seconds(const std::function<void()>& body)
{
  const auto start = std::chrono::steady_clock::now();
  body();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Runs a kernel serially and in parallel and checks the results agree bit for bit.
template <class Run>
void compare(const char* name, Run run)
{
  decltype(run(Execution::serial)) serial, parallel;
  const double ts = seconds([&] { serial = run(Execution::serial); });
  const double tp = seconds([&] { parallel = run(Execution::parallel); });
  std::printf("%-34s %10.3f %10.3f %8.2fx  %s\n", name, ts, tp, ts / tp, serial == parallel ? "identical" : "DIFFER");
}

} // namespace

int main()
{
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
  std::printf("%-34s %10s %10s %9s\n", "kernel", "serial s", "parallel s", "speedup");

  physics::InterferometerConfig config;
  compare("classical Monte Carlo (1e6 rays)", [&](Execution e) {
    classical::MoireOptions o;
    o.n_samples = 1000000;
    o.exec = e;
    return classical::moire_signal(config, 200.0, o).histogram;
  });

  compare("beamline distribution (1e6)", [&](Execution e) {
    beamline::DistributionOptions o;
    o.n_samples = 1000000;
    o.exec = e;
    return beamline::velocity_distribution_at_height(944e-6, 33e-6, beamline::BeamlineGeometry{},
                                                     beamline::SourceModel{}, o)
        .weights;
  });

  auto vdw = config;
  vdw.molecule.c3 = 1.6e-48;
  compare("visibility map, vdW (101 speeds)", [&](Execution e) {
    std::vector<double> v;
    for (int i = 0; i <= 100; ++i)
      v.push_back(120.0 + 2.0 * i);
    std::vector<double> out;
    for (const auto& x : physics::visibility_map(vdw, v, e))
      out.push_back(x.sinusoidal);
    return out;
  });

  compare("stack synthesis (30 frames, noise)", [&](Execution e) {
    imaging::SynthesisOptions o;
    o.noise = imaging::NoiseModel{true, 1.0, 5.0};
    o.exec = e;
    const auto raw = imaging::synthesize_stack(imaging::DepositionProfile::uniform(1.0, 0.3, 0.0), o);
    std::vector<double> out;
    for (const auto& f : raw.stripes)
      out.insert(out.end(), f.pixels().begin(), f.pixels().end());
    return out;
  });

  compare("Fresnel oracle (250 m/s)", [&](Execution e) {
    oracles::FresnelOptions o;
    o.exec = e;
    return oracles::fresnel_fringe_signal(config, 250.0, o).values;
  });
  return 0;
}
