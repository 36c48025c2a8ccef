#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>

namespace talbot
{

/// Selects the serial reference loop or the OpenMP loop of a kernel. Both
/// paths visit the same work items with the same seeds, so results match
/// bit for bit.
enum class Execution
{
  serial,
  parallel
};

/// Runs body(i) for i in [0, n). An exception thrown by any iteration is
/// rethrown on the calling thread once the loop has finished.
template <class Body>
void parallel_for(std::size_t n, Execution exec, Body&& body)
{
  if (exec == Execution::serial)
  {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::exception_ptr failure;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i)
  {
    try
    {
      body(static_cast<std::size_t>(i));
    }
    catch (...)
    {
#pragma omp critical(talbot_parallel_for_failure)
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of Monte Carlo stream `stream` for a run seeded with `seed`.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream)
{
  return mix_seed(seed ^ mix_seed(stream + 1));
}

/// Number of fixed Monte Carlo streams; independent of the thread count.
inline constexpr std::size_t kMonteCarloStreams = 64;

} // namespace talbot
