#pragma once

#include "talbot/imaging.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace talbot::app
{

/// CSV with a comment header naming the command and the resolved config hash.
/// Numbers are written with 10 significant digits; NaN as "nan".
class CsvWriter
{
public:
  CsvWriter(const std::filesystem::path& path, const std::string& command, const std::string& hash,
            const std::vector<std::string>& columns);

  /// Extra `# key: value` line; only valid before the first row.
  void comment(const std::string& key, const std::string& value);
  void row(const std::vector<double>& values);

private:
  std::ofstream mOut;
  std::size_t mColumns;
  bool mHeaderDone = false;
  std::vector<std::string> mHeader;
};

std::string format_number(double x);

/// Reads a VisibilityCurve CSV (height_um, velocity_mps, visibility,
/// visibility_err, phase_rad); DataError on malformed input.
imaging::VisibilityCurve read_visibility_csv(const std::filesystem::path& path);

void write_visibility_csv(const imaging::VisibilityCurve& curve, const std::filesystem::path& path,
                          const std::string& command, const std::string& hash);

} // namespace talbot::app
