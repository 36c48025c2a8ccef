#include "talbot/app/csv.hpp"

#include "talbot/error.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace talbot::app
{

std::string format_number(double x)
{
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  if (x == 0.0)
    return "0";
  return fmt::format("{:.10g}", x);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& command, const std::string& hash,
                     const std::vector<std::string>& columns)
    : mOut(path, std::ios::binary), mColumns(columns.size())
{
  if (!mOut)
    throw DataError("cannot write " + path.string());
  mOut << "# talbot " << command << "\n";
  mOut << "# config_hash: " << hash << "\n";
  std::string header;
  for (std::size_t i = 0; i < columns.size(); ++i)
    header += (i ? "," : "") + columns[i];
  mHeader.push_back(header);
}

void CsvWriter::comment(const std::string& key, const std::string& value)
{
  if (mHeaderDone)
    throw DataError("CSV comments must precede the data rows");
  mOut << "# " << key << ": " << value << "\n";
}

void CsvWriter::row(const std::vector<double>& values)
{
  if (values.size() != mColumns)
    throw DataError("CSV row width does not match the header");
  if (!mHeaderDone)
  {
    mOut << mHeader.front() << "\n";
    mHeaderDone = true;
  }
  for (std::size_t i = 0; i < values.size(); ++i)
    mOut << (i ? "," : "") << format_number(values[i]);
  mOut << "\n";
}

void write_visibility_csv(const imaging::VisibilityCurve& curve, const std::filesystem::path& path,
                          const std::string& command, const std::string& hash)
{
  CsvWriter csv(path, command, hash, {"height_um", "velocity_mps", "visibility", "visibility_err", "phase_rad"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : curve.points)
    csv.row({p.height_um, p.velocity_mps, p.ok ? p.visibility : nan, p.ok ? p.visibility_err : nan,
             p.ok ? p.phase_rad : nan});
}

imaging::VisibilityCurve read_visibility_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open measured curve " + path.string());
  imaging::VisibilityCurve curve;
  std::string line;
  int number = 0;
  bool header = false;
  while (std::getline(in, line))
  {
    ++number;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty() || line.front() == '#')
      continue;
    if (!header)
    {
      if (line.rfind("height_um,velocity_mps,visibility,visibility_err,phase_rad", 0) != 0)
        throw DataError(path.string() + ": unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<double> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ','))
    {
      double x = 0.0;
      if (cell == "nan")
        x = std::numeric_limits<double>::quiet_NaN();
      else
      {
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
          throw DataError(fmt::format("{}:{}: cannot parse '{}'", path.string(), number, cell));
      }
      cells.push_back(x);
    }
    if (cells.size() < 5)
      throw DataError(fmt::format("{}:{}: expected 5 columns", path.string(), number));
    imaging::CurvePoint p;
    p.height_um = cells[0];
    p.velocity_mps = cells[1];
    p.visibility = cells[2];
    p.visibility_err = cells[3];
    p.phase_rad = cells[4];
    p.ok = std::isfinite(p.visibility);
    if (!curve.points.empty() && !(p.height_um > curve.points.back().height_um))
      throw DataError(fmt::format("{}:{}: heights must increase strictly", path.string(), number));
    curve.points.push_back(p);
  }
  if (!header)
    throw DataError(path.string() + ": no header row");
  return curve;
}

} // namespace talbot::app
