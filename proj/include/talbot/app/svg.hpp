#pragma once

#include <filesystem>
#include <string>
#include <vector>

/// Minimal SVG line plots: axes with ticks, polylines, markers and error bars.
namespace talbot::app
{

struct Series
{
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// optional symmetric error bars (empty for none)
  std::vector<double> error;
  std::string color = "#1f77b4";
  bool dashed = false;
  bool line = true;
  bool markers = false;
};

struct Plot
{
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Renders plots on a grid of `columns` panels, each width x height pixels.
std::string render_svg(const std::vector<Plot>& plots, int columns = 1, int width = 640, int height = 420);

void write_svg(const std::filesystem::path& path, const std::vector<Plot>& plots, int columns = 1, int width = 640,
               int height = 420);

} // namespace talbot::app
