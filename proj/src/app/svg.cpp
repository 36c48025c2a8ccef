#include "talbot/app/svg.hpp"

#include "talbot/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace talbot::app
{

namespace
{

struct Range
{
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v)
  {
    if (std::isfinite(v))
    {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void settle()
  {
    if (!(lo <= hi))
    {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi)))
    {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

/// Tick spacing of 1, 2 or 5 times a power of ten giving about five ticks.
double nice_step(double span)
{
  const double raw = span / 5.0;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * p >= raw)
      return m * p;
  return 10.0 * p;
}

std::string escape(const std::string& s)
{
  std::string out;
  for (char c : s)
  {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

std::string panel(const Plot& plot, double ox, double oy, int width, int height)
{
  const double left = ox + 64, right = ox + width - 16, top = oy + 30, bottom = oy + height - 46;
  Range xr, yr;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
    {
      if (!std::isfinite(s.y[i]))
        continue;
      xr.add(s.x[i]);
      const double e = i < s.error.size() && std::isfinite(s.error[i]) ? s.error[i] : 0.0;
      yr.add(s.y[i] - e);
      yr.add(s.y[i] + e);
    }
  xr.settle();
  yr.settle();
  const double pad = 0.05 * (yr.hi - yr.lo);
  yr.lo -= pad;
  yr.hi += pad;
  auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * (right - left); };
  auto py = [&](double y) { return bottom - (y - yr.lo) / (yr.hi - yr.lo) * (bottom - top); };

  std::string out;
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                     0.5 * (left + right), oy + 18, escape(plot.title));
  out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#000\"/>\n",
                     left, top, right - left, bottom - top);
  const double xs = nice_step(xr.hi - xr.lo);
  for (double t = std::ceil(xr.lo / xs) * xs; t <= xr.hi + 1e-9 * xs; t += xs)
    out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#000\"/>"
                       "<text x=\"{0:.1f}\" y=\"{3:.1f}\" font-size=\"11\" text-anchor=\"middle\">{4:g}</text>\n",
                       px(t), bottom, bottom + 5, bottom + 18, std::abs(t) < 1e-12 * xs ? 0.0 : t);
  const double ys = nice_step(yr.hi - yr.lo);
  for (double t = std::ceil(yr.lo / ys) * ys; t <= yr.hi + 1e-9 * ys; t += ys)
    out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"#000\"/>"
                       "<text x=\"{3:.1f}\" y=\"{4:.1f}\" font-size=\"11\" text-anchor=\"end\">{5:g}</text>\n",
                       left - 5, py(t), left, left - 8, py(t) + 4, std::abs(t) < 1e-12 * ys ? 0.0 : t);
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                     0.5 * (left + right), bottom + 36, escape(plot.x_label));
  out += fmt::format("<text transform=\"translate({:.1f},{:.1f}) rotate(-90)\" font-size=\"12\" "
                     "text-anchor=\"middle\">{}</text>\n",
                     ox + 16, 0.5 * (top + bottom), escape(plot.y_label));

  double legend_y = top + 14;
  for (const auto& s : plot.series)
  {
    const std::string dash = s.dashed ? " stroke-dasharray=\"6,4\"" : "";
    if (s.line)
    {
      std::string points;
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
        if (std::isfinite(s.y[i]))
          points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
      out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n", s.color,
                         dash, points);
    }
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
    {
      if (!std::isfinite(s.y[i]))
        continue;
      if (i < s.error.size() && std::isfinite(s.error[i]) && s.error[i] > 0.0)
        out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"{3}\"/>\n",
                           px(s.x[i]), py(s.y[i] - s.error[i]), py(s.y[i] + s.error[i]), s.color);
      if (s.markers)
        out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n", px(s.x[i]), py(s.y[i]),
                           s.color);
    }
    if (!s.label.empty())
    {
      out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" "
                         "stroke-width=\"2\"{}/>",
                         right - 150, legend_y - 4, right - 126, legend_y - 4, s.color, dash);
      out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\">{}</text>\n", right - 120, legend_y,
                         escape(s.label));
      legend_y += 15;
    }
  }
  return out;
}

} // namespace

std::string render_svg(const std::vector<Plot>& plots, int columns, int width, int height)
{
  columns = std::max(1, columns);
  const int rows = (static_cast<int>(plots.size()) + columns - 1) / columns;
  std::string out = fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
                                "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\">\n"
                                "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n",
                                columns * width, std::max(1, rows) * height);
  for (std::size_t i = 0; i < plots.size(); ++i)
    out += panel(plots[i], static_cast<double>(i % columns) * width, static_cast<double>(i / columns) * height, width,
                 height);
  out += "</svg>\n";
  return out;
}

void write_svg(const std::filesystem::path& path, const std::vector<Plot>& plots, int columns, int width, int height)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write " + path.string());
  out << render_svg(plots, columns, width, height);
}

} // namespace talbot::app
