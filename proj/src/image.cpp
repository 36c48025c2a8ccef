#include "talbot/image.hpp"

#include "talbot/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace talbot::imaging
{

namespace
{

cv::Mat load(const std::filesystem::path& path, int expected_depth)
{
  if (!std::filesystem::exists(path))
    throw DataError("image not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty())
    throw DataError("cannot decode image: " + path.string());
  if (m.channels() != 1 || m.depth() != expected_depth)
    throw DataError("unexpected pixel format in " + path.string());
  return m;
}

void save(const std::filesystem::path& path, const cv::Mat& m)
{
  bool ok = false;
  try
  {
    ok = cv::imwrite(path.string(), m);
  }
  catch (const cv::Exception& e)
  {
    throw DataError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok)
    throw DataError("cannot write " + path.string());
}

} // namespace

std::string to_string(FrameKind kind)
{
  switch (kind)
  {
  case FrameKind::fluorescence:
    return "fluorescence";
  case FrameKind::reference:
    return "reference";
  case FrameKind::dark:
    return "dark";
  case FrameKind::corrected:
    return "corrected";
  }
  return "unknown";
}

FrameKind frame_kind_from_string(const std::string& text)
{
  for (auto k : {FrameKind::fluorescence, FrameKind::reference, FrameKind::dark, FrameKind::corrected})
    if (to_string(k) == text)
      return k;
  throw DataError("unknown frame kind '" + text + "'");
}

ImageFrame::ImageFrame(int width, int height, double pitch_um, FrameKind kind, double fill)
    : mWidth(width), mHeight(height), mPitch(pitch_um), mKind(kind)
{
  if (width <= 0 || height <= 0)
    throw DomainError("image dimensions must be positive");
  if (!(pitch_um > 0.0))
    throw DomainError("pixel pitch must be positive");
  mPixels.assign(static_cast<std::size_t>(width) * height, fill);
  mValid.assign(mPixels.size(), 1);
}

bool ImageFrame::same_shape(const ImageFrame& other) const
{
  return mWidth == other.mWidth && mHeight == other.mHeight;
}

std::size_t ImageFrame::invalid_count() const
{
  return static_cast<std::size_t>(std::count(mValid.begin(), mValid.end(), 0));
}

void write_tiff(const ImageFrame& frame, const std::filesystem::path& path)
{
  cv::Mat m(frame.height(), frame.width(), CV_32FC1);
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
      m.at<float>(y, x) = frame.valid(x, y) ? static_cast<float>(frame.at(x, y))
                                            : std::numeric_limits<float>::quiet_NaN();
  save(path, m);
}

ImageFrame read_tiff(const std::filesystem::path& path, double pitch_um, FrameKind kind)
{
  const cv::Mat m = load(path, CV_32F);
  ImageFrame frame(m.cols, m.rows, pitch_um, kind);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
    {
      const float v = m.at<float>(y, x);
      const bool ok = std::isfinite(v);
      frame.at(x, y) = ok ? v : 0.0;
      frame.set_valid(x, y, ok);
    }
  return frame;
}

double write_png16(const ImageFrame& frame, const std::filesystem::path& path, double scale)
{
  if (scale <= 0.0)
  {
    double peak = 0.0;
    for (int y = 0; y < frame.height(); ++y)
      for (int x = 0; x < frame.width(); ++x)
        if (frame.valid(x, y))
          peak = std::max(peak, frame.at(x, y));
    scale = peak > 0.0 ? peak / 65535.0 : 1.0;
  }
  cv::Mat m(frame.height(), frame.width(), CV_16UC1);
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
    {
      const double v = frame.valid(x, y) ? std::round(frame.at(x, y) / scale) : 0.0;
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
  save(path, m);
  return scale;
}

ImageFrame read_png16(const std::filesystem::path& path, double scale, double pitch_um, FrameKind kind)
{
  if (!(scale > 0.0))
    throw DataError("PNG intensity scale must be positive");
  const cv::Mat m = load(path, CV_16U);
  ImageFrame frame(m.cols, m.rows, pitch_um, kind);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      frame.at(x, y) = scale * m.at<std::uint16_t>(y, x);
  return frame;
}

} // namespace talbot::imaging
