#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace talbot::imaging
{

enum class FrameKind
{
  fluorescence,
  reference,
  dark,
  corrected
};

std::string to_string(FrameKind kind);
FrameKind frame_kind_from_string(const std::string& text);

/// Row-major raster in detector coordinates: x (columns) runs along the
/// adsorber, y (rows) is the fall height below the reference. Pixel (i, j)
/// covers [origin + i pitch, origin + (i + 1) pitch) in each axis, in um.
class ImageFrame
{
public:
  ImageFrame() = default;
  ImageFrame(int width, int height, double pitch_um, FrameKind kind, double fill = 0.0);

  int width() const { return mWidth; }
  int height() const { return mHeight; }
  double pitch_um() const { return mPitch; }
  FrameKind kind() const { return mKind; }
  void set_kind(FrameKind kind) { mKind = kind; }

  double origin_x_um = 0.0;
  double origin_y_um = 0.0;

  double& at(int x, int y) { return mPixels[index(x, y)]; }
  double at(int x, int y) const { return mPixels[index(x, y)]; }
  bool valid(int x, int y) const { return mValid[index(x, y)] != 0; }
  void set_valid(int x, int y, bool ok) { mValid[index(x, y)] = ok ? 1 : 0; }

  double x_center_um(int x) const { return origin_x_um + (x + 0.5) * mPitch; }
  double y_center_um(int y) const { return origin_y_um + (y + 0.5) * mPitch; }

  bool same_shape(const ImageFrame& other) const;
  std::vector<double>& pixels() { return mPixels; }
  const std::vector<double>& pixels() const { return mPixels; }
  std::size_t invalid_count() const;

private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * mWidth + x; }

  int mWidth = 0;
  int mHeight = 0;
  double mPitch = 1.0;
  FrameKind mKind = FrameKind::fluorescence;
  std::vector<double> mPixels;
  std::vector<std::uint8_t> mValid;
};

/// Single-channel 32-bit float TIFF; invalid pixels are stored as NaN.
void write_tiff(const ImageFrame& frame, const std::filesystem::path& path);
ImageFrame read_tiff(const std::filesystem::path& path, double pitch_um, FrameKind kind);

/// 16-bit grayscale PNG of round(value / scale), clamped to [0, 65535]; invalid
/// pixels are written as 0. Returns the scale used (auto when scale <= 0).
double write_png16(const ImageFrame& frame, const std::filesystem::path& path, double scale = 0.0);
ImageFrame read_png16(const std::filesystem::path& path, double scale, double pitch_um, FrameKind kind);

} // namespace talbot::imaging
