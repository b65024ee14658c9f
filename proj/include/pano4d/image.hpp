#pragma once

#include "pano4d/core.hpp"

#include <span>
#include <vector>

namespace pano4d {

/// Dense row-major grid of real samples, `channels` values per pixel.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Equirectangular grid: width is exactly twice the height.
class ErpFrame : public Image {
 public:
  ErpFrame() = default;
  ErpFrame(int height, int channels, double fill = 0.0);
  /// Adopts an image; throws ArgumentError unless width == 2 * height.
  explicit ErpFrame(Image image);
};

/// Ordered frames sharing one shape.
struct ErpVideo {
  std::vector<ErpFrame> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  /// Throws ArgumentError when empty or when shapes disagree.
  void validate() const;
};

struct ErpDims {
  int height = 0;
  int width = 0;
};

inline ErpDims dims_of(const Image& im) { return {im.height(), im.width()}; }

}  // namespace pano4d
