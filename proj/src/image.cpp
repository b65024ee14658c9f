#include "pano4d/image.hpp"

#include <string>

namespace pano4d {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ArgumentError("image dimensions must be non-negative");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ErpFrame::ErpFrame(int height, int channels, double fill) : Image(height, 2 * height, channels, fill) {
  if (height < 1 || channels < 1) throw ArgumentError("ERP frame needs H >= 1 and C >= 1");
}

ErpFrame::ErpFrame(Image image) : Image(std::move(image)) {
  if (width() != 2 * height() || height() < 1 || channels() < 1) {
    throw ArgumentError("ERP frame requires W == 2*H, got " + std::to_string(height()) + "x" +
                        std::to_string(width()));
  }
}

void ErpVideo::validate() const {
  if (frames.empty()) throw ArgumentError("ERP video must contain at least one frame");
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw ArgumentError("ERP video frames differ in shape");
  }
}

}  // namespace pano4d
