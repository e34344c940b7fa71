#pragma once

#include <cstddef>
#include <vector>

namespace setpose {

inline constexpr std::size_t kImageChannels = 3;

/// H x W x C float image, row-major, channel-last, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = kImageChannels;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = kImageChannels)
      : height(h), width(w), channels(c), pixels(h * w * c, 0.0f) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace setpose
