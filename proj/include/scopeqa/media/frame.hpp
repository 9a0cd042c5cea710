#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scopeqa/error.hpp"

namespace scopeqa::media {

// Planar RGB raster, values in [0, 1]. Plane c, row y, column x lives at
// data[(c * height + y) * width + x].
class Frame {
 public:
  static constexpr std::size_t kChannels = 3;

  Frame() = default;
  Frame(std::size_t width, std::size_t height, float fill = 0.0f)
      : width_(width), height_(height), data_(width * height * kChannels, fill) {}
  // Validates length and range.
  Frame(std::size_t width, std::size_t height, std::vector<float> data);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t plane_size() const { return width_ * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<float> plane(std::size_t c) {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<const float> plane(std::size_t c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  bool same_dimensions(const Frame& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  void clamp01();

  bool operator==(const Frame&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<float> data_;
};

// 8-bit boundary conversion: v = q / 255 on load, q = floor(v * 255 + 0.5)
// on store, so load -> store is bit-exact.
inline float from_u8(std::uint8_t q) { return float(q) / 255.0f; }
std::uint8_t to_u8(float v);

// PPM (binary P6, maxval 255) or 8-bit RGB PNG, chosen by file contents.
Frame load_frame(const std::filesystem::path& path);

// Format chosen by extension: ".png" writes PNG, anything else PPM.
void write_frame(const Frame& frame, const std::filesystem::path& path);

Frame decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Frame& frame);

// Top-left crop; region must lie inside the frame.
Frame crop(const Frame& frame, std::size_t x0, std::size_t y0, std::size_t width,
           std::size_t height);
Frame center_crop(const Frame& frame, std::size_t width, std::size_t height);
Frame flip_horizontal(const Frame& frame);

}  // namespace scopeqa::media
