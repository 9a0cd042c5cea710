#include "scopeqa/media/frame.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace scopeqa::media {

namespace fs = std::filesystem;

Frame::Frame(std::size_t width, std::size_t height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  require(data_.size() == width_ * height_ * kChannels, ErrorCode::kShape,
          "frame data length " + std::to_string(data_.size()) + " != " +
              std::to_string(width_) + "x" + std::to_string(height_) + "x3");
  for (float v : data_) {
    require(v >= 0.0f && v <= 1.0f, ErrorCode::kPrecondition,
            "frame values must lie in [0, 1]");
  }
}

void Frame::clamp01() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

std::uint8_t to_u8(float v) {
  const float q = std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
  return static_cast<std::uint8_t>(std::min(q, 255.0f));
}

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Frame from_interleaved(std::size_t w, std::size_t h, const std::uint8_t* rgb) {
  Frame f(w, h);
  const std::size_t plane = w * h;
  auto values = f.values();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) values[c * plane + i] = from_u8(rgb[i * 3 + c]);
  }
  return f;
}

std::vector<std::uint8_t> to_interleaved(const Frame& f) {
  const std::size_t plane = f.plane_size();
  std::vector<std::uint8_t> rgb(plane * 3);
  auto values = f.values();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) rgb[i * 3 + c] = to_u8(values[c * plane + i]);
  }
  return rgb;
}

// Reads one whitespace-delimited ASCII header token, skipping # comments.
std::string ppm_token(std::span<const std::uint8_t> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok += char(b[pos++]);
  return tok;
}

std::size_t parse_dim(const std::string& tok, const char* what) {
  require(!tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos,
          ErrorCode::kIo, std::string("malformed PPM ") + what);
  return std::stoul(tok);
}

Frame decode_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorCode::kIo, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  if (!color || alpha) {
    png_image_free(&image);
    fail(ErrorCode::kShape, "PNG " + path.string() + " is not 3-channel RGB");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::kIo, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  return from_interleaved(image.width, image.height, buffer.data());
}

void encode_png(const Frame& frame, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(frame.width());
  image.height = png_uint_32(frame.height());
  image.format = PNG_FORMAT_RGB;
  const auto rgb = to_interleaved(frame);
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

Frame decode_ppm(std::span<const std::uint8_t> b) {
  std::size_t pos = 0;
  const std::string magic = ppm_token(b, pos);
  if (magic == "P5" || magic == "P2") {
    fail(ErrorCode::kShape, "grayscale PNM is not a 3-channel image");
  }
  require(magic == "P6", ErrorCode::kIo, "unsupported image format (expected P6 PPM)");
  const std::size_t w = parse_dim(ppm_token(b, pos), "width");
  const std::size_t h = parse_dim(ppm_token(b, pos), "height");
  const std::size_t maxval = parse_dim(ppm_token(b, pos), "maxval");
  require(maxval == 255, ErrorCode::kIo, "only maxval 255 PPM is supported");
  require(w > 0 && h > 0, ErrorCode::kIo, "PPM has zero dimension");
  ++pos;  // single whitespace before the raster
  require(pos + w * h * 3 <= b.size(), ErrorCode::kIo, "truncated PPM raster");
  return from_interleaved(w, h, b.data() + pos);
}

std::vector<std::uint8_t> encode_ppm(const Frame& frame) {
  const std::string header = "P6\n" + std::to_string(frame.width()) + " " +
                             std::to_string(frame.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto rgb = to_interleaved(frame);
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

Frame load_frame(const fs::path& path) {
  require(fs::exists(path), ErrorCode::kIo, "no such file: " + path.string());
  std::vector<std::uint8_t> bytes = read_bytes(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) {
    return decode_png(path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_ppm(bytes);
  fail(ErrorCode::kIo, "unsupported image format: " + path.string());
}

void write_frame(const Frame& frame, const fs::path& path) {
  if (path.extension() == ".png") {
    encode_png(frame, path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorCode::kIo, "cannot write " + path.string());
  const auto bytes = encode_ppm(frame);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  require(bool(out), ErrorCode::kIo, "short write to " + path.string());
}

Frame crop(const Frame& frame, std::size_t x0, std::size_t y0, std::size_t width,
           std::size_t height) {
  require(x0 + width <= frame.width() && y0 + height <= frame.height(), ErrorCode::kShape,
          "crop region exceeds frame");
  Frame out(width, height);
  for (std::size_t c = 0; c < Frame::kChannels; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = frame.at(c, y0 + y, x0 + x);
  return out;
}

Frame center_crop(const Frame& frame, std::size_t width, std::size_t height) {
  require(width <= frame.width() && height <= frame.height(), ErrorCode::kShape,
          "center crop " + std::to_string(width) + "x" + std::to_string(height) +
              " larger than frame " + std::to_string(frame.width()) + "x" +
              std::to_string(frame.height()));
  return crop(frame, (frame.width() - width) / 2, (frame.height() - height) / 2, width, height);
}

Frame flip_horizontal(const Frame& frame) {
  Frame out(frame.width(), frame.height());
  const std::size_t w = frame.width();
  for (std::size_t c = 0; c < Frame::kChannels; ++c)
    for (std::size_t y = 0; y < frame.height(); ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = frame.at(c, y, w - 1 - x);
  return out;
}

}  // namespace scopeqa::media
