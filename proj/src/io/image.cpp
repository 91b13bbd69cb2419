#include <png.h>

#include <cctype>
#include <cstring>
#include <string>

#include "segref/io.hpp"

namespace segref::io {

namespace {

ImageRaster decode_png(const Bytes& bytes, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorCode::kMalformed, path.string() + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  ImageRaster out;
  out.height = image.height;
  out.width = image.width;
  out.channels = gray ? 1 : 3;
  out.samples.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.samples.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::kMalformed, path.string() + ": " + image.message);
  }
  return out;
}

// Binary PNM: "P5"/"P6", whitespace-separated width, height, maxval (255),
// one whitespace byte, then samples. '#' comments are allowed in the header.
ImageRaster decode_pnm(const Bytes& bytes, const fs::path& path) {
  std::size_t pos = 2;
  const auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      v = v * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) fail(ErrorCode::kMalformed, path.string() + ": bad PNM header");
    return v;
  };
  ImageRaster out;
  out.channels = bytes[1] == '6' ? 3 : 1;
  out.width = next_number();
  out.height = next_number();
  if (next_number() != 255) fail(ErrorCode::kMalformed, path.string() + ": maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    fail(ErrorCode::kMalformed, path.string() + ": bad PNM header");
  }
  ++pos;
  const std::size_t n = out.width * out.height * out.channels;
  if (bytes.size() - pos != n) {
    fail(ErrorCode::kTruncated, path.string() + ": expected " + std::to_string(n) +
                                    " sample bytes, found " + std::to_string(bytes.size() - pos));
  }
  out.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return out;
}

}  // namespace

ImageRaster read_image(const fs::path& path) {
  const Bytes bytes = read_file(path);
  ImageRaster img;
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    img = decode_png(bytes, path);
  } else if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    img = decode_pnm(bytes, path);
  } else {
    fail(ErrorCode::kBadMagic, path.string() + ": not a PNG or binary PPM/PGM image");
  }
  img.validate();
  return img;
}

void write_png(const fs::path& path, const ImageRaster& img) {
  img.validate();
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.samples.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, path.string() + ": " + image.message);
  }
  Bytes bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, img.samples.data(), 0,
                                 nullptr)) {
    fail(ErrorCode::kIo, path.string() + ": " + image.message);
  }
  bytes.resize(size);
  write_file(path, bytes);
}

void write_ppm(const fs::path& path, const ImageRaster& img) {
  img.validate();
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  Bytes bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.samples.begin(), img.samples.end());
  write_file(path, bytes);
}

ImageRaster colorize(const LabelRaster& labels) {
  labels.validate();
  ImageRaster out{labels.height, labels.width, 3,
                  std::vector<std::uint8_t>(labels.ids.size() * 3, 0)};
  for (std::size_t p = 0; p < labels.ids.size(); ++p) {
    const std::uint32_t id = labels.ids[p];
    if (id == kIgnoreLabel) continue;
    // Knuth multiplicative hash; each channel takes one byte, kept off black
    std::uint32_t h = id * 2654435761u;
    out.samples[p * 3 + 0] = static_cast<std::uint8_t>(64 + (h >> 24) % 192);
    out.samples[p * 3 + 1] = static_cast<std::uint8_t>(64 + (h >> 16) % 192);
    out.samples[p * 3 + 2] = static_cast<std::uint8_t>(64 + (h >> 8) % 192);
  }
  return out;
}

}  // namespace segref::io
