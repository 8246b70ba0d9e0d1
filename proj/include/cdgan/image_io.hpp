#pragma once

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

// jpeglib.h expects FILE and size_t to be declared first.
#include <jpeglib.h>

#include "cdgan/error.hpp"

namespace cdgan {

// 8-bit interleaved pixels, row-major, channels = 1 (gray) or 3 (RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_prefix(const std::filesystem::path& p, std::size_t n) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw DataError("cannot open image file " + p.string());
  }
  std::vector<std::uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

inline Image8 read_png(const std::filesystem::path& p) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, p.c_str()) == 0) {
    throw DataError("cannot decode PNG " + p.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + p.string() + ": " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void cdgan_jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline Image8 read_jpeg(const std::filesystem::path& p) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(p.c_str(), "rb"), &std::fclose);
  if (!file) {
    throw DataError("cannot open image file " + p.string());
  }
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = cdgan_jpeg_error_exit;
  Image8 out;
  if (setjmp(err.jump) != 0) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("cannot decode JPEG " + p.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.channels = 3;
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace detail

// Decodes a PNG or JPEG file (sniffed from its signature) to RGB.
inline Image8 read_image(const std::filesystem::path& p) {
  const auto sig = detail::read_prefix(p, 8);
  static constexpr std::uint8_t kPng[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (sig.size() == 8 && std::equal(sig.begin(), sig.end(), kPng)) {
    return detail::read_png(p);
  }
  if (sig.size() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) {
    return detail::read_jpeg(p);
  }
  throw DataError("unsupported or corrupt image file " + p.string() + " (expected PNG or JPEG)");
}

inline void write_png(const std::filesystem::path& p, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InputError("write_png: channels must be 1 or 3");
  }
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw InputError("write_png: pixel buffer does not match extents");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&img, p.c_str(), 0, image.pixels.data(), 0, nullptr) == 0) {
    throw DataError("cannot write PNG " + p.string() + ": " + img.message);
  }
}

}  // namespace cdgan
