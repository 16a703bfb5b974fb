// Copyright 2026 The elevssl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "elevssl/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "elevssl/errors.hpp"

namespace elevssl {
namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "raster IO assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

Shape2 read_header(std::ifstream& in, const fs::path& path) {
  std::array<unsigned char, 8> hdr{};
  if (!in.read(reinterpret_cast<char*>(hdr.data()), 8))
    throw ValidationError("elevation raster " + path.string() + ": truncated header");
  return {get_u32(hdr.data()), get_u32(hdr.data() + 4)};
}

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<png_byte> read_png(const fs::path& path, png_uint_32 format, Shape2& shape) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str()))
    throw ValidationError("cannot decode PNG " + path.string() + ": " + png.image.message);
  png.image.format = format;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buf.data(), 0, nullptr))
    throw ValidationError("cannot decode PNG " + path.string() + ": " + png.image.message);
  shape = {png.image.height, png.image.width};
  return buf;
}

void write_png(const fs::path& path, png_uint_32 format, const Shape2& shape, const std::vector<png_byte>& buf) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(shape.width);
  png.image.height = static_cast<png_uint_32>(shape.height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
}

png_byte quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<png_byte>(std::lround(c * 255.0f));
}

}  // namespace

void write_elevation(const fs::path& path, const torch::Tensor& elev) {
  TORCH_CHECK(elev.dim() == 2, "elevation raster must be 2-D");
  auto t = elev.to(torch::kFloat32).contiguous();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  put_u32(out, static_cast<std::uint32_t>(t.size(0)));
  put_u32(out, static_cast<std::uint32_t>(t.size(1)));
  out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

Shape2 read_elevation_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  return read_header(in, path);
}

torch::Tensor read_elevation(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  const Shape2 s = read_header(in, path);
  auto t = torch::empty({s.height, s.width}, torch::kFloat32);
  const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(t.data_ptr<float>()), bytes))
    throw ValidationError("elevation raster " + path.string() + ": truncated payload");
  return t;
}

void write_rgb_png(const fs::path& path, const torch::Tensor& rgb) {
  TORCH_CHECK(rgb.dim() == 3 && rgb.size(0) == 3, "rgb must be [3,H,W]");
  auto t = rgb.to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  const float* p = t.data_ptr<float>();
  std::vector<png_byte> buf(static_cast<std::size_t>(t.numel()));
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize(p[i]);
  write_png(path, PNG_FORMAT_RGB, {rgb.size(1), rgb.size(2)}, buf);
}

torch::Tensor read_rgb_png(const fs::path& path) {
  Shape2 s;
  auto buf = read_png(path, PNG_FORMAT_RGB, s);
  auto t = torch::empty({s.height, s.width, 3}, torch::kFloat32);
  float* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < buf.size(); ++i) p[i] = static_cast<float>(buf[i]) / 255.0f;
  return t.permute({2, 0, 1}).contiguous();
}

void write_mask_png(const fs::path& path, const torch::Tensor& mask) {
  TORCH_CHECK(mask.dim() == 2, "mask must be [H,W]");
  auto t = mask.to(torch::kUInt8).contiguous();
  const std::uint8_t* p = t.data_ptr<std::uint8_t>();
  std::vector<png_byte> buf(static_cast<std::size_t>(t.numel()));
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = p[i] ? 255 : 0;
  write_png(path, PNG_FORMAT_GRAY, {mask.size(0), mask.size(1)}, buf);
}

torch::Tensor read_mask_png(const fs::path& path) {
  Shape2 s;
  auto buf = read_png(path, PNG_FORMAT_GRAY, s);
  auto t = torch::empty({s.height, s.width}, torch::kUInt8);
  std::uint8_t* p = t.data_ptr<std::uint8_t>();
  for (std::size_t i = 0; i < buf.size(); ++i) p[i] = buf[i] >= 128 ? 1 : 0;
  return t;
}

Shape2 read_png_shape(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str()))
    throw ValidationError("cannot decode PNG " + path.string() + ": " + png.image.message);
  return {png.image.height, png.image.width};
}

}  // namespace elevssl
