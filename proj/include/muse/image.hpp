// Copyright 2026 The muse Authors. All Rights Reserved.
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

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "muse/error.hpp"

namespace muse {

// 8-bit RGB, row-major, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

inline std::uint8_t saturate_u8(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

inline double mean_intensity(const Image& img) {
  double acc = 0;
  for (auto p : img.pixels) acc += p;
  return img.pixels.empty() ? 0.0 : acc / static_cast<double>(img.pixels.size());
}

// Binary P6 with maxval 255.
inline void write_ppm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image '" + path + "'");
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("failed writing image '" + path + "'");
}

inline Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image '" + path + "'");
  auto token = [&]() {
    std::string t;
    while (t.empty()) {
      const int c = is.get();
      if (c == EOF) throw InputError("'" + path + "': truncated PPM header");
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
      } else if (!std::isspace(c)) {
        t.push_back(static_cast<char>(c));
        while (is.peek() != EOF && !std::isspace(is.peek())) t.push_back(static_cast<char>(is.get()));
      }
    }
    return t;
  };
  if (token() != "P6") throw InputError("'" + path + "': not a binary P6 PPM");
  const std::size_t w = std::stoul(token()), h = std::stoul(token()), maxval = std::stoul(token());
  if (maxval != 255) throw InputError("'" + path + "': only 8-bit PPM is supported");
  is.get();
  Image img(w, h);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw InputError("'" + path + "': truncated pixel data");
  return img;
}

// Bilinear sample with edge clamping; returns channel value as double.
inline double sample_bilinear(const Image& img, double x, double y, std::size_t c) {
  const double maxx = static_cast<double>(img.width - 1), maxy = static_cast<double>(img.height - 1);
  x = std::clamp(x, 0.0, maxx);
  y = std::clamp(y, 0.0, maxy);
  const auto x0 = static_cast<std::size_t>(std::floor(x)), y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
  const double bot = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace muse
