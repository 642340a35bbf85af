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

// Parametric environmental styles for drone imagery and the style labels
// used to supervise the style classifier.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "muse/error.hpp"
#include "muse/image.hpp"
#include "muse/rng.hpp"

namespace muse {

// Canonical order; the drone style label is index + 1.
enum class StyleKind { Normal, Fog, Rain, Snow, FogRain, FogSnow, RainSnow, Dark, Overexposure, Wind };

inline constexpr std::array<StyleKind, 10> kAllStyles{
    StyleKind::Normal,  StyleKind::Fog,      StyleKind::Rain, StyleKind::Snow,         StyleKind::FogRain,
    StyleKind::FogSnow, StyleKind::RainSnow, StyleKind::Dark, StyleKind::Overexposure, StyleKind::Wind};

enum class Platform { Satellite, Drone };

inline constexpr int style_index(StyleKind s) { return static_cast<int>(s); }

inline constexpr std::string_view style_name(StyleKind s) {
  constexpr std::array<std::string_view, 10> names{"normal",   "fog",       "rain", "snow",         "fog+rain",
                                                   "fog+snow", "rain+snow", "dark", "overexposure", "wind"};
  return names[static_cast<std::size_t>(s)];
}

inline std::optional<StyleKind> parse_style(std::string_view name) {
  for (StyleKind s : kAllStyles) {
    if (style_name(s) == name) return s;
  }
  return std::nullopt;
}

// Satellite imagery has a constant style (label 0); drone label = index + 1.
inline int style_label(Platform platform, StyleKind style) {
  if (platform == Platform::Satellite) {
    if (style != StyleKind::Normal) {
      throw UsageError("style_label: satellite images only carry the normal style, got " +
                       std::string(style_name(style)));
    }
    return 0;
  }
  return style_index(style) + 1;
}

// An evaluation condition: one of the ten trained styles or the unseen
// fog+rain+snow composite.
struct Condition {
  bool composite = false;
  StyleKind style = StyleKind::Normal;

  static Condition seen(StyleKind s) { return {false, s}; }
  static Condition unseen() { return {true, StyleKind::Normal}; }

  std::string name() const { return composite ? "fog+rain+snow" : std::string(style_name(style)); }
  bool operator==(const Condition&) const = default;

  static std::optional<Condition> parse(std::string_view token) {
    if (token == "fog+rain+snow") return unseen();
    if (auto s = parse_style(token)) return seen(*s);
    return std::nullopt;
  }
};

namespace weather {

struct Streak {
  double x, y;        // start point
  double length;      // pixels
  double angle_deg;   // tilt from vertical, negative leans left
  double gray;        // streak intensity
};

struct Flake {
  double x, y, radius;
};

struct StyleParams {
  double fog_alpha_min = 0.4, fog_alpha_max = 0.6;
  int rain_min = 40, rain_max = 80;
  double rain_len_min = 8, rain_len_max = 16;
  double rain_angle_min = -30, rain_angle_max = -10;
  double rain_gray = 200, rain_gray_jitter = 20;
  double rain_opacity = 0.5;
  double rain_width = 2.0;
  int snow_min = 60, snow_max = 120;
  double snow_radius_min = 1, snow_radius_max = 2;
  double snow_opacity = 0.8, snow_brightness = 1.1;
  double dark_mul_min = 0.3, dark_mul_max = 0.5, dark_add_min = -30, dark_add_max = 0;
  double over_mul = 1.6, over_add_min = 0, over_add_max = 30;
  int wind_len_min = 9, wind_len_max = 15;
};

inline const StyleParams& default_params() {
  static const StyleParams p;
  return p;
}

// out = alpha * 255 + (1 - alpha) * in.
inline Image fog(const Image& in, double alpha) {
  Image out = in;
  for (auto& p : out.pixels) p = saturate_u8(alpha * 255.0 + (1.0 - alpha) * p);
  return out;
}

// out = in * mul + add, saturated.
inline Image brightness(const Image& in, double mul, double add) {
  Image out = in;
  for (auto& p : out.pixels) p = saturate_u8(p * mul + add);
  return out;
}

namespace detail {

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

// Alpha-blends `value` into every channel of the pixel.
inline void blend(std::vector<double>& buf, std::size_t idx, double value, double alpha) {
  for (std::size_t c = 0; c < 3; ++c) buf[idx * 3 + c] = (1.0 - alpha) * buf[idx * 3 + c] + alpha * value;
}

inline std::vector<double> to_buffer(const Image& in) { return {in.pixels.begin(), in.pixels.end()}; }

inline Image from_buffer(const Image& shape, const std::vector<double>& buf, double gain = 1.0) {
  Image out(shape.width, shape.height);
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = saturate_u8(buf[i] * gain);
  return out;
}

}  // namespace detail

// Anti-aliased streaks: full coverage within width/2 of the segment, then a
// one-pixel linear falloff.
inline Image rain(const Image& in, const std::vector<Streak>& streaks, double opacity, double width = 1.0) {
  auto buf = detail::to_buffer(in);
  const auto w = static_cast<std::ptrdiff_t>(in.width), h = static_cast<std::ptrdiff_t>(in.height);
  for (const auto& s : streaks) {
    const double a = s.angle_deg * std::numbers::pi / 180.0;
    const double ex = s.x + s.length * std::sin(a), ey = s.y + s.length * std::cos(a);
    const auto pad = static_cast<std::ptrdiff_t>(std::ceil(0.5 * (width + 1.0)));
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(std::min(s.x, ex))) - pad;
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(std::max(s.x, ex))) + pad;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(std::min(s.y, ey))) - pad;
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(std::max(s.y, ey))) + pad;
    for (auto y = std::max<std::ptrdiff_t>(0, y0); y <= std::min(h - 1, y1); ++y) {
      for (auto x = std::max<std::ptrdiff_t>(0, x0); x <= std::min(w - 1, x1); ++x) {
        const double d = detail::segment_distance(static_cast<double>(x), static_cast<double>(y), s.x, s.y, ex, ey);
        const double cov = std::clamp(0.5 * (width + 1.0) - d, 0.0, 1.0);
        if (cov > 0) detail::blend(buf, static_cast<std::size_t>(y * w + x), s.gray, opacity * cov);
      }
    }
  }
  return detail::from_buffer(in, buf);
}

// White anti-aliased discs, then a global brightness gain.
inline Image snow(const Image& in, const std::vector<Flake>& flakes, double opacity, double gain) {
  auto buf = detail::to_buffer(in);
  const auto w = static_cast<std::ptrdiff_t>(in.width), h = static_cast<std::ptrdiff_t>(in.height);
  for (const auto& f : flakes) {
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(f.x - f.radius - 1));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(f.x + f.radius + 1));
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(f.y - f.radius - 1));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(f.y + f.radius + 1));
    for (auto y = std::max<std::ptrdiff_t>(0, y0); y <= std::min(h - 1, y1); ++y) {
      for (auto x = std::max<std::ptrdiff_t>(0, x0); x <= std::min(w - 1, x1); ++x) {
        const double d = std::hypot(static_cast<double>(x) - f.x, static_cast<double>(y) - f.y);
        const double cov = std::clamp(f.radius + 0.5 - d, 0.0, 1.0);
        if (cov > 0) detail::blend(buf, static_cast<std::size_t>(y * w + x), 255.0, opacity * cov);
      }
    }
  }
  return detail::from_buffer(in, buf, gain);
}

// Averages `length` bilinear samples along a line through each pixel.
inline Image motion_blur(const Image& in, int length, double angle_deg) {
  Image out(in.width, in.height);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(a), dy = std::sin(a);
  const int half = length / 2;
  for (std::size_t y = 0; y < in.height; ++y) {
    for (std::size_t x = 0; x < in.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int t = -half; t <= half; ++t) {
          acc += sample_bilinear(in, static_cast<double>(x) + t * dx, static_cast<double>(y) + t * dy, c);
        }
        out.at(x, y, c) = saturate_u8(acc / (2 * half + 1));
      }
    }
  }
  return out;
}

// Samplers: draw the stage parameters from `rng`, then apply.

inline Image fog(const Image& in, Rng& rng, const StyleParams& p = default_params()) {
  return fog(in, rng.uniform(p.fog_alpha_min, p.fog_alpha_max));
}

inline Image rain(const Image& in, Rng& rng, const StyleParams& p = default_params()) {
  const auto count = rng.uniform_int(p.rain_min, p.rain_max);
  std::vector<Streak> streaks;
  streaks.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    Streak s{};
    s.length = rng.uniform(p.rain_len_min, p.rain_len_max);
    s.angle_deg = rng.uniform(p.rain_angle_min, p.rain_angle_max);
    // Start above the frame as well so the top rows receive streaks.
    s.x = rng.uniform(0.0, static_cast<double>(in.width) + p.rain_len_max * 0.5);
    s.y = rng.uniform(-p.rain_len_max, static_cast<double>(in.height));
    s.gray = rng.uniform(p.rain_gray - p.rain_gray_jitter, p.rain_gray + p.rain_gray_jitter);
    streaks.push_back(s);
  }
  return rain(in, streaks, p.rain_opacity, p.rain_width);
}

inline Image snow(const Image& in, Rng& rng, const StyleParams& p = default_params()) {
  const auto count = rng.uniform_int(p.snow_min, p.snow_max);
  std::vector<Flake> flakes;
  flakes.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    Flake f{};
    f.x = rng.uniform(0.0, static_cast<double>(in.width));
    f.y = rng.uniform(0.0, static_cast<double>(in.height));
    f.radius = rng.uniform(p.snow_radius_min, p.snow_radius_max);
    flakes.push_back(f);
  }
  return snow(in, flakes, p.snow_opacity, p.snow_brightness);
}

inline Image dark(const Image& in, Rng& rng, const StyleParams& p = default_params()) {
  const double mul = rng.uniform(p.dark_mul_min, p.dark_mul_max);
  const double add = rng.uniform(p.dark_add_min, p.dark_add_max);
  return brightness(in, mul, add);
}

inline Image overexposure(const Image& in, Rng& rng, const StyleParams& p = default_params()) {
  return brightness(in, p.over_mul, rng.uniform(p.over_add_min, p.over_add_max));
}

inline Image wind(const Image& in, Rng& rng, const StyleParams& p = default_params()) {
  const int steps = (p.wind_len_max - p.wind_len_min) / 2;
  const int length = p.wind_len_min + 2 * static_cast<int>(rng.uniform_int(0, steps));
  return motion_blur(in, length, rng.uniform(0.0, 180.0));
}

enum class Stage { Fog, Rain, Snow, Dark, Overexposure, Wind };

inline std::vector<Stage> stages_of(StyleKind s) {
  switch (s) {
    case StyleKind::Normal: return {};
    case StyleKind::Fog: return {Stage::Fog};
    case StyleKind::Rain: return {Stage::Rain};
    case StyleKind::Snow: return {Stage::Snow};
    case StyleKind::FogRain: return {Stage::Fog, Stage::Rain};
    case StyleKind::FogSnow: return {Stage::Fog, Stage::Snow};
    case StyleKind::RainSnow: return {Stage::Rain, Stage::Snow};
    case StyleKind::Dark: return {Stage::Dark};
    case StyleKind::Overexposure: return {Stage::Overexposure};
    case StyleKind::Wind: return {Stage::Wind};
  }
  return {};
}

// Each stage consumes exactly one 64-bit draw from `rng` as its own seed, so
// applying two styles in sequence on one stream equals the composite style.
inline Image run_stage(const Image& in, Stage stage, Rng& rng, const StyleParams& p) {
  Rng local(rng.next_u64());
  switch (stage) {
    case Stage::Fog: return fog(in, local, p);
    case Stage::Rain: return rain(in, local, p);
    case Stage::Snow: return snow(in, local, p);
    case Stage::Dark: return dark(in, local, p);
    case Stage::Overexposure: return overexposure(in, local, p);
    case Stage::Wind: return wind(in, local, p);
  }
  return in;
}

}  // namespace weather

inline Image apply_style(const Image& image, StyleKind style, Rng& rng,
                         const weather::StyleParams& params = weather::default_params()) {
  Image out = image;
  for (auto stage : weather::stages_of(style)) out = weather::run_stage(out, stage, rng, params);
  return out;
}

// Fog, then rain, then snow with independent draws. Evaluation only.
inline Image unseen_composite(const Image& image, Rng& rng,
                              const weather::StyleParams& params = weather::default_params()) {
  Image out = image;
  for (auto stage : {weather::Stage::Fog, weather::Stage::Rain, weather::Stage::Snow}) {
    out = weather::run_stage(out, stage, rng, params);
  }
  return out;
}

inline Image apply_condition(const Image& image, const Condition& cond, Rng& rng) {
  return cond.composite ? unseen_composite(image, rng) : apply_style(image, cond.style, rng);
}

}  // namespace muse
