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

// Procedural cross-view dataset: per identity a top-down "satellite" scene
// and D "drone" views obtained by rotating, scaling and shifting a wider
// rendering of the same scene.
//
// Layout: <root>/{train,test,distractor}/{satellite,drone}/<id>/<n>.ppm and
// <root>/manifest.tsv (id, split).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "muse/error.hpp"
#include "muse/image.hpp"
#include "muse/model.hpp"
#include "muse/rng.hpp"
#include "muse/weather.hpp"

namespace muse {

struct DatasetSpec {
  std::size_t train_ids = 32;
  std::size_t test_ids = 16;
  std::size_t views_per_id = 8;
  std::size_t image_size = 64;
  std::size_t distractor_ids = 8;
  std::uint64_t seed = kDefaultSeed;

  void validate() const {
    if (train_ids < 2) throw ConfigError("dataset: need at least 2 training identities");
    if (test_ids < 1) throw ConfigError("dataset: need at least 1 test identity");
    if (views_per_id < 1) throw ConfigError("dataset: need at least 1 drone view per identity");
    if (image_size < 16 || image_size % 16 != 0) throw ConfigError("dataset: image size must be a multiple of 16");
  }
};

enum class Split { Train, Test, Distractor };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Distractor: return "distractor";
  }
  return "";
}

namespace synth {

struct Rgb {
  double r, g, b;
};

// Building roof palette shared by every identity.
inline constexpr std::array<Rgb, 8> kRoofColors{{{196, 64, 52},
                                                 {222, 214, 200},
                                                 {70, 92, 150},
                                                 {150, 150, 156},
                                                 {214, 160, 60},
                                                 {96, 60, 44},
                                                 {60, 140, 140},
                                                 {180, 90, 150}}};

inline constexpr std::array<Rgb, 4> kGroundColors{{{96, 128, 70}, {132, 120, 90}, {110, 112, 104}, {80, 110, 84}}};

struct Shape2d {
  std::vector<std::array<double, 2>> polygon;  // convex, world pixels
  Rgb color;
};

inline bool inside_convex(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    const double cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
    pos |= cross > 0;
    neg |= cross < 0;
    if (pos && neg) return false;
  }
  return true;
}

inline std::vector<std::array<double, 2>> rectangle(double cx, double cy, double w, double h, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<std::array<double, 2>> out;
  for (auto [dx, dy] : {std::pair{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}}) {
    out.push_back({cx + c * dx - s * dy, cy + s * dx + c * dy});
  }
  return out;
}

// Smooth value noise in [0,1] on a lattice of the given cell size.
inline std::vector<double> value_noise(std::size_t size, double cell, Rng& rng) {
  const std::size_t lattice = static_cast<std::size_t>(std::ceil(static_cast<double>(size) / cell)) + 2;
  std::vector<double> grid(lattice * lattice);
  for (auto& v : grid) v = rng.uniform();
  std::vector<double> out(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double gx = static_cast<double>(x) / cell, gy = static_cast<double>(y) / cell;
      const auto ix = static_cast<std::size_t>(gx), iy = static_cast<std::size_t>(gy);
      double fx = gx - static_cast<double>(ix), fy = gy - static_cast<double>(iy);
      fx = fx * fx * (3 - 2 * fx);
      fy = fy * fy * (3 - 2 * fy);
      const double a = grid[iy * lattice + ix], b = grid[iy * lattice + ix + 1];
      const double c = grid[(iy + 1) * lattice + ix], d = grid[(iy + 1) * lattice + ix + 1];
      out[y * size + x] = (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
    }
  }
  return out;
}

// Renders the wide scene (3x the image size) around one location.
inline Image render_world(std::size_t image_size, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t world = image_size * 3;
  const double s = static_cast<double>(image_size);
  const double center = static_cast<double>(world) / 2.0;

  const Rgb ground = kGroundColors[static_cast<std::size_t>(rng.uniform_int(0, kGroundColors.size() - 1))];
  const auto coarse = value_noise(world, s / 4.0, rng);
  const auto fine = value_noise(world, 3.0, rng);

  std::vector<Shape2d> shapes;
  // Roads crossing the scene.
  const auto roads = rng.uniform_int(0, 2);
  for (std::int64_t i = 0; i < roads; ++i) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double offset = rng.uniform(-0.35, 0.35) * s;
    const double nx = -std::sin(angle), ny = std::cos(angle);
    shapes.push_back({rectangle(center + nx * offset, center + ny * offset, 3.0 * world, rng.uniform(0.05, 0.08) * s,
                                angle),
                      {64, 64, 68}});
  }
  // Surrounding blocks, visible when a drone view zooms out.
  for (int i = 0; i < 10; ++i) {
    const double r = rng.uniform(0.75, 1.3) * s, t = rng.uniform(0.0, 2 * std::numbers::pi);
    const Rgb col = kRoofColors[static_cast<std::size_t>(rng.uniform_int(0, kRoofColors.size() - 1))];
    shapes.push_back({rectangle(center + r * std::cos(t), center + r * std::sin(t), rng.uniform(0.1, 0.25) * s,
                                rng.uniform(0.1, 0.25) * s, rng.uniform(0.0, std::numbers::pi / 2)),
                      col});
  }
  const auto buildings = rng.uniform_int(3, 7);
  for (std::int64_t i = 0; i < buildings; ++i) {
    const double r = rng.uniform(0.0, 0.45) * s, t = rng.uniform(0.0, 2 * std::numbers::pi);
    const double angle = rng.bernoulli(0.5) ? 0.0 : rng.uniform(0.0, std::numbers::pi / 2);
    const Rgb col = kRoofColors[static_cast<std::size_t>(rng.uniform_int(0, kRoofColors.size() - 1))];
    shapes.push_back({rectangle(center + r * std::cos(t), center + r * std::sin(t), rng.uniform(0.1, 0.3) * s,
                                rng.uniform(0.1, 0.3) * s, angle),
                      col});
  }
  // Landmark: a bright regular polygon near the centre.
  {
    const auto sides = rng.uniform_int(3, 6);
    const double radius = rng.uniform(0.08, 0.14) * s;
    const double r = rng.uniform(0.0, 0.3) * s, t = rng.uniform(0.0, 2 * std::numbers::pi);
    const double cx = center + r * std::cos(t), cy = center + r * std::sin(t), phase = rng.uniform(0.0, 2.0);
    std::vector<std::array<double, 2>> poly;
    for (std::int64_t k = 0; k < sides; ++k) {
      const double a = phase + 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(sides);
      poly.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
    }
    const Rgb col{rng.uniform(200, 250), rng.uniform(180, 240), rng.uniform(20, 80)};
    shapes.push_back({std::move(poly), col});
  }

  Image img(world, world);
  constexpr std::array<std::array<double, 2>, 4> kSub{{{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}}};
  for (std::size_t y = 0; y < world; ++y) {
    for (std::size_t x = 0; x < world; ++x) {
      const double tex = 0.75 + 0.35 * coarse[y * world + x] + 0.2 * (fine[y * world + x] - 0.5);
      std::array<double, 3> acc{0, 0, 0};
      for (const auto& sub : kSub) {
        const double px = static_cast<double>(x) + sub[0], py = static_cast<double>(y) + sub[1];
        Rgb col{ground.r * tex, ground.g * tex, ground.b * tex};
        for (const auto& sh : shapes) {
          if (inside_convex(sh.polygon, px, py)) {
            const double shade = 0.9 + 0.2 * fine[y * world + x];
            col = {sh.color.r * shade, sh.color.g * shade, sh.color.b * shade};
          }
        }
        acc[0] += col.r;
        acc[1] += col.g;
        acc[2] += col.b;
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = saturate_u8(acc[c] / 4.0);
    }
  }
  return img;
}

inline Image satellite_view(const Image& world, std::size_t size) {
  Image out(size, size);
  const std::size_t off = (world.width - size) / 2;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = world.at(x + off, y + off, c);
  return out;
}

struct ViewTransform {
  double angle_deg = 0, scale = 1, shift_x = 0, shift_y = 0, gain = 1;
};

inline ViewTransform sample_view_transform(Rng& rng, std::size_t size) {
  const double s = static_cast<double>(size);
  return {rng.uniform(0.0, 360.0), rng.uniform(0.7, 1.1), rng.uniform(-0.1, 0.1) * s, rng.uniform(-0.1, 0.1) * s,
          rng.uniform(0.95, 1.05)};
}

inline Image drone_view(const Image& world, std::size_t size, const ViewTransform& t) {
  Image out(size, size);
  const double a = t.angle_deg * std::numbers::pi / 180.0, c = std::cos(a), s = std::sin(a);
  const double wc = static_cast<double>(world.width) / 2.0, half = static_cast<double>(size) / 2.0;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - half) / t.scale, v = (static_cast<double>(y) + 0.5 - half) / t.scale;
      const double wx = wc + t.shift_x + c * u - s * v - 0.5, wy = wc + t.shift_y + s * u + c * v - 0.5;
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(x, y, ch) = saturate_u8(sample_bilinear(world, wx, wy, ch) * t.gain);
    }
  }
  return out;
}

// Per-channel box blur of radius r, clamped edges.
inline Image blur(const Image& img, int r) {
  Image out(img.width, img.height);
  const auto w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        int n = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int sx = std::clamp(x + dx, 0, w - 1), sy = std::clamp(y + dy, 0, h - 1);
            acc += img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
            ++n;
          }
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = saturate_u8(acc / n);
      }
    }
  }
  return out;
}

inline std::vector<double> disc_pixels(const Image& img, double angle_deg) {
  // Rotates about the centre and keeps the inscribed disc.
  const double a = angle_deg * std::numbers::pi / 180.0, c = std::cos(a), s = std::sin(a);
  const double half = static_cast<double>(img.width) / 2.0;
  std::vector<double> out;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double u = static_cast<double>(x) + 0.5 - half, v = static_cast<double>(y) + 0.5 - half;
      if (u * u + v * v > (half - 1) * (half - 1)) continue;
      const double sx = half + c * u - s * v - 0.5, sy = half + s * u + c * v - 0.5;
      for (std::size_t ch = 0; ch < 3; ++ch) out.push_back(sample_bilinear(img, sx, sy, ch));
    }
  }
  return out;
}

inline double ncc(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return da > 0 && db > 0 ? num / std::sqrt(da * db) : 0.0;
}

// Normalised cross-correlation (RGB, blurred) of b against a after the best
// of 8 rotations (multiples of 45 degrees).
inline double aligned_overlap(const Image& a, const Image& b, int blur_radius = 3) {
  const Image bb = blur(b, blur_radius);
  const auto ga = disc_pixels(blur(a, blur_radius), 0.0);
  double best = -1.0;
  for (int k = 0; k < 8; ++k) best = std::max(best, ncc(ga, disc_pixels(bb, 45.0 * k)));
  return best;
}

}  // namespace synth

inline std::string identity_dir_name(int id) {
  std::ostringstream os;
  os.width(4);
  os.fill('0');
  os << id;
  return os.str();
}

struct GenerationReport {
  std::size_t satellite_images = 0;
  std::size_t drone_images = 0;
  std::size_t triplets = 0;
  double triplet_pass_rate = 0.0;
};

struct IdentityRecord {
  int id = 0;  // global identity id
  Split split = Split::Train;
};

inline std::vector<IdentityRecord> identity_plan(const DatasetSpec& spec) {
  std::vector<IdentityRecord> out;
  int id = 0;
  for (std::size_t i = 0; i < spec.train_ids; ++i) out.push_back({id++, Split::Train});
  for (std::size_t i = 0; i < spec.test_ids; ++i) out.push_back({id++, Split::Test});
  for (std::size_t i = 0; i < spec.distractor_ids; ++i) out.push_back({id++, Split::Distractor});
  return out;
}

// Positive vs negative structural overlap on triplets (satellite anchor,
// drone view of the same identity, drone view of another identity).
inline double triplet_self_check(const std::vector<Image>& satellites,
                                 const std::vector<std::vector<Image>>& drones, std::size_t triplets,
                                 std::uint64_t seed) {
  if (satellites.size() < 2) return 1.0;
  Rng rng(seed_combine({seed, 0x7e1f}));
  std::size_t pass = 0;
  for (std::size_t t = 0; t < triplets; ++t) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(satellites.size()) - 1));
    auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(satellites.size()) - 2));
    if (j >= i) ++j;
    const auto& pos = drones[i][static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(drones[i].size()) - 1))];
    const auto& neg = drones[j][static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(drones[j].size()) - 1))];
    pass += synth::aligned_overlap(satellites[i], pos) > synth::aligned_overlap(satellites[i], neg);
  }
  return triplets ? static_cast<double>(pass) / static_cast<double>(triplets) : 1.0;
}

inline GenerationReport generate_dataset(const DatasetSpec& spec, const std::filesystem::path& root,
                                         std::size_t self_check_triplets = 200) {
  namespace fs = std::filesystem;
  spec.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create dataset directory '" + root.string() + "': " + ec.message());

  GenerationReport report;
  std::vector<Image> check_sat;
  std::vector<std::vector<Image>> check_drone;
  std::ofstream manifest(root / "manifest.tsv", std::ios::binary);
  if (!manifest) throw IoError("cannot write '" + (root / "manifest.tsv").string() + "'");
  manifest << "id\tsplit\n";
  for (const auto& rec : identity_plan(spec)) {
    const std::string split(split_name(rec.split));
    const std::string idname = identity_dir_name(rec.id);
    manifest << idname << '\t' << split << '\n';
    const Image world = synth::render_world(spec.image_size, seed_combine({spec.seed, 0x5ce4e, static_cast<std::uint64_t>(rec.id)}));
    const Image sat = synth::satellite_view(world, spec.image_size);
    const fs::path sat_dir = root / split / "satellite" / idname;
    fs::create_directories(sat_dir, ec);
    if (ec) throw IoError("cannot create '" + sat_dir.string() + "': " + ec.message());
    write_ppm(sat, (sat_dir / "0.ppm").string());
    ++report.satellite_images;
    if (rec.split == Split::Distractor) continue;

    const fs::path drone_dir = root / split / "drone" / idname;
    fs::create_directories(drone_dir, ec);
    if (ec) throw IoError("cannot create '" + drone_dir.string() + "': " + ec.message());
    Rng view_rng(seed_combine({spec.seed, 0xd20e, static_cast<std::uint64_t>(rec.id)}));
    std::vector<Image> views;
    for (std::size_t v = 0; v < spec.views_per_id; ++v) {
      Image view = synth::drone_view(world, spec.image_size, synth::sample_view_transform(view_rng, spec.image_size));
      write_ppm(view, (drone_dir / (std::to_string(v) + ".ppm")).string());
      ++report.drone_images;
      views.push_back(std::move(view));
    }
    check_sat.push_back(sat);
    check_drone.push_back(std::move(views));
  }
  if (!manifest) throw IoError("failed writing manifest");
  report.triplets = self_check_triplets;
  report.triplet_pass_rate = triplet_self_check(check_sat, check_drone, self_check_triplets, spec.seed);
  return report;
}

// ---------------------------------------------------------------------------
// Loading

struct IdentityImages {
  int id = 0;
  Image satellite;
  std::vector<Image> drones;
};

struct Dataset {
  std::filesystem::path root;
  std::size_t image_size = 0;
  std::vector<IdentityImages> train, test, distractors;

  std::size_t num_train_drone_images() const {
    std::size_t n = 0;
    for (const auto& id : train) n += id.drones.size();
    return n;
  }
};

inline Dataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::ifstream manifest(root / "manifest.tsv");
  if (!manifest) throw IoError("no manifest.tsv under '" + root.string() + "'");
  Dataset ds;
  ds.root = root;
  std::string line;
  std::getline(manifest, line);
  if (line != "id\tsplit") throw InputError("manifest.tsv: unexpected header '" + line + "'");
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError("manifest.tsv: malformed line '" + line + "'");
    const std::string idname = line.substr(0, tab), split = line.substr(tab + 1);
    IdentityImages rec;
    rec.id = std::stoi(idname);
    rec.satellite = read_ppm((root / split / "satellite" / idname / "0.ppm").string());
    if (ds.image_size == 0) ds.image_size = rec.satellite.width;
    if (rec.satellite.width != ds.image_size || rec.satellite.height != ds.image_size) {
      throw InputError("dataset: image size mismatch for identity " + idname);
    }
    if (split == "distractor") {
      ds.distractors.push_back(std::move(rec));
      continue;
    }
    const fs::path drone_dir = root / split / "drone" / idname;
    for (std::size_t v = 0;; ++v) {
      const fs::path p = drone_dir / (std::to_string(v) + ".ppm");
      if (!fs::exists(p)) break;
      rec.drones.push_back(read_ppm(p.string()));
    }
    if (rec.drones.empty()) throw InputError("dataset: identity " + idname + " has no drone views");
    if (split == "train") {
      ds.train.push_back(std::move(rec));
    } else if (split == "test") {
      ds.test.push_back(std::move(rec));
    } else {
      throw InputError("manifest.tsv: unknown split '" + split + "'");
    }
  }
  if (ds.train.empty() || ds.test.empty()) throw InputError("dataset: train and test splits must be non-empty");
  return ds;
}

// Reflect-pad by `pad`, crop a random size x size window, flip with p=0.5.
inline Image crop_flip(const Image& in, Rng& rng, std::size_t pad = 4) {
  const auto ox = rng.uniform_int(0, static_cast<std::int64_t>(2 * pad));
  const auto oy = rng.uniform_int(0, static_cast<std::int64_t>(2 * pad));
  const bool flip = rng.bernoulli(0.5);
  const auto w = static_cast<std::int64_t>(in.width), h = static_cast<std::int64_t>(in.height);
  auto reflect = [](std::int64_t i, std::int64_t n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, n - 1));
  };
  Image out(in.width, in.height);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t xs = flip ? (w - 1 - x) : x;
      const auto sx = reflect(xs + ox - static_cast<std::int64_t>(pad), w);
      const auto sy = reflect(y + oy - static_cast<std::int64_t>(pad), h);
      for (std::size_t c = 0; c < 3; ++c) out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = in.at(sx, sy, c);
    }
  }
  return out;
}

struct Batch {
  FTensor images;                  // 2N x 3 x S x S, satellites first
  std::vector<int> identity_labels;
  std::vector<int> style_labels;
  std::vector<StyleKind> styles;
};

inline std::uint64_t drone_image_key(int identity, std::size_t view) {
  return (static_cast<std::uint64_t>(identity) << 20) | static_cast<std::uint64_t>(view);
}

// Per-image styling seed: hash(global_seed, image_id, epoch, style).
inline std::uint64_t style_seed(std::uint64_t seed, std::uint64_t image_key, std::uint64_t epoch, int style_code) {
  return seed_combine({seed, image_key, epoch, static_cast<std::uint64_t>(style_code)});
}

inline constexpr int style_code(const Condition& c) { return c.composite ? 10 : style_index(c.style); }

// Uniform choice over the ten training styles for one drone slot.
inline StyleKind sample_training_style(std::uint64_t seed, std::size_t epoch, std::size_t step, std::size_t slot) {
  Rng rng(seed_combine({seed, 0x57e1, epoch, step, slot}));
  return kAllStyles[static_cast<std::size_t>(rng.uniform_int(0, 9))];
}

inline StyleKind training_style(const Condition& c) {
  if (c.composite) throw UsageError("the fog+rain+snow composite is reserved for evaluation");
  return c.style;
}

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  return idx;
}

}  // namespace detail

// N satellites of distinct training identities (crop/flip only) followed by
// N drone views, each styled by a uniformly drawn style, then crop/flip.
inline Batch load_training_batch(const Dataset& ds, std::size_t n, std::size_t epoch, std::size_t step,
                                 std::uint64_t seed) {
  if (n == 0 || n > ds.train.size()) {
    throw UsageError("load_training_batch: batch of " + std::to_string(n) + " per platform needs at most " +
                     std::to_string(ds.train.size()) + " identities");
  }
  const std::size_t size = ds.image_size;
  Batch b;
  std::vector<Real> pixels(2 * n * 3 * size * size);

  const auto sat_order = detail::shuffled(ds.train.size(), seed_combine({seed, 0x5a7, epoch, step}));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = ds.train[sat_order[i]];
    Rng aug(seed_combine({seed, 0xa06, epoch, step, i}));
    const Image img = crop_flip(rec.satellite, aug);
    write_image_to_batch(img.pixels, size, i, pixels);
    b.identity_labels.push_back(static_cast<int>(sat_order[i]));
    b.style_labels.push_back(style_label(Platform::Satellite, StyleKind::Normal));
    b.styles.push_back(StyleKind::Normal);
  }

  std::vector<std::pair<std::size_t, std::size_t>> drones;  // (train index, view)
  for (std::size_t t = 0; t < ds.train.size(); ++t)
    for (std::size_t v = 0; v < ds.train[t].drones.size(); ++v) drones.emplace_back(t, v);
  const auto order = detail::shuffled(drones.size(), seed_combine({seed, 0xd0e, epoch}));
  for (std::size_t i = 0; i < n; ++i) {
    const auto [t, v] = drones[order[(step * n + i) % drones.size()]];
    const auto& rec = ds.train[t];
    const StyleKind style = sample_training_style(seed, epoch, step, i);
    Rng style_rng(style_seed(seed, drone_image_key(rec.id, v), epoch, style_index(style)));
    Rng aug(seed_combine({seed, 0xa06, epoch, step, n + i}));
    const Image img = crop_flip(apply_style(rec.drones[v], style, style_rng), aug);
    write_image_to_batch(img.pixels, size, n + i, pixels);
    b.identity_labels.push_back(static_cast<int>(t));
    b.style_labels.push_back(style_label(Platform::Drone, style));
    b.styles.push_back(style);
  }
  b.images = FTensor::from({2 * n, 3, size, size}, std::move(pixels));
  return b;
}

enum class Task { DroneToSat, SatToDrone };

inline std::string_view task_name(Task t) { return t == Task::DroneToSat ? "d2s" : "s2d"; }

struct EvalSet {
  std::vector<Image> queries;
  std::vector<int> query_ids;
  std::vector<Image> gallery;
  std::vector<int> gallery_ids;
};

// Drone images styled by `cond` with frozen (epoch 0) draws.
inline std::vector<Image> styled_test_drones(const Dataset& ds, const Condition& cond, std::uint64_t seed,
                                             std::vector<int>* ids = nullptr) {
  std::vector<Image> out;
  for (const auto& rec : ds.test) {
    for (std::size_t v = 0; v < rec.drones.size(); ++v) {
      Rng rng(style_seed(seed, drone_image_key(rec.id, v), 0, style_code(cond)));
      out.push_back(apply_condition(rec.drones[v], cond, rng));
      if (ids) ids->push_back(rec.id);
    }
  }
  return out;
}

inline std::vector<Image> satellite_gallery(const Dataset& ds, std::vector<int>* ids = nullptr) {
  std::vector<Image> out;
  for (const auto* split : {&ds.test, &ds.distractors}) {
    for (const auto& rec : *split) {
      out.push_back(rec.satellite);
      if (ids) ids->push_back(rec.id);
    }
  }
  return out;
}

inline EvalSet load_eval_set(const Dataset& ds, const Condition& cond, Task task, std::uint64_t seed = kDefaultSeed) {
  EvalSet es;
  if (task == Task::DroneToSat) {
    es.queries = styled_test_drones(ds, cond, seed, &es.query_ids);
    es.gallery = satellite_gallery(ds, &es.gallery_ids);
  } else {
    for (const auto& rec : ds.test) {
      es.queries.push_back(rec.satellite);
      es.query_ids.push_back(rec.id);
    }
    es.gallery = styled_test_drones(ds, cond, seed, &es.gallery_ids);
  }
  return es;
}

}  // namespace muse
