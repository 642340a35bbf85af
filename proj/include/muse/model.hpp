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

// The dual-branch network: a style encoder with style classifier, and a
// content encoder whose stage-1 IBN bottlenecks are conditioned on the
// style feature through (Residual) SPADE, followed by an identity
// classifier. Activations are 32-bit.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "muse/cond_norm.hpp"
#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/rng.hpp"
#include "muse/tensor.hpp"

namespace muse {

using Real = float;
using FTensor = Tensor<Real>;

enum class ModulationKind { Residual, Plain };
enum class EmbedSource { PooledContent, PostBN };

inline constexpr std::size_t kNumStyleLabels = 11;

// Stage-1 bottlenecks carrying a modulation block, 1-based (B1..B3).
using SpadePlacement = std::set<int>;

inline SpadePlacement parse_spade_placement(const std::string& text) {
  const std::string valid = "valid tokens: none, or a comma-separated subset of b1,b2,b3";
  SpadePlacement out;
  if (text == "none" || text.empty()) return out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "b1" || tok == "B1") {
      out.insert(1);
    } else if (tok == "b2" || tok == "B2") {
      out.insert(2);
    } else if (tok == "b3" || tok == "B3") {
      out.insert(3);
    } else {
      throw UsageError("invalid SPADE placement token '" + tok + "'; " + valid);
    }
  }
  return out;
}

inline std::string format_spade_placement(const SpadePlacement& p) {
  if (p.empty()) return "none";
  std::string s;
  for (int b : p) s += (s.empty() ? "b" : ",b") + std::to_string(b);
  return s;
}

struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t stem_channels = 16;
  std::array<std::size_t, 4> stage_channels{32, 64, 128, 256};
  std::array<std::size_t, 4> stage_depths{3, 2, 2, 2};
  std::size_t num_identities = 32;
  std::size_t num_styles = kNumStyleLabels;
  SpadePlacement spade_placement{2, 3};
  ModulationKind modulation = ModulationKind::Residual;
  double dropout_rate = 0.5;
  EmbedSource embed_source = EmbedSource::PooledContent;

  void validate() const {
    if (stage_depths[0] != 3) throw ConfigError("model: stage1 must contain exactly 3 bottlenecks");
    if (num_styles != kNumStyleLabels) throw ConfigError("model: num_styles must be 11");
    for (int b : spade_placement) {
      if (b < 1 || b > 3) throw ConfigError("model: SPADE placement must be a subset of {B1,B2,B3}");
    }
    if (input_size % 16 != 0 || input_size < 16) throw ConfigError("model: input_size must be a multiple of 16");
    if (stage_channels[0] % 2 != 0) throw ConfigError("model: stage1 width must be even for the IBN split");
    if (num_identities < 2) throw ConfigError("model: need at least two identities");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model: dropout_rate must lie in [0,1)");
    for (auto c : stage_channels) if (c == 0) throw ConfigError("model: stage widths must be positive");
    for (int i = 1; i < 4; ++i) if (stage_depths[i] == 0) throw ConfigError("model: stage depths must be positive");
    if (stem_channels == 0) throw ConfigError("model: stem_channels must be positive");
  }

  std::size_t style_channels() const { return stage_channels[1]; }
  std::size_t modulated_channels() const { return stage_channels[0] / 2; }
  std::size_t embedding_dim() const { return stage_channels[3]; }
};

template <class Map>
void write_model_config(const ModelConfig& c, Map& kv) {
  auto join = [](const std::array<std::size_t, 4>& a) {
    return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + "," +
           std::to_string(a[3]);
  };
  kv["input_size"] = std::to_string(c.input_size);
  kv["stem_channels"] = std::to_string(c.stem_channels);
  kv["stage_channels"] = join(c.stage_channels);
  kv["stage_depths"] = join(c.stage_depths);
  kv["num_identities"] = std::to_string(c.num_identities);
  kv["num_styles"] = std::to_string(c.num_styles);
  kv["spade"] = format_spade_placement(c.spade_placement);
  kv["modulation"] = c.modulation == ModulationKind::Residual ? "residual" : "plain";
  std::ostringstream os;
  os.precision(17);
  os << c.dropout_rate;
  kv["dropout_rate"] = os.str();
  kv["embed_source"] = c.embed_source == EmbedSource::PooledContent ? "pooled" : "post_bn";
}

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

inline std::array<std::size_t, 4> parse_quad(const std::string& key, const std::string& v) {
  std::array<std::size_t, 4> out{};
  std::stringstream ss(v);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 4) throw ConfigError("key '" + key + "': expected 4 comma-separated integers");
    out[i++] = parse_size(key, tok);
  }
  if (i != 4) throw ConfigError("key '" + key + "': expected 4 comma-separated integers");
  return out;
}

}  // namespace detail

// Applies one key=value setting; returns false for keys this struct does
// not own.
inline bool apply_model_setting(ModelConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "input_size") {
    c.input_size = parse_size(key, v);
  } else if (key == "stem_channels") {
    c.stem_channels = parse_size(key, v);
  } else if (key == "stage_channels") {
    c.stage_channels = parse_quad(key, v);
  } else if (key == "stage_depths") {
    c.stage_depths = parse_quad(key, v);
  } else if (key == "num_identities") {
    c.num_identities = parse_size(key, v);
  } else if (key == "num_styles") {
    c.num_styles = parse_size(key, v);
  } else if (key == "spade") {
    c.spade_placement = parse_spade_placement(v);
  } else if (key == "modulation") {
    if (v == "residual") {
      c.modulation = ModulationKind::Residual;
    } else if (v == "plain") {
      c.modulation = ModulationKind::Plain;
    } else {
      throw ConfigError("key 'modulation': expected residual or plain, got '" + v + "'");
    }
  } else if (key == "dropout_rate") {
    c.dropout_rate = parse_real(key, v);
  } else if (key == "embed_source") {
    if (v == "pooled") {
      c.embed_source = EmbedSource::PooledContent;
    } else if (v == "post_bn") {
      c.embed_source = EmbedSource::PostBN;
    } else {
      throw ConfigError("key 'embed_source': expected pooled or post_bn, got '" + v + "'");
    }
  } else {
    return false;
  }
  return true;
}

struct ForwardOutput {
  FTensor style_logits;
  FTensor id_logits;
  FTensor style_feature;
  FTensor content_embedding;
  FTensor content_embedding_bn;
};

namespace layers {

struct ConvBn {
  FTensor weight;
  BatchNormState<Real> bn;
  Conv2dOptions opt;

  FTensor operator()(const FTensor& x) { return batch_norm<Real>(conv2d<Real>(x, weight, opt), bn); }
};

// conv1x1 -> (IBN split | BN) -> relu -> conv3x3 -> BN -> relu -> conv1x1
// -> BN -> add skip -> relu. The optional modulation block sits right after
// the IN half of the IBN split.
struct Bottleneck {
  FTensor conv1, conv2, conv3;
  std::size_t stride = 1;
  bool ibn = false;
  InstanceNormState<Real> in1;
  BatchNormState<Real> bn1, bn2, bn3;
  std::optional<ResidualSpadeState<Real>> spade;
  ModulationKind kind = ModulationKind::Residual;
  std::optional<ConvBn> down;

  FTensor operator()(const FTensor& x, const FTensor* style) {
    FTensor h = conv2d<Real>(x, conv1);
    if (ibn) {
      const std::size_t c = h.dim(1), half = c / 2;
      const FTensor a = slice_channels<Real>(h, 0, half);
      FTensor na;
      if (spade) {
        if (!style) throw UsageError("bottleneck: modulation block requires a style feature");
        na = kind == ModulationKind::Residual ? residual_spade<Real>(a, *style, *spade)
                                              : muse::spade<Real>(a, *style, *spade);
      } else {
        na = instance_norm<Real>(a, in1);
      }
      h = concat_channels<Real>(na, batch_norm<Real>(slice_channels<Real>(h, half, c), bn1));
    } else {
      h = batch_norm<Real>(h, bn1);
    }
    h = relu<Real>(h);
    h = relu<Real>(batch_norm<Real>(conv2d<Real>(h, conv2, {stride, 1}), bn2));
    h = batch_norm<Real>(conv2d<Real>(h, conv3), bn3);
    return relu<Real>(add<Real>(h, down ? (*down)(x) : x));
  }
};

struct Classifier {
  BatchNormState<Real> bn;
  FTensor fc_weight, fc_bias;
};

}  // namespace layers

class MuSeNet {
 public:
  struct Encoder {
    layers::ConvBn stem;
    std::vector<std::vector<layers::Bottleneck>> stages;
  };

  MuSeNet(const ModelConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    style_encoder_ = make_encoder(rng, /*num_stages=*/2, /*content=*/false);
    style_classifier_ = make_classifier(rng, config_.style_channels(), config_.num_styles);
    content_encoder_ = make_encoder(rng, 4, true);
    id_classifier_ = make_classifier(rng, config_.embedding_dim(), config_.num_identities);
    visit([this](const std::string& name, FTensor& t, LrGroup g) { params_.emplace_back(name, t, g); },
          [](const std::string&, BatchNormState<Real>&) {});
  }

  MuSeNet(const MuSeNet&) = delete;
  MuSeNet& operator=(const MuSeNet&) = delete;
  MuSeNet(MuSeNet&&) = default;
  MuSeNet& operator=(MuSeNet&&) = default;

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<Real>>& parameters() { return params_; }
  const std::vector<Parameter<Real>>& parameters() const { return params_; }

  Parameter<Real>* find_parameter(const std::string& name) {
    for (auto& p : params_) if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t num_spade_blocks() const {
    std::size_t n = 0;
    for (const auto& b : content_encoder_.stages[0]) n += b.spade.has_value();
    return n;
  }

  void set_mode(Mode mode) {
    visit([](const std::string&, FTensor&, LrGroup) {}, [mode](const std::string&, BatchNormState<Real>& bn) {
      bn.mode = mode;
    });
  }

  // Visits every trainable tensor (name, tensor, group) and every batch
  // norm state (name, state) in registration order.
  template <class ParamFn, class BnFn>
  void visit(ParamFn&& on_param, BnFn&& on_bn) {
    visit_encoder("style", style_encoder_, on_param, on_bn);
    visit_classifier("style_classifier", style_classifier_, on_param, on_bn);
    visit_encoder("content", content_encoder_, on_param, on_bn);
    visit_classifier("id_classifier", id_classifier_, on_param, on_bn);
  }

  ForwardOutput forward(const FTensor& images, Mode mode, Rng& rng) {
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.input_size ||
        images.dim(3) != config_.input_size) {
      const auto s = std::to_string(config_.input_size);
      throw InputError("forward: expected N x 3 x " + s + " x " + s + " images, got " + shape_str(images.shape()));
    }
    set_mode(mode);
    ForwardOutput out;
    out.style_feature = run_encoder(style_encoder_, images, nullptr);
    out.style_logits = classify(style_classifier_, global_avg_pool<Real>(out.style_feature), mode, rng, nullptr);
    const FTensor content = run_encoder(content_encoder_, images, &out.style_feature);
    out.content_embedding = global_avg_pool<Real>(content);
    out.id_logits = classify(id_classifier_, out.content_embedding, mode, rng, &out.content_embedding_bn);
    return out;
  }

  // Retrieval feature for a batch, computed in Eval mode without a tape.
  FTensor extract_embedding(const FTensor& images) {
    NoGradGuard guard;
    Rng unused(0);
    auto out = forward(images, Mode::Eval, unused);
    return config_.embed_source == EmbedSource::PooledContent ? out.content_embedding : out.content_embedding_bn;
  }

  std::size_t count_params() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  // Copies values (and batch norm statistics) for every name present in
  // both models with an identical shape. Returns the number of tensors copied.
  std::size_t copy_matching_state(MuSeNet& from) {
    std::map<std::string, FTensor> src_params;
    std::map<std::string, BatchNormState<Real>*> src_bn;
    from.visit([&](const std::string& n, FTensor& t, LrGroup) { src_params.emplace(n, t); },
               [&](const std::string& n, BatchNormState<Real>& bn) { src_bn.emplace(n, &bn); });
    std::size_t copied = 0;
    visit(
        [&](const std::string& n, FTensor& t, LrGroup) {
          auto it = src_params.find(n);
          if (it == src_params.end() || it->second.shape() != t.shape()) return;
          std::copy(it->second.data().begin(), it->second.data().end(), t.mutable_data().begin());
          ++copied;
        },
        [&](const std::string& n, BatchNormState<Real>& bn) {
          auto it = src_bn.find(n);
          if (it == src_bn.end() || it->second->channels() != bn.channels()) return;
          bn.running_mean = it->second->running_mean;
          bn.running_var = it->second->running_var;
          ++copied;
        });
    return copied;
  }

 private:
  FTensor kaiming(Rng& rng, Shape shape) {
    const std::size_t fan_in = shape[1] * shape[2] * shape[3];
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<Real> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<Real>(rng.normal(0.0, std));
    return FTensor::from(std::move(shape), std::move(v), true);
  }

  layers::Bottleneck make_bottleneck(Rng& rng, std::size_t in, std::size_t width, std::size_t stride, bool ibn,
                                     bool with_spade) {
    layers::Bottleneck b;
    b.stride = stride;
    b.ibn = ibn;
    b.conv1 = kaiming(rng, {width, in, 1, 1});
    if (ibn) {
      b.in1 = InstanceNormState<Real>::make(width / 2);
      b.bn1 = BatchNormState<Real>::make(width - width / 2);
    } else {
      b.bn1 = BatchNormState<Real>::make(width);
    }
    b.conv2 = kaiming(rng, {width, width, 3, 3});
    b.bn2 = BatchNormState<Real>::make(width);
    b.conv3 = kaiming(rng, {width, width, 1, 1});
    b.bn3 = BatchNormState<Real>::make(width);
    if (stride != 1 || in != width) {
      b.down = layers::ConvBn{kaiming(rng, {width, in, 1, 1}), BatchNormState<Real>::make(width), {stride, 0}};
    }
    if (with_spade) {
      b.kind = config_.modulation;
      b.spade = ResidualSpadeState<Real>::make(config_.style_channels(), width / 2, rng);
      b.spade->inner = b.in1;
    }
    return b;
  }

  Encoder make_encoder(Rng& rng, std::size_t num_stages, bool content) {
    Encoder e;
    e.stem = layers::ConvBn{kaiming(rng, {config_.stem_channels, 3, 3, 3}),
                            BatchNormState<Real>::make(config_.stem_channels), {2, 1}};
    std::size_t in = config_.stem_channels;
    for (std::size_t s = 0; s < num_stages; ++s) {
      const std::size_t width = config_.stage_channels[s];
      // Stage 4 of the content encoder keeps stride 1.
      const std::size_t stage_stride = (s == 1 || s == 2) ? 2 : 1;
      std::vector<layers::Bottleneck> blocks;
      for (std::size_t i = 0; i < config_.stage_depths[s]; ++i) {
        const bool ibn = content && s == 0;
        const bool with_spade = ibn && config_.spade_placement.contains(static_cast<int>(i + 1));
        blocks.push_back(make_bottleneck(rng, in, width, i == 0 ? stage_stride : 1, ibn, with_spade));
        in = width;
      }
      e.stages.push_back(std::move(blocks));
    }
    return e;
  }

  layers::Classifier make_classifier(Rng& rng, std::size_t dim, std::size_t classes) {
    layers::Classifier c;
    c.bn = BatchNormState<Real>::make(dim);
    std::vector<Real> w(dim * classes);
    for (auto& x : w) x = static_cast<Real>(rng.normal(0.0, 0.001));
    c.fc_weight = FTensor::from({dim, classes}, std::move(w), true);
    c.fc_bias = FTensor::zeros({classes}, true);
    return c;
  }

  FTensor run_encoder(Encoder& e, const FTensor& x, const FTensor* style) {
    FTensor h = max_pool<Real>(relu<Real>(e.stem(x)), 2, 2);
    for (auto& stage : e.stages)
      for (auto& block : stage) h = block(h, style);
    return h;
  }

  FTensor classify(layers::Classifier& c, const FTensor& pooled, Mode mode, Rng& rng, FTensor* bn_out) {
    FTensor h = batch_norm<Real>(pooled, c.bn);
    if (bn_out) *bn_out = h;
    h = dropout<Real>(h, config_.dropout_rate, mode, rng);
    return linear<Real>(h, c.fc_weight, c.fc_bias);
  }

  template <class ParamFn, class BnFn>
  static void visit_bn(const std::string& name, BatchNormState<Real>& bn, LrGroup g, ParamFn& on_param,
                       BnFn& on_bn) {
    on_param(name + ".gamma", bn.gamma, g);
    on_param(name + ".beta", bn.beta, g);
    on_bn(name, bn);
  }

  template <class ParamFn, class BnFn>
  static void visit_encoder(const std::string& prefix, Encoder& e, ParamFn& on_param, BnFn& on_bn) {
    on_param(prefix + ".stem.conv", e.stem.weight, LrGroup::Base);
    visit_bn(prefix + ".stem.bn", e.stem.bn, LrGroup::Base, on_param, on_bn);
    for (std::size_t s = 0; s < e.stages.size(); ++s) {
      for (std::size_t i = 0; i < e.stages[s].size(); ++i) {
        auto& b = e.stages[s][i];
        const std::string p = prefix + ".stage" + std::to_string(s + 1) + ".b" + std::to_string(i + 1);
        on_param(p + ".conv1", b.conv1, LrGroup::Base);
        if (b.ibn) {
          const bool plain = b.spade && b.kind == ModulationKind::Plain;
          // Plain SPADE normalises without affine, so the IN affine is unused.
          if (!plain) {
            auto& in = b.spade ? b.spade->inner : b.in1;
            on_param(p + ".in1.gamma", in.gamma, LrGroup::Base);
            on_param(p + ".in1.beta", in.beta, LrGroup::Base);
          }
          if (b.spade) {
            on_param(p + ".spade.conv_w1", b.spade->conv_w1, LrGroup::Boosted);
            on_param(p + ".spade.conv_b1", b.spade->conv_b1, LrGroup::Boosted);
          }
        }
        visit_bn(p + ".bn1", b.bn1, LrGroup::Base, on_param, on_bn);
        on_param(p + ".conv2", b.conv2, LrGroup::Base);
        visit_bn(p + ".bn2", b.bn2, LrGroup::Base, on_param, on_bn);
        on_param(p + ".conv3", b.conv3, LrGroup::Base);
        visit_bn(p + ".bn3", b.bn3, LrGroup::Base, on_param, on_bn);
        if (b.down) {
          on_param(p + ".down.conv", b.down->weight, LrGroup::Base);
          visit_bn(p + ".down.bn", b.down->bn, LrGroup::Base, on_param, on_bn);
        }
      }
    }
  }

  template <class ParamFn, class BnFn>
  static void visit_classifier(const std::string& prefix, layers::Classifier& c, ParamFn& on_param, BnFn& on_bn) {
    visit_bn(prefix + ".bn", c.bn, LrGroup::Boosted, on_param, on_bn);
    on_param(prefix + ".fc.weight", c.fc_weight, LrGroup::Boosted);
    on_param(prefix + ".fc.bias", c.fc_bias, LrGroup::Boosted);
  }

  ModelConfig config_;
  Encoder style_encoder_;
  layers::Classifier style_classifier_;
  Encoder content_encoder_;
  layers::Classifier id_classifier_;
  std::vector<Parameter<Real>> params_;
};

inline MuSeNet build_model(const ModelConfig& config, Rng& rng) { return MuSeNet(config, rng); }

inline MuSeNet build_model(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return MuSeNet(config, rng);
}

inline std::size_t count_params(const MuSeNet& model) { return model.count_params(); }

// Converts 8-bit interleaved RGB (row-major) into a normalised 1 x 3 x S x S
// slice of a batch: (p / 255 - 0.5) * 2.
inline void write_image_to_batch(std::span<const std::uint8_t> rgb, std::size_t size, std::size_t index,
                                 std::span<Real> batch) {
  const std::size_t area = size * size;
  Real* dst = batch.data() + index * 3 * area;
  for (std::size_t q = 0; q < area; ++q) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      dst[ch * area + q] = (static_cast<Real>(rgb[q * 3 + ch]) / Real(255) - Real(0.5)) * Real(2);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointMagic = "MUSE-CHECKPOINT 1";

namespace detail {

inline void write_f32_le(std::ostream& os, std::span<const Real> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void read_f32_le(std::istream& is, std::span<Real> values, const std::string& what) {
  std::vector<char> bytes(values.size() * 4);
  is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw InputError("checkpoint truncated while reading " + what);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    values[i] = std::bit_cast<Real>(u);
  }
}

// Every stored tensor in order: trainable parameters first (registration
// order), then batch norm running statistics.
inline std::vector<std::pair<std::string, std::span<Real>>> checkpoint_entries(MuSeNet& model,
                                                                               std::vector<Shape>& shapes) {
  std::vector<std::pair<std::string, std::span<Real>>> entries;
  for (auto& p : model.parameters()) {
    entries.emplace_back(p.name, p.value.mutable_data());
    shapes.push_back(p.value.shape());
  }
  model.visit([](const std::string&, FTensor&, LrGroup) {},
              [&](const std::string& n, BatchNormState<Real>& bn) {
                entries.emplace_back(n + ".running_mean", std::span<Real>(bn.running_mean));
                shapes.push_back({bn.channels()});
                entries.emplace_back(n + ".running_var", std::span<Real>(bn.running_var));
                shapes.push_back({bn.channels()});
              });
  return entries;
}

}  // namespace detail

// Header: magic line, "[config]" with key=value lines, "[tensors]" with
// "name d0 d1 ..." lines, then "[data]" followed by little-endian float32
// values of every tensor in header order.
inline void save_checkpoint(MuSeNet& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  std::map<std::string, std::string> kv;
  write_model_config(model.config(), kv);
  os << kCheckpointMagic << '\n' << "[config]\n";
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  os << "[tensors]\n";
  std::vector<Shape> shapes;
  const auto entries = detail::checkpoint_entries(model, shapes);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    os << entries[i].first;
    for (auto d : shapes[i]) os << ' ' << d;
    os << '\n';
  }
  os << "[data]\n";
  for (const auto& e : entries) detail::write_f32_le(os, e.second);
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

inline MuSeNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) throw InputError("'" + path + "' is not a checkpoint");
  if (!std::getline(is, line) || line != "[config]") throw InputError("checkpoint: missing [config] section");
  ModelConfig config;
  while (std::getline(is, line) && line != "[tensors]") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("checkpoint: malformed config line '" + line + "'");
    if (!apply_model_setting(config, line.substr(0, eq), line.substr(eq + 1))) {
      throw InputError("checkpoint: unknown config key '" + line.substr(0, eq) + "'");
    }
  }
  MuSeNet model = build_model(config, 0);
  std::vector<Shape> shapes;
  const auto entries = detail::checkpoint_entries(model, shapes);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!std::getline(is, line)) throw InputError("checkpoint: tensor list ends early");
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    Shape shape;
    std::size_t d = 0;
    while (ls >> d) shape.push_back(d);
    if (name != entries[i].first || shape != shapes[i]) {
      throw InputError("checkpoint: expected tensor " + entries[i].first + " " + shape_str(shapes[i]) + ", found " +
                       name + " " + shape_str(shape));
    }
  }
  if (!std::getline(is, line) || line != "[data]") throw InputError("checkpoint: missing [data] section");
  for (const auto& e : entries) detail::read_f32_le(is, e.second, e.first);
  if (is.peek() != std::char_traits<char>::eof()) throw InputError("checkpoint: trailing bytes after data");
  return model;
}

}  // namespace muse
