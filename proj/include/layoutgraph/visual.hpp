#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layoutgraph/autograd.hpp"
#include "layoutgraph/conv.hpp"
#include "layoutgraph/error.hpp"
#include "layoutgraph/image.hpp"
#include "layoutgraph/log.hpp"
#include "layoutgraph/nn.hpp"

// Per-node visual embeddings: each box is cropped from the page, resized to a
// fixed square, run through a small depthwise-separable CNN, global-average
// pooled and projected to embed_dim. Fine-tuned jointly during Stage II.
namespace layoutgraph {

inline constexpr int kVisualEmbedDim = 1448;  // Stage-II width 1465 minus the 17-d embedding

struct VisualEncoderConfig {
  int crop_size = 64;
  int embed_dim = kVisualEmbedDim;
  std::string pretrained_weights = "random";  // identifier recorded in checkpoints
  bool trainable = true;
  int base_width = 8;  // stem channel count; blocks double it twice

  void validate() const {
    if (crop_size < 8) throw ConfigError("visual: crop_size must be at least 8");
    if (embed_dim < 1) throw ConfigError("visual: embed_dim must be positive");
    if (base_width < 1) throw ConfigError("visual: base_width must be positive");
  }
};

class VisualEncoder {
public:
  explicit VisualEncoder(VisualEncoderConfig config, std::uint64_t seed = 7)
      : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int c0 = config_.base_width;
    const int c1 = c0 * 2;
    const int c2 = c1 * 2;
    stem_ = conv_param("visual.stem", c0, 1 * 3 * 3, rng);
    stem_bias_ = bias_param("visual.stem.bias", c0);
    dw1_ = conv_param("visual.dw1", c0, 3 * 3, rng);
    pw1_ = conv_param("visual.pw1", c1, c0, rng);
    pw1_bias_ = bias_param("visual.pw1.bias", c1);
    dw2_ = conv_param("visual.dw2", c1, 3 * 3, rng);
    pw2_ = conv_param("visual.pw2", c2, c1, rng);
    pw2_bias_ = bias_param("visual.pw2.bias", c2);
    proj_ = nn::Linear(store_, "visual.proj", c2, config_.embed_dim, rng);
    if (config_.pretrained_weights != "random")
      log::warn("visual: pretrained weights '" + config_.pretrained_weights +
                "' are an identifier only; initialization is seeded random");
  }

  // crops: one flattened crop_size x crop_size grayscale image per row.
  ad::Var forward(const ad::Var& crops) const {
    const int s = config_.crop_size;
    if (crops->value.cols() != s * s)
      throw Error("internal", "visual: crop width must be crop_size^2");
    const int c0 = config_.base_width;
    ad::ConvShape shape{1, s, s};
    ad::ConvShape next;
    auto h = ad::conv2d(crops, shape, stem_, 3, 3, 2, 1, &next);
    h = ad::relu(ad::add_channel_bias(h, c0, stem_bias_));
    shape = next;
    h = ad::depthwise_conv2d(h, shape, dw1_, 3, 3, 2, 1, &next);
    shape = next;
    h = ad::conv2d(h, shape, pw1_, 1, 1, 1, 0, &next);
    h = ad::relu(ad::add_channel_bias(h, next.channels, pw1_bias_));
    shape = next;
    h = ad::depthwise_conv2d(h, shape, dw2_, 3, 3, 2, 1, &next);
    shape = next;
    h = ad::conv2d(h, shape, pw2_, 1, 1, 1, 0, &next);
    h = ad::relu(ad::add_channel_bias(h, next.channels, pw2_bias_));
    auto pooled = ad::avg_pool_all(h, next);
    return proj_.forward(pooled);
  }

  // Crop matrix for a page: one row per box, zeros where a box clamps away.
  // valid[i] records whether box i produced a real crop.
  ad::Matrix crop_boxes(const Image& page, const std::vector<BBox>& boxes,
                        std::vector<bool>* valid = nullptr) const {
    const Image gray = to_gray(page);
    const int s = config_.crop_size;
    ad::Matrix crops = ad::Matrix::Zero(static_cast<Eigen::Index>(boxes.size()), s * s);
    if (valid) valid->assign(boxes.size(), false);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto crop = crop_resize_gray(gray, boxes[i], s);
      if (!crop) {
        log::warn("visual: box " + std::to_string(i) +
                  " is thinner than a pixel after clamping, emitting a zero vector");
        continue;
      }
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) crops(static_cast<Eigen::Index>(i), y * s + x) = (*crop)(y, x);
      if (valid) (*valid)[i] = true;
    }
    return crops;
  }

  // Full per-node pathway as an autograd value; invalid boxes map to exact
  // zero vectors so the degenerate path is shape-preserving.
  ad::Var encode_boxes(const Image& page, const std::vector<BBox>& boxes) const {
    std::vector<bool> valid;
    const ad::Matrix crops = crop_boxes(page, boxes, &valid);
    ad::Matrix mask(static_cast<Eigen::Index>(boxes.size()), 1);
    for (std::size_t i = 0; i < boxes.size(); ++i) mask(static_cast<Eigen::Index>(i), 0) = valid[i] ? 1.0 : 0.0;
    auto features = forward(ad::constant(crops));
    return ad::scale_rows(features, ad::constant(mask));
  }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const VisualEncoderConfig& config() const { return config_; }

private:
  ad::Var conv_param(const std::string& name, int rows, int cols, Rng& rng) {
    auto p = store_.create(name, rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    nn::init_uniform(p, -bound, bound, rng);
    return p;
  }

  ad::Var bias_param(const std::string& name, int channels) {
    return store_.create(name, 1, channels);  // zero-initialized
  }

  VisualEncoderConfig config_;
  nn::ParamStore store_;
  ad::Var stem_, stem_bias_, dw1_, pw1_, pw1_bias_, dw2_, pw2_, pw2_bias_;
  nn::Linear proj_;
};

// Inference-mode convenience: per-node embed_dim vectors in box order.
inline ad::Matrix node_visual_features(const Image& page, const std::vector<BBox>& boxes,
                                       const VisualEncoder& encoder) {
  if (page.empty()) throw IoError("visual: page image is empty");
  return encoder.encode_boxes(page, boxes)->value;
}

}  // namespace layoutgraph
