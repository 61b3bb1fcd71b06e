#pragma once

#include <memory>
#include <vector>

#include "layoutgraph/autograd.hpp"

// Convolution ops over batches of flattened images. A batch is an N x (C*H*W)
// matrix, one row per image, channel-major then row-major within a channel.
namespace layoutgraph::ad {

struct ConvShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  int size() const { return channels * height * width; }
};

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

// Flat source index (within one channel plane) for every (kernel cell, output
// position) pair, or -1 for padding. Shared across channels.
inline std::vector<int> patch_index_map(int h, int w, int kh, int kw, int stride, int pad,
                                        int oh, int ow) {
  std::vector<int> map(static_cast<std::size_t>(kh * kw) * static_cast<std::size_t>(oh * ow), -1);
  for (int ky = 0; ky < kh; ++ky)
    for (int kx = 0; kx < kw; ++kx)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int iy = oy * stride - pad + ky;
          const int ix = ox * stride - pad + kx;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
          map[static_cast<std::size_t>((ky * kw + kx) * oh * ow + oy * ow + ox)] = iy * w + ix;
        }
  return map;
}

}  // namespace detail

// Full convolution. kernel is (out_c) x (in_c*kh*kw); output N x (out_c*oh*ow).
inline Var conv2d(const Var& x, ConvShape in, const Var& kernel, int kh, int kw, int stride,
                  int pad, ConvShape* out_shape = nullptr) {
  const int oh = conv_out_extent(in.height, kh, stride, pad);
  const int ow = conv_out_extent(in.width, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw Error("internal", "conv2d: empty output extent");
  const int out_c = static_cast<int>(kernel->value.rows());
  if (kernel->value.cols() != static_cast<Eigen::Index>(in.channels) * kh * kw)
    throw Error("internal", "conv2d: kernel width must be in_c*kh*kw");
  if (x->value.cols() != in.size()) throw Error("internal", "conv2d: input width mismatch");
  const int spatial = oh * ow;
  const Eigen::Index n = x->value.rows();
  auto index_map =
      std::make_shared<std::vector<int>>(detail::patch_index_map(in.height, in.width, kh, kw, stride, pad, oh, ow));
  const int plane = in.height * in.width;
  const int patch = kh * kw;

  auto build_col = [&](Eigen::Index sample) {
    Matrix col(static_cast<Eigen::Index>(in.channels) * patch, spatial);
    for (int c = 0; c < in.channels; ++c)
      for (int r = 0; r < patch; ++r)
        for (int s = 0; s < spatial; ++s) {
          const int src = (*index_map)[static_cast<std::size_t>(r * spatial + s)];
          col(static_cast<Eigen::Index>(c) * patch + r, s) =
              src < 0 ? 0.0 : x->value(sample, c * plane + src);
        }
    return col;
  };

  Matrix v(n, static_cast<Eigen::Index>(out_c) * spatial);
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix out_mat = kernel->value * build_col(i);
    for (int c = 0; c < out_c; ++c)
      v.block(i, static_cast<Eigen::Index>(c) * spatial, 1, spatial) = out_mat.row(c);
  }

  auto out = op_node(std::move(v), {x, kernel});
  Node* px = x.get();
  Node* pk = kernel.get();
  Node* po = out.get();
  const int in_c = in.channels;
  out->backprop = [px, pk, po, index_map, in_c, plane, patch, spatial, out_c] {
    const Eigen::Index n = px->value.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      Matrix dout(out_c, spatial);
      for (int c = 0; c < out_c; ++c)
        dout.row(c) = po->grad.block(i, static_cast<Eigen::Index>(c) * spatial, 1, spatial);
      if (pk->requires_grad || px->requires_grad) {
        Matrix col(static_cast<Eigen::Index>(in_c) * patch, spatial);
        for (int c = 0; c < in_c; ++c)
          for (int r = 0; r < patch; ++r)
            for (int s = 0; s < spatial; ++s) {
              const int src = (*index_map)[static_cast<std::size_t>(r * spatial + s)];
              col(static_cast<Eigen::Index>(c) * patch + r, s) =
                  src < 0 ? 0.0 : px->value(i, c * plane + src);
            }
        if (pk->requires_grad) {
          pk->ensure_grad();
          pk->grad += dout * col.transpose();
        }
        if (px->requires_grad) {
          px->ensure_grad();
          Matrix dcol = pk->value.transpose() * dout;
          for (int c = 0; c < in_c; ++c)
            for (int r = 0; r < patch; ++r)
              for (int s = 0; s < spatial; ++s) {
                const int src = (*index_map)[static_cast<std::size_t>(r * spatial + s)];
                if (src >= 0)
                  px->grad(i, c * plane + src) +=
                      dcol(static_cast<Eigen::Index>(c) * patch + r, s);
              }
        }
      }
    }
  };
  if (out_shape) *out_shape = ConvShape{out_c, oh, ow};
  return out;
}

// Depthwise convolution: kernel is C x (kh*kw), one filter per channel.
inline Var depthwise_conv2d(const Var& x, ConvShape in, const Var& kernel, int kh, int kw,
                            int stride, int pad, ConvShape* out_shape = nullptr) {
  const int oh = conv_out_extent(in.height, kh, stride, pad);
  const int ow = conv_out_extent(in.width, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw Error("internal", "depthwise_conv2d: empty output extent");
  if (kernel->value.rows() != in.channels || kernel->value.cols() != static_cast<Eigen::Index>(kh) * kw)
    throw Error("internal", "depthwise_conv2d: kernel must be C x (kh*kw)");
  if (x->value.cols() != in.size())
    throw Error("internal", "depthwise_conv2d: input width mismatch");
  const int spatial = oh * ow;
  const Eigen::Index n = x->value.rows();
  auto index_map =
      std::make_shared<std::vector<int>>(detail::patch_index_map(in.height, in.width, kh, kw, stride, pad, oh, ow));
  const int plane = in.height * in.width;
  const int patch = kh * kw;
  const int channels = in.channels;

  Matrix v = Matrix::Zero(n, static_cast<Eigen::Index>(channels) * spatial);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c)
      for (int s = 0; s < spatial; ++s) {
        double acc = 0.0;
        for (int r = 0; r < patch; ++r) {
          const int src = (*index_map)[static_cast<std::size_t>(r * spatial + s)];
          if (src >= 0) acc += kernel->value(c, r) * x->value(i, c * plane + src);
        }
        v(i, static_cast<Eigen::Index>(c) * spatial + s) = acc;
      }

  auto out = op_node(std::move(v), {x, kernel});
  Node* px = x.get();
  Node* pk = kernel.get();
  Node* po = out.get();
  out->backprop = [px, pk, po, index_map, channels, plane, patch, spatial] {
    const Eigen::Index n = px->value.rows();
    if (pk->requires_grad) pk->ensure_grad();
    if (px->requires_grad) px->ensure_grad();
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < channels; ++c)
        for (int s = 0; s < spatial; ++s) {
          const double g = po->grad(i, static_cast<Eigen::Index>(c) * spatial + s);
          if (g == 0.0) continue;
          for (int r = 0; r < patch; ++r) {
            const int src = (*index_map)[static_cast<std::size_t>(r * spatial + s)];
            if (src < 0) continue;
            if (pk->requires_grad) pk->grad(c, r) += g * px->value(i, c * plane + src);
            if (px->requires_grad) px->grad(i, c * plane + src) += g * pk->value(c, r);
          }
        }
  };
  if (out_shape) *out_shape = ConvShape{channels, oh, ow};
  return out;
}

// Per-channel bias over N x (C*S) activations; bias is 1 x C.
inline Var add_channel_bias(const Var& x, int channels, const Var& bias) {
  if (bias->value.rows() != 1 || bias->value.cols() != channels)
    throw Error("internal", "add_channel_bias: bias must be 1 x C");
  if (x->value.cols() % channels != 0)
    throw Error("internal", "add_channel_bias: width not divisible by channels");
  const int spatial = static_cast<int>(x->value.cols()) / channels;
  Matrix v = x->value;
  for (int c = 0; c < channels; ++c)
    v.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial).array() += bias->value(0, c);
  auto out = op_node(std::move(v), {x, bias});
  Node* px = x.get();
  Node* pb = bias.get();
  Node* po = out.get();
  out->backprop = [px, pb, po, channels, spatial] {
    detail::accumulate(px, po->grad);
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int c = 0; c < channels; ++c)
        pb->grad(0, c) += po->grad.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial).sum();
    }
  };
  return out;
}

// Global average pool: N x (C*H*W) -> N x C.
inline Var avg_pool_all(const Var& x, ConvShape in) {
  if (x->value.cols() != in.size()) throw Error("internal", "avg_pool_all: input width mismatch");
  const int spatial = in.height * in.width;
  Matrix v(x->value.rows(), in.channels);
  for (int c = 0; c < in.channels; ++c)
    v.col(c) = x->value.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial).rowwise().mean();
  auto out = op_node(std::move(v), {x});
  Node* px = x.get();
  Node* po = out.get();
  const int channels = in.channels;
  out->backprop = [px, po, channels, spatial] {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (int c = 0; c < channels; ++c)
      px->grad.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial).colwise() +=
          (po->grad.col(c) / static_cast<double>(spatial)).eval();
  };
  return out;
}

}  // namespace layoutgraph::ad
