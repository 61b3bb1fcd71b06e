#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "layoutgraph/error.hpp"

namespace layoutgraph {

inline constexpr int kNodeGeomDim = 9;
inline constexpr int kEdgeGeomDim = 15;
inline constexpr int kPolarBins = 6;
inline constexpr int kRelPosTokens = 7;

struct ImageSize {
  double width = 0.0;
  double height = 0.0;

  double max_dim() const { return std::max(width, height); }
  double area() const { return width * height; }
};

// Axis-aligned text-region rectangle in pixel coordinates, y growing downward.
struct BBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }

  bool operator==(const BBox&) const = default;
};

inline void validate_box(const BBox& box, const ImageSize& image, int node_index = -1) {
  const std::string who =
      node_index >= 0 ? "node " + std::to_string(node_index) : std::string("box");
  if (!(box.xmin < box.xmax) || !(box.ymin < box.ymax)) {
    throw ValidationError(who + ": degenerate box [" + std::to_string(box.xmin) + ", " +
                          std::to_string(box.ymin) + ", " + std::to_string(box.xmax) + ", " +
                          std::to_string(box.ymax) + "]");
  }
  if (box.xmin < 0.0 || box.ymin < 0.0 || box.xmax > image.width || box.ymax > image.height) {
    throw ValidationError(who + ": box outside image extent " +
                          std::to_string(static_cast<long long>(image.width)) + "x" +
                          std::to_string(static_cast<long long>(image.height)));
  }
}

// Quarter-section code of a normalized coordinate. Sections are
// lower-inclusive with 1.0 folded into the last one.
inline int regional_code(double coord) {
  if (coord < 0.0 || coord > 1.0) {
    throw ValidationError("regional encoding: coordinate " + std::to_string(coord) +
                          " outside [0, 1]");
  }
  if (coord < 0.25) return 11;
  if (coord < 0.5) return 12;
  if (coord < 0.75) return 21;
  return 22;
}

// Stored feature value for a regional code: {11,12,21,22} -> {0, 1/3, 2/3, 1}.
inline double regional_encoding(double coord) {
  switch (regional_code(coord)) {
    case 11: return 0.0;
    case 12: return 1.0 / 3.0;
    case 21: return 2.0 / 3.0;
    default: return 1.0;
  }
}

// 9-d geometric node descriptor: normalized box corners, normalized area and
// the four regional codes.
struct NodeGeomVector {
  double nxmin = 0.0;
  double nymin = 0.0;
  double nxmax = 0.0;
  double nymax = 0.0;
  double area = 0.0;
  double r_xmin = 0.0;
  double r_ymin = 0.0;
  double r_xmax = 0.0;
  double r_ymax = 0.0;

  std::array<double, kNodeGeomDim> as_array() const {
    return {nxmin, nymin, nxmax, nymax, area, r_xmin, r_ymin, r_xmax, r_ymax};
  }

  static NodeGeomVector from_array(const std::array<double, kNodeGeomDim>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]};
  }

  double ncx() const { return 0.5 * (nxmin + nxmax); }
  double ncy() const { return 0.5 * (nymin + nymax); }

  bool operator==(const NodeGeomVector&) const = default;
};

inline NodeGeomVector normalize_box(const BBox& box, const ImageSize& image,
                                    int node_index = -1) {
  validate_box(box, image, node_index);
  const double scale = image.max_dim();
  NodeGeomVector g;
  g.nxmin = box.xmin / scale;
  g.nymin = box.ymin / scale;
  g.nxmax = box.xmax / scale;
  g.nymax = box.ymax / scale;
  g.area = box.area() / image.area();
  g.r_xmin = regional_encoding(g.nxmin);
  g.r_ymin = regional_encoding(g.nymin);
  g.r_xmax = regional_encoding(g.nxmax);
  g.r_ymax = regional_encoding(g.nymax);
  return g;
}

// Relative placement token of dst with respect to src. Intersections take
// precedence over directions so exactly one token applies.
enum class RelPos {
  kLeft = 0,
  kRight = 1,
  kTop = 2,
  kBottom = 3,
  kVertIntersect = 4,
  kHorIntersect = 5,
  kSqrIntersect = 6,
};

inline const char* to_string(RelPos p) {
  switch (p) {
    case RelPos::kLeft: return "left";
    case RelPos::kRight: return "right";
    case RelPos::kTop: return "top";
    case RelPos::kBottom: return "bottom";
    case RelPos::kVertIntersect: return "vert-intersect";
    case RelPos::kHorIntersect: return "hor-intersect";
    case RelPos::kSqrIntersect: return "sqr-intersect";
  }
  return "?";
}

inline RelPos relative_position(const BBox& src, const BBox& dst) {
  // Range overlap requires a positive-length intersection; touching edges do
  // not count.
  const bool x_overlap = std::min(src.xmax, dst.xmax) - std::max(src.xmin, dst.xmin) > 0.0;
  const bool y_overlap = std::min(src.ymax, dst.ymax) - std::max(src.ymin, dst.ymin) > 0.0;
  if (x_overlap && y_overlap) return RelPos::kSqrIntersect;
  if (x_overlap) return RelPos::kVertIntersect;
  if (y_overlap) return RelPos::kHorIntersect;
  const double dx = dst.cx() - src.cx();
  const double dy = dst.cy() - src.cy();
  if (std::abs(dx) >= std::abs(dy)) {
    return dx >= 0.0 ? RelPos::kRight : RelPos::kLeft;
  }
  return dy >= 0.0 ? RelPos::kBottom : RelPos::kTop;
}

// Angular sector of theta in [-pi, pi]; theta = pi folds into the last bin.
inline int polar_sector(double theta, int bins = kPolarBins) {
  const double width = 2.0 * M_PI / bins;
  int s = static_cast<int>(std::floor((theta + M_PI) / width));
  if (s >= bins) s = bins - 1;
  if (s < 0) s = 0;
  return s;
}

// 15-d geometric edge descriptor: angle, normalized distance, 6-way polar
// sector one-hot and 7-way relative-position one-hot.
struct EdgeGeomVector {
  double theta = 0.0;
  double dist = 0.0;
  std::array<double, kPolarBins> polar{};
  std::array<double, kRelPosTokens> relpos{};

  std::array<double, kEdgeGeomDim> as_array() const {
    std::array<double, kEdgeGeomDim> a{};
    a[0] = theta;
    a[1] = dist;
    for (int i = 0; i < kPolarBins; ++i) a[2 + i] = polar[i];
    for (int i = 0; i < kRelPosTokens; ++i) a[2 + kPolarBins + i] = relpos[i];
    return a;
  }

  static EdgeGeomVector from_array(const std::array<double, kEdgeGeomDim>& a) {
    EdgeGeomVector e;
    e.theta = a[0];
    e.dist = a[1];
    for (int i = 0; i < kPolarBins; ++i) e.polar[i] = a[2 + i];
    for (int i = 0; i < kRelPosTokens; ++i) e.relpos[i] = a[2 + kPolarBins + i];
    return e;
  }

  int polar_index() const {
    for (int i = 0; i < kPolarBins; ++i)
      if (polar[i] == 1.0) return i;
    return -1;
  }

  RelPos relpos_token() const {
    for (int i = 0; i < kRelPosTokens; ++i)
      if (relpos[i] == 1.0) return static_cast<RelPos>(i);
    return RelPos::kSqrIntersect;
  }

  bool operator==(const EdgeGeomVector&) const = default;
};

// Edge geometry from the source box to the destination box, in the image
// frame (y downward). Coordinates are normalized by the larger image
// dimension; identical centers degenerate to theta = 0, dist = 0.
inline EdgeGeomVector edge_geometry(const BBox& src, const BBox& dst, const ImageSize& image) {
  const double scale = image.max_dim();
  const double dx = (dst.cx() - src.cx()) / scale;
  const double dy = (dst.cy() - src.cy()) / scale;
  EdgeGeomVector e;
  e.theta = (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, dx);
  e.dist = std::min(std::hypot(dx, dy), 1.0);
  e.polar[static_cast<std::size_t>(polar_sector(e.theta))] = 1.0;
  e.relpos[static_cast<std::size_t>(relative_position(src, dst))] = 1.0;
  return e;
}

}  // namespace layoutgraph
