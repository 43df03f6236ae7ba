#pragma once

#include "densefit/body_model.hpp"
#include "densefit/camera.hpp"
#include "densefit/types.hpp"

#include <cstdint>
#include <vector>

namespace densefit {

constexpr int kBackground = -1;

/// Per-pixel outputs of one rasterization. Pixel (x, y) is sampled at its
/// center (x + 0.5, y + 0.5). Barycentrics are screen-space (affine) weights
/// of the three corners of the visible triangle, in face-corner order.
struct RenderBuffers {
  Grid<int> index_map;        // triangle index or kBackground
  Grid<Vec3> bary;
  Grid<double> depth;         // camera-space z, meters
  Grid<Vec3> normal;          // camera-space unit normals
  Grid<Vec3> rgb;             // interpolated texture colors
  Grid<Vec3> vertex_color;    // interpolated unique vertex colors
  Mask mask;

  int skipped_behind = 0;      // triangles with a corner at or behind the camera plane
  int skipped_degenerate = 0;  // zero-area projected triangles

  int width() const { return mask.width(); }
  int height() const { return mask.height(); }
  int valid_pixel_count() const;
};

/// Optional per-vertex attributes; empty matrices leave the buffer at zero.
struct VertexAttributes {
  Points3 rgb;
  Points3 vertex_color;
};

/// Rasterizes every face. Nearest interpolated depth wins; coverage includes
/// the triangle boundary and equal depths keep the lower triangle index.
/// No backface culling.
RenderBuffers rasterize(const Points3& mesh, const Faces& faces, const Camera& camera, int width,
                        int height, const VertexAttributes& attributes = {});

/// Rest-pose, mean-shape vertex positions min-max normalized per axis.
Points3 unique_vertex_colors(const BodyModelSpec& model);

struct VertexVisibility {
  std::vector<std::uint8_t> visible;  // w
  Eigen::VectorXd mass;               // accumulated barycentric weight
};

/// mass_i sums, over valid pixels whose triangle contains vertex i, that
/// pixel's barycentric weight for i. A vertex is visible iff mass > threshold.
VertexVisibility vertex_visibility(const RenderBuffers& buffers, const Faces& faces, int vertex_count,
                                   double threshold = 0.0);

/// Camera-space area-weighted vertex normals.
Points3 vertex_normals(const Points3& mesh, const Faces& faces, const Camera& camera);

}  // namespace densefit
