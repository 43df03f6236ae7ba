#pragma once

#include "densefit/body_model.hpp"
#include "densefit/camera.hpp"
#include "densefit/rasterizer.hpp"
#include "densefit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace densefit {

/// Per-vertex 2D displacements in pixels. Rows with visible == 0 are zero and
/// carry no information.
struct VertexDisplacements {
  Points2 v;
  std::vector<std::uint8_t> visible;
  Eigen::VectorXd mass;

  int visible_count() const;
};

/// Per-pixel 2D displacement field in pixels; f is meaningful where mask == 1.
struct DisplacementField {
  Grid<Vec2> f;
  Mask mask;

  int width() const { return mask.width(); }
  int height() const { return mask.height(); }
  int valid_pixel_count() const;
};

/// Ground-truth per-vertex displacements: project(gt) - project(init).
/// `visibility` comes from rasterizing the init parameters; rows whose
/// projection is flagged (behind the camera) in either mesh become invisible.
VertexDisplacements gt_vertex_displacements(const BodyModelSpec& model, const BodyParams& gt,
                                            const Camera& gt_camera, const BodyParams& init,
                                            const Camera& init_camera,
                                            const VertexVisibility& visibility,
                                            const ForwardOptions& options = {});

/// Barycentric interpolation of per-vertex values over the visible triangles.
DisplacementField vertex_to_pixel(const VertexDisplacements& v, const RenderBuffers& buffers,
                                  const Faces& faces);

/// Barycentric-weighted average of the field over the pixels each vertex
/// touches. Vertices with accumulated weight <= threshold stay invisible.
VertexDisplacements pixel_to_vertex(const DisplacementField& field, const RenderBuffers& buffers,
                                    const Faces& faces, int vertex_count, double threshold = 0.0);

/// Target 2D vertices: displacement plus the projection of the init mesh.
struct VertexTargets {
  Points2 positions;
  std::vector<std::uint8_t> weight;  // 1 where the target is usable
};

VertexTargets target_vertices(const VertexDisplacements& v, const BodyModelSpec& model,
                              const BodyParams& init, const Camera& init_camera,
                              const ForwardOptions& options = {});

/// (1 / (W·H)) Σ m ||pred - gt||_1.
double masked_l1(const DisplacementField& pred, const DisplacementField& gt);

/// Mean Euclidean error over valid pixels; EmptyDomainError when none.
double epe(const DisplacementField& pred, const DisplacementField& gt);

/// Binary field file: "DF01", u32 W, u32 H (little endian), H×W×2 float32
/// row-major, then H×W u8 mask.
std::string encode_field(const DisplacementField& field);
DisplacementField decode_field(const std::string& bytes);
void write_field(const DisplacementField& field, const std::filesystem::path& path);
DisplacementField read_field(const std::filesystem::path& path);

}  // namespace densefit
