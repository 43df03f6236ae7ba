#include "densefit/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace densefit {

namespace {

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

}  // namespace

int RenderBuffers::valid_pixel_count() const {
  return static_cast<int>(std::count(mask.data().begin(), mask.data().end(), std::uint8_t{1}));
}

Points3 vertex_normals(const Points3& mesh, const Faces& faces, const Camera& camera) {
  Points3 normals = Points3::Zero(mesh.rows(), 3);
  for (Eigen::Index t = 0; t < faces.rows(); ++t) {
    const Vec3 a = mesh.row(faces(t, 0)).transpose();
    const Vec3 b = mesh.row(faces(t, 1)).transpose();
    const Vec3 c = mesh.row(faces(t, 2)).transpose();
    const Vec3 n = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) normals.row(faces(t, k)) += n.transpose();
  }
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const Vec3 n = camera.rotation * normals.row(i).transpose();
    const double len = n.norm();
    normals.row(i) = (len > 0.0 ? Vec3(n / len) : Vec3(Vec3::Zero())).transpose();
  }
  return normals;
}

RenderBuffers rasterize(const Points3& mesh, const Faces& faces, const Camera& camera, int width,
                        int height, const VertexAttributes& attributes) {
  validate(camera);
  if (width < 1 || height < 1) {
    throw InvariantError("render target must be at least 1x1");
  }
  if (!mesh.allFinite()) {
    throw InvariantError("mesh has non-finite vertices");
  }
  const Eigen::Index n = mesh.rows();
  const bool has_rgb = attributes.rgb.rows() == n && n > 0;
  const bool has_vc = attributes.vertex_color.rows() == n && n > 0;

  RenderBuffers out;
  out.index_map = Grid<int>(width, height, kBackground);
  out.bary = Grid<Vec3>(width, height, Vec3::Zero());
  out.depth = Grid<double>(width, height, 0.0);
  out.normal = Grid<Vec3>(width, height, Vec3::Zero());
  out.rgb = Grid<Vec3>(width, height, Vec3::Zero());
  out.vertex_color = Grid<Vec3>(width, height, Vec3::Zero());
  out.mask = Mask(width, height, 0);

  // Camera-space positions and screen projections.
  std::vector<Vec3> cam(static_cast<std::size_t>(n));
  std::vector<Vec2> screen(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 pc = camera.to_camera(mesh.row(i).transpose());
    cam[i] = pc;
    screen[i] = pc.z() > kMinDepth
                    ? Vec2(camera.fx * pc.x() / pc.z() + camera.cx, camera.fy * pc.y() / pc.z() + camera.cy)
                    : Vec2::Zero();
  }

  for (Eigen::Index t = 0; t < faces.rows(); ++t) {
    const int i0 = faces(t, 0), i1 = faces(t, 1), i2 = faces(t, 2);
    if (!(cam[i0].z() > kMinDepth && cam[i1].z() > kMinDepth && cam[i2].z() > kMinDepth)) {
      ++out.skipped_behind;
      continue;
    }
    const Vec2& p0 = screen[i0];
    const Vec2& p1 = screen[i1];
    const Vec2& p2 = screen[i2];
    const double area = edge(p0, p1, p2);
    if (area == 0.0 || !std::isfinite(area)) {
      ++out.skipped_degenerate;
      continue;
    }
    const double min_x = std::min({p0.x(), p1.x(), p2.x()});
    const double max_x = std::max({p0.x(), p1.x(), p2.x()});
    const double min_y = std::min({p0.y(), p1.y(), p2.y()});
    const double max_y = std::max({p0.y(), p1.y(), p2.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    const double z0 = cam[i0].z(), z1 = cam[i1].z(), z2 = cam[i2].z();

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 s(x + 0.5, y + 0.5);
        const double b0 = edge(p1, p2, s) / area;
        const double b1 = edge(p2, p0, s) / area;
        const double b2 = edge(p0, p1, s) / area;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        const double z = b0 * z0 + b1 * z1 + b2 * z2;
        const int current = out.index_map(x, y);
        if (current != kBackground) {
          const double zc = out.depth(x, y);
          if (z > zc || (z == zc && current < t)) continue;
        }
        out.index_map(x, y) = static_cast<int>(t);
        out.bary(x, y) = Vec3(b0, b1, b2);
        out.depth(x, y) = z;
        out.mask(x, y) = 1;
      }
    }
  }

  // Attribute interpolation over the final visibility.
  const Points3 normals = vertex_normals(mesh, faces, camera);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int t = out.index_map(x, y);
      if (t == kBackground) continue;
      const Vec3& b = out.bary(x, y);
      Vec3 nrm = Vec3::Zero(), rgb = Vec3::Zero(), vc = Vec3::Zero();
      for (int k = 0; k < 3; ++k) {
        const int v = faces(t, k);
        nrm += b[k] * normals.row(v).transpose();
        if (has_rgb) rgb += b[k] * attributes.rgb.row(v).transpose();
        if (has_vc) vc += b[k] * attributes.vertex_color.row(v).transpose();
      }
      const double len = nrm.norm();
      out.normal(x, y) = len > 0.0 ? Vec3(nrm / len) : Vec3(Vec3::Zero());
      out.rgb(x, y) = rgb;
      out.vertex_color(x, y) = vc;
    }
  }
  return out;
}

Points3 unique_vertex_colors(const BodyModelSpec& model) {
  const Points3 rest = forward(model, BodyParams::zeros(model));
  const Eigen::RowVector3d lo = rest.colwise().minCoeff();
  const Eigen::RowVector3d hi = rest.colwise().maxCoeff();
  Points3 colors(rest.rows(), 3);
  for (int c = 0; c < 3; ++c) {
    const double range = hi[c] - lo[c];
    if (range > 0.0) {
      colors.col(c) = (rest.col(c).array() - lo[c]) / range;
    } else {
      colors.col(c).setConstant(0.5);
    }
  }
  return colors;
}

VertexVisibility vertex_visibility(const RenderBuffers& buffers, const Faces& faces, int vertex_count,
                                   double threshold) {
  VertexVisibility out;
  out.mass = Eigen::VectorXd::Zero(vertex_count);
  for (std::size_t p = 0; p < buffers.index_map.size(); ++p) {
    const int t = buffers.index_map[p];
    if (t == kBackground || !buffers.mask[p]) continue;
    const Vec3& b = buffers.bary[p];
    for (int k = 0; k < 3; ++k) out.mass[faces(t, k)] += b[k];
  }
  out.visible.resize(static_cast<std::size_t>(vertex_count));
  for (int i = 0; i < vertex_count; ++i) out.visible[i] = out.mass[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace densefit
