#pragma once

// Brute-force reference renderer for tests: every pixel against every
// triangle, barycentrics from sub-triangle areas, first nearest triangle in
// index order wins.

#include "densefit/camera.hpp"
#include "densefit/rasterizer.hpp"

#include <random>

namespace densefit::test {

struct OracleBuffers {
  Grid<int> index;
  Grid<Vec3> bary;
  Grid<double> depth;
};

inline OracleBuffers oracle_rasterize(const Points3& mesh, const Faces& faces, const Camera& camera, int width,
                                      int height) {
  OracleBuffers out{Grid<int>(width, height, -1), Grid<Vec3>(width, height, Vec3::Zero()),
                    Grid<double>(width, height, 0.0)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double sx = x + 0.5;
      const double sy = y + 0.5;
      for (Eigen::Index t = 0; t < faces.rows(); ++t) {
        Vec3 z;
        Vec2 p[3];
        bool ok = true;
        for (int k = 0; k < 3; ++k) {
          const Vec3 c = camera.rotation * mesh.row(faces(t, k)).transpose() + camera.translation;
          if (!(c.z() > kMinDepth)) ok = false;
          z[k] = c.z();
          p[k] = Vec2(camera.fx * c.x() / c.z() + camera.cx, camera.fy * c.y() / c.z() + camera.cy);
        }
        if (!ok) continue;
        const Vec2 d1 = p[1] - p[0];
        const Vec2 d2 = p[2] - p[0];
        const double det = d1.x() * d2.y() - d1.y() * d2.x();
        if (det == 0.0) continue;
        const double rx = sx - p[0].x();
        const double ry = sy - p[0].y();
        const double l1 = (rx * d2.y() - ry * d2.x()) / det;
        const double l2 = (d1.x() * ry - d1.y() * rx) / det;
        // Opposite sub-triangle area, so points on an edge give exactly zero.
        const double l0 = ((p[1].x() - sx) * (p[2].y() - sy) - (p[1].y() - sy) * (p[2].x() - sx)) / det;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
        const double depth = l0 * z[0] + l1 * z[1] + l2 * z[2];
        if (out.index(x, y) < 0 || depth < out.depth(x, y)) {
          out.index(x, y) = static_cast<int>(t);
          out.bary(x, y) = Vec3(l0, l1, l2);
          out.depth(x, y) = depth;
        }
      }
    }
  }
  return out;
}

// Independent random triangles in front of a 64×64 identity-rotation camera.
struct RandomSoup {
  Points3 mesh;
  Faces faces;
  Camera camera;
};

inline RandomSoup random_soup(std::mt19937_64& rng, int triangles, int size = 64) {
  std::uniform_real_distribution<double> xy(-0.6, 0.6);
  std::uniform_real_distribution<double> depth(1.0, 3.0);
  std::uniform_real_distribution<double> spread(0.05, 0.5);
  RandomSoup s;
  s.camera.fx = s.camera.fy = size;
  s.camera.cx = s.camera.cy = size / 2.0;
  s.camera.width = s.camera.height = size;
  s.mesh.resize(3 * triangles, 3);
  s.faces.resize(triangles, 3);
  for (int t = 0; t < triangles; ++t) {
    const Vec3 center(xy(rng), xy(rng), depth(rng));
    const double r = spread(rng);
    for (int k = 0; k < 3; ++k) {
      s.mesh.row(3 * t + k) = (center + Vec3(r * xy(rng), r * xy(rng), 0.5 * r * xy(rng))).transpose();
      s.faces(t, k) = 3 * t + k;
    }
  }
  return s;
}

}  // namespace densefit::test
