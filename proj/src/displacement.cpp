#include "densefit/displacement.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace densefit {

int VertexDisplacements::visible_count() const {
  return static_cast<int>(std::count(visible.begin(), visible.end(), std::uint8_t{1}));
}

int DisplacementField::valid_pixel_count() const {
  return static_cast<int>(std::count(mask.data().begin(), mask.data().end(), std::uint8_t{1}));
}

VertexDisplacements gt_vertex_displacements(const BodyModelSpec& model, const BodyParams& gt,
                                            const Camera& gt_camera, const BodyParams& init,
                                            const Camera& init_camera,
                                            const VertexVisibility& visibility,
                                            const ForwardOptions& options) {
  const int n = model.vertex_count();
  if (static_cast<int>(visibility.visible.size()) != n) {
    throw DimensionError("visibility must have one entry per vertex");
  }
  const Projection target = project(gt_camera, forward(model, gt, options));
  const Projection source = project(init_camera, forward(model, init, options));

  VertexDisplacements out;
  out.v = Points2::Zero(n, 2);
  out.visible.assign(static_cast<std::size_t>(n), 0);
  out.mass = visibility.mass;
  for (int i = 0; i < n; ++i) {
    if (!visibility.visible[i] || !target.valid[i] || !source.valid[i]) continue;
    out.v.row(i) = target.pixels.row(i) - source.pixels.row(i);
    out.visible[i] = 1;
  }
  return out;
}

DisplacementField vertex_to_pixel(const VertexDisplacements& v, const RenderBuffers& buffers,
                                  const Faces& faces) {
  DisplacementField out;
  out.f = Grid<Vec2>(buffers.width(), buffers.height(), Vec2::Zero());
  out.mask = buffers.mask;
  for (std::size_t p = 0; p < out.mask.size(); ++p) {
    if (!out.mask[p]) continue;
    const int t = buffers.index_map[p];
    const Vec3& b = buffers.bary[p];
    Vec2 acc = Vec2::Zero();
    for (int k = 0; k < 3; ++k) acc += b[k] * v.v.row(faces(t, k)).transpose();
    out.f[p] = acc;
  }
  return out;
}

VertexDisplacements pixel_to_vertex(const DisplacementField& field, const RenderBuffers& buffers,
                                    const Faces& faces, int vertex_count, double threshold) {
  if (!field.mask.same_shape(buffers.mask) || field.mask.data() != buffers.mask.data()) {
    throw DimensionError("field mask does not match the rendering mask");
  }
  VertexDisplacements out;
  out.v = Points2::Zero(vertex_count, 2);
  out.mass = Eigen::VectorXd::Zero(vertex_count);
  out.visible.assign(static_cast<std::size_t>(vertex_count), 0);
  for (std::size_t p = 0; p < field.mask.size(); ++p) {
    if (!field.mask[p]) continue;
    const int t = buffers.index_map[p];
    const Vec3& b = buffers.bary[p];
    for (int k = 0; k < 3; ++k) {
      const int i = faces(t, k);
      out.mass[i] += b[k];
      out.v.row(i) += b[k] * field.f[p].transpose();
    }
  }
  for (int i = 0; i < vertex_count; ++i) {
    if (out.mass[i] > threshold) {
      out.v.row(i) /= out.mass[i];
      out.visible[i] = 1;
    } else {
      out.v.row(i).setZero();
    }
  }
  return out;
}

VertexTargets target_vertices(const VertexDisplacements& v, const BodyModelSpec& model,
                              const BodyParams& init, const Camera& init_camera,
                              const ForwardOptions& options) {
  const int n = model.vertex_count();
  if (v.v.rows() != n || static_cast<int>(v.visible.size()) != n) {
    throw DimensionError("vertex displacements must have one row per model vertex");
  }
  const Projection proj = project(init_camera, forward(model, init, options));
  VertexTargets out;
  out.positions = Points2::Zero(n, 2);
  out.weight.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    if (!proj.valid[i]) continue;
    out.positions.row(i) = v.v.row(i) + proj.pixels.row(i);
    out.weight[i] = v.visible[i];
  }
  return out;
}

namespace {

void check_compatible(const DisplacementField& pred, const DisplacementField& gt) {
  if (!pred.mask.same_shape(gt.mask) || !pred.f.same_shape(gt.f)) {
    throw DimensionError("displacement fields differ in shape");
  }
  if (pred.mask.data() != gt.mask.data()) {
    throw DimensionError("displacement fields differ in mask");
  }
}

}  // namespace

double masked_l1(const DisplacementField& pred, const DisplacementField& gt) {
  check_compatible(pred, gt);
  double sum = 0.0;
  for (std::size_t p = 0; p < gt.mask.size(); ++p) {
    if (gt.mask[p]) sum += (pred.f[p] - gt.f[p]).lpNorm<1>();
  }
  return sum / (static_cast<double>(gt.width()) * gt.height());
}

double epe(const DisplacementField& pred, const DisplacementField& gt) {
  check_compatible(pred, gt);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < gt.mask.size(); ++p) {
    if (!gt.mask[p]) continue;
    sum += (pred.f[p] - gt.f[p]).norm();
    ++count;
  }
  if (count == 0) {
    throw EmptyDomainError("EPE is undefined without valid pixels");
  }
  return sum / static_cast<double>(count);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + k])) << (8 * k);
  return v;
}

}  // namespace

std::string encode_field(const DisplacementField& field) {
  const std::size_t w = static_cast<std::size_t>(field.width());
  const std::size_t h = static_cast<std::size_t>(field.height());
  std::string out = "DF01";
  out.reserve(12 + w * h * 9);
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(h));
  for (std::size_t p = 0; p < w * h; ++p) {
    for (int c = 0; c < 2; ++c) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(field.f[p][c])));
  }
  for (std::size_t p = 0; p < w * h; ++p) out.push_back(static_cast<char>(field.mask[p]));
  return out;
}

DisplacementField decode_field(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "DF01") != 0) {
    throw ParseError("displacement field: bad magic");
  }
  const std::uint32_t w = get_u32(bytes, 4);
  const std::uint32_t h = get_u32(bytes, 8);
  if (w == 0 || h == 0 || w > (1u << 15) || h > (1u << 15)) {
    throw ParseError("displacement field: invalid dimensions");
  }
  const std::size_t count = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 12 + count * 9) {
    throw ParseError("displacement field: size does not match header");
  }
  DisplacementField field;
  field.f = Grid<Vec2>(static_cast<int>(w), static_cast<int>(h), Vec2::Zero());
  field.mask = Mask(static_cast<int>(w), static_cast<int>(h), 0);
  std::size_t off = 12;
  for (std::size_t p = 0; p < count; ++p) {
    for (int c = 0; c < 2; ++c) {
      field.f[p][c] = std::bit_cast<float>(get_u32(bytes, off));
      off += 4;
    }
  }
  for (std::size_t p = 0; p < count; ++p) {
    const auto m = static_cast<std::uint8_t>(bytes[off++]);
    if (m > 1) throw ParseError("displacement field: mask values must be 0 or 1");
    field.mask[p] = m;
  }
  return field;
}

void write_field(const DisplacementField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = encode_field(field);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DisplacementField read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_field(bytes);
}

}  // namespace densefit
