#include "densefit/model_io.hpp"

#include "json_arrays.hpp"

namespace densefit {

using detail::json;

namespace {

// 3N×K blendshape matrix <-> K×N×3 flat array.
json blendshapes_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(m(r, k));
  return out;
}

Eigen::MatrixXd blendshapes_from_flat(const std::vector<double>& flat, Eigen::Index n3, Eigen::Index k) {
  Eigen::MatrixXd m(n3, k);
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index r = 0; r < n3; ++r) m(r, c) = flat[static_cast<std::size_t>(c * n3 + r)];
  return m;
}

}  // namespace

void save_model(const BodyModelSpec& model, const std::filesystem::path& path) {
  validate(model);
  json doc;
  doc["N"] = model.vertex_count();
  doc["J"] = model.joint_count();
  doc["B"] = model.shape_count();
  doc["k"] = model.keypoint_count();
  doc["T_f"] = model.face_count();
  doc["template"] = detail::flatten(model.template_vertices);
  doc["shape_blendshapes"] = blendshapes_to_json(model.shape_blendshapes);
  doc["joint_regressor"] = detail::flatten(model.joint_regressor);
  doc["keypoint_regressor"] = detail::flatten(model.keypoint_regressor);
  doc["skinning_weights"] = detail::flatten(model.skinning_weights);
  doc["parents"] = model.parents;
  doc["faces"] = detail::flatten(model.faces);
  if (model.has_pose_blendshapes()) {
    doc["pose_blendshapes"] = blendshapes_to_json(model.pose_blendshapes);
  }
  detail::write_json_file(path, doc);
}

BodyModelSpec load_model(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  if (!doc.is_object()) {
    throw ParseError(path.string() + ": model file must be a JSON object");
  }
  const auto n = static_cast<Eigen::Index>(detail::get_count(doc, "N"));
  const auto j = static_cast<Eigen::Index>(detail::get_count(doc, "J"));
  const auto b = static_cast<Eigen::Index>(detail::get_count(doc, "B"));
  const auto k = static_cast<Eigen::Index>(detail::get_count(doc, "k"));
  const auto t = static_cast<Eigen::Index>(detail::get_count(doc, "T_f"));
  if (n == 0 || j == 0) {
    throw ParseError("model needs N >= 1 and J >= 1");
  }

  BodyModelSpec model;
  model.template_vertices = detail::unflatten(detail::get_doubles(doc, "template", n * 3), n, 3);
  model.shape_blendshapes =
      blendshapes_from_flat(detail::get_doubles(doc, "shape_blendshapes", b * n * 3), 3 * n, b);
  model.joint_regressor = detail::unflatten(detail::get_doubles(doc, "joint_regressor", j * n), j, n);
  model.keypoint_regressor =
      detail::unflatten(detail::get_doubles(doc, "keypoint_regressor", k * n), k, n);
  model.skinning_weights = detail::unflatten(detail::get_doubles(doc, "skinning_weights", n * j), n, j);
  model.parents = detail::get_ints(doc, "parents", j);
  const auto faces = detail::get_ints(doc, "faces", t * 3);
  model.faces.resize(t, 3);
  for (Eigen::Index r = 0; r < t; ++r)
    for (int c = 0; c < 3; ++c) model.faces(r, c) = faces[static_cast<std::size_t>(r * 3 + c)];
  if (doc.contains("pose_blendshapes")) {
    const Eigen::Index p = 9 * (j - 1);
    model.pose_blendshapes =
        blendshapes_from_flat(detail::get_doubles(doc, "pose_blendshapes", p * n * 3), 3 * n, p);
  }
  validate(model);
  return model;
}

}  // namespace densefit
