#include "densefit/body_model.hpp"
#include "densefit/model_io.hpp"
#include "densefit/rotation.hpp"
#include "densefit/synthetic_model.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace densefit;

namespace {

Mat3 quaternion_oracle(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle == 0.0) return Mat3::Identity();
  const Vec3 axis = aa / angle;
  const Eigen::Quaterniond q(std::cos(angle / 2), std::sin(angle / 2) * axis.x(), std::sin(angle / 2) * axis.y(),
                             std::sin(angle / 2) * axis.z());
  return q.toRotationMatrix();
}

void check_model_invariants(const BodyModelSpec& m) {
  const Eigen::Index n = m.vertex_count();
  for (Eigen::Index i = 0; i < n; ++i) {
    REQUIRE(std::abs(m.skinning_weights.row(i).sum() - 1.0) <= 1e-6);
    REQUIRE(m.skinning_weights.row(i).minCoeff() >= 0.0);
  }
  for (Eigen::Index j = 0; j < m.joint_regressor.rows(); ++j)
    REQUIRE(std::abs(m.joint_regressor.row(j).sum() - 1.0) <= 1e-6);
  for (Eigen::Index j = 0; j < m.keypoint_regressor.rows(); ++j)
    REQUIRE(std::abs(m.keypoint_regressor.row(j).sum() - 1.0) <= 1e-6);
  // Single root and no cycles: walking up from any joint reaches the root within J steps.
  int roots = 0;
  for (int j = 0; j < m.joint_count(); ++j) {
    if (m.parents[j] < 0) ++roots;
    int cur = j;
    int steps = 0;
    while (m.parents[cur] >= 0 && steps <= m.joint_count()) {
      cur = m.parents[cur];
      ++steps;
    }
    REQUIRE(steps <= m.joint_count());
  }
  REQUIRE(roots == 1);
  REQUIRE(m.faces.minCoeff() >= 0);
  REQUIRE(m.faces.maxCoeff() < n);
  REQUIRE(m.template_vertices.allFinite());
}

}  // namespace

TEST_CASE("rodrigues: zero vector is the identity") {
  CHECK((rodrigues(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("rodrigues: quarter turn about z") {
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((rodrigues(Vec3(0, 0, std::numbers::pi / 2)) - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rodrigues: matches the quaternion exponential") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 aa(n(rng), n(rng), n(rng));
    const Mat3 r = rodrigues(aa);
    CHECK((r - quaternion_oracle(aa)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rodrigues: small angles stay orthonormal and match the oracle") {
  for (double s : {1e-12, 1e-9, 5e-9, 2e-8, 1e-6}) {
    const Vec3 aa = s * Vec3(0.3, -0.5, 0.8);
    const Mat3 r = rodrigues(aa);
    CHECK((r - quaternion_oracle(aa)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-14);
  }
}

TEST_CASE("rodrigues_jacobian matches central differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 aa(n(rng), n(rng), n(rng));
    if (trial == 0) aa = Vec3(1e-10, -2e-10, 0.0);
    const auto jac = rodrigues_jacobian(aa);
    for (int c = 0; c < 3; ++c) {
      Vec3 hi = aa, lo = aa;
      hi[c] += 1e-6;
      lo[c] -= 1e-6;
      const Mat3 fd = (rodrigues(hi) - rodrigues(lo)) / 2e-6;
      CHECK((jac[c] - fd).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("normalize_axis_angle wraps the magnitude below 2π") {
  const Vec3 axis = Vec3(1, 2, 2).normalized();
  const Vec3 wrapped = normalize_axis_angle((2 * std::numbers::pi + 0.5) * axis);
  CHECK(wrapped.norm() == doctest::Approx(0.5));
  CHECK((rodrigues(wrapped) - rodrigues((2 * std::numbers::pi + 0.5) * axis)).norm() < 1e-12);
  const Eigen::VectorXd pose = normalize_pose(Eigen::VectorXd::Constant(6, 4.0));
  for (int j = 0; j < 2; ++j) CHECK(pose.segment<3>(3 * j).norm() < 2 * std::numbers::pi);
}

TEST_CASE("forward: rest pose returns the template") {
  const BodyModelSpec m = test::small_model();
  CHECK((forward(m, BodyParams::zeros(m)) - m.template_vertices).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("forward: unit shape coefficient adds one blendshape") {
  const BodyModelSpec m = test::small_model();
  BodyParams p = BodyParams::zeros(m);
  p.shape[0] = 1.0;
  const Points3 out = forward(m, p);
  for (int i = 0; i < m.vertex_count(); ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(out(i, c) == doctest::Approx(m.template_vertices(i, c) + m.shape_blendshapes(3 * i + c, 0)).epsilon(1e-14));
}

TEST_CASE("forward: two-bone chain with the elbow rotated 90 degrees") {
  const BodyModelSpec m = test::two_bone_chain();
  validate(m);
  BodyParams p = BodyParams::zeros(m);
  p.pose.segment<3>(3) = Vec3(0, 0, std::numbers::pi / 2);
  const Points3 out = forward(m, p);
  const Vec3 joint(1, 0, 0);
  Mat3 rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  for (int i = 0; i < m.vertex_count(); ++i) {
    const Vec3 rest = m.template_vertices.row(i).transpose();
    const Vec3 expected = rest.x() >= 1.0 ? Vec3(rz * (rest - joint) + joint) : rest;
    CHECK((out.row(i).transpose() - expected).norm() < 1e-12);
  }
}

TEST_CASE("forward: dimension mismatch throws") {
  const BodyModelSpec m = test::small_model();
  BodyParams p = BodyParams::zeros(m);
  p.pose.resize(5);
  CHECK_THROWS_AS(forward(m, p), DimensionError);
}

TEST_CASE("forward is equivariant under a global root rotation") {
  const BodyModelSpec m = test::small_model(5);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const BodyParams p = test::random_params(m, rng);
    const Mat3 r = test::random_rotation(rng);
    BodyParams q = p;
    const Eigen::AngleAxisd composed(r * rodrigues(p.pose.head<3>()));
    q.pose.head<3>() = composed.angle() * composed.axis();
    const ForwardState s = forward_state(m, p);
    const Points3 rotated = forward(m, q);
    const Vec3 root = s.rest_joints.row(0).transpose();
    for (int i = 0; i < m.vertex_count(); ++i) {
      const Vec3 expected = r * (s.vertices.row(i).transpose() - root) + root;
      REQUIRE((rotated.row(i).transpose() - expected).norm() < 1e-9);
    }
  }
}

TEST_CASE("forward is linear in shape at zero pose") {
  const BodyModelSpec m = test::small_model(7);
  std::mt19937_64 rng(8);
  const BodyParams a = test::random_params(m, rng);
  const BodyParams b = test::random_params(m, rng);
  BodyParams pa = BodyParams::zeros(m), pb = pa, pab = pa;
  pa.shape = a.shape;
  pb.shape = b.shape;
  pab.shape = 2.5 * a.shape + b.shape;
  const Points3 lhs = forward(m, pab) - m.template_vertices;
  const Points3 rhs = 2.5 * (forward(m, pa) - m.template_vertices) + (forward(m, pb) - m.template_vertices);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("regress_keypoints: one-hot, midpoint, and matrix product") {
  const BodyModelSpec chain = test::two_bone_chain();
  const Points3 mesh = chain.template_vertices;
  const Points3 k = regress_keypoints(chain, mesh);
  CHECK((k.row(1) - mesh.row(5)).norm() == 0.0);
  CHECK((k.row(0) - 0.5 * (mesh.row(2) + mesh.row(3))).norm() < 1e-15);

  BodyModelSpec m = test::small_model();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index r = 0; r < m.keypoint_regressor.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.keypoint_regressor.cols(); ++c) m.keypoint_regressor(r, c) = u(rng);
    m.keypoint_regressor.row(r) /= m.keypoint_regressor.row(r).sum();
  }
  const Points3 posed = forward(m, test::random_params(m, rng));
  const Points3 got = regress_keypoints(m, posed);
  for (Eigen::Index r = 0; r < got.rows(); ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (Eigen::Index v = 0; v < posed.rows(); ++v) acc += m.keypoint_regressor(r, v) * posed(v, c);
      CHECK(std::abs(got(r, c) - acc) < 1e-12);
    }
  CHECK_THROWS_AS(regress_keypoints(m, posed.topRows(3)), DimensionError);
}

TEST_CASE("regress_keypoints is translation-equivariant") {
  const BodyModelSpec m = test::small_model();
  std::mt19937_64 rng(10);
  const Points3 mesh = forward(m, test::random_params(m, rng));
  const Eigen::RowVector3d t(0.3, -1.2, 2.0);
  const Points3 shifted = regress_keypoints(m, mesh.rowwise() + t);
  const Points3 base = regress_keypoints(m, mesh);
  CHECK(((shifted.rowwise() - t) - base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("synthetic model: deterministic per seed") {
  SyntheticModelConfig c;
  const BodyModelSpec a = make_synthetic_model(c, 0);
  const BodyModelSpec b = make_synthetic_model(c, 0);
  CHECK(a.template_vertices == b.template_vertices);
  CHECK(a.shape_blendshapes == b.shape_blendshapes);
  CHECK(a.skinning_weights == b.skinning_weights);
  CHECK(a.joint_regressor == b.joint_regressor);
  CHECK(a.keypoint_regressor == b.keypoint_regressor);
  CHECK(a.faces == b.faces);
  CHECK(a.parents == b.parents);
}

TEST_CASE("synthetic model: 24 joints give 72 pose parameters") {
  SyntheticModelConfig c;
  c.joint_count = 24;
  c.shape_count = 10;
  const BodyModelSpec m = make_synthetic_model(c, 1);
  CHECK(m.pose_dim() == 72);
  CHECK(m.shape_count() == 10);
  CHECK(m.keypoint_count() == 25);
}

TEST_CASE("synthetic model: invariants hold over 50 seeds") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SyntheticModelConfig c;
    c.joint_count = 4 + static_cast<int>(seed % 21);
    c.pose_blendshapes = seed % 3 == 0;
    const BodyModelSpec m = make_synthetic_model(c, seed);
    CHECK_NOTHROW(validate(m));
    check_model_invariants(m);
  }
  SyntheticModelConfig bad;
  bad.joint_count = 3;
  CHECK_THROWS_AS(make_synthetic_model(bad, 0), InvariantError);
}

TEST_CASE("model io: save and load round trip") {
  const auto dir = test::temp_dir("model_io");
  const BodyModelSpec m = test::small_model(4, 8, true);
  save_model(m, dir / "m.json");
  const BodyModelSpec r = load_model(dir / "m.json");
  CHECK(r.template_vertices == m.template_vertices);
  CHECK(r.shape_blendshapes == m.shape_blendshapes);
  CHECK(r.joint_regressor == m.joint_regressor);
  CHECK(r.keypoint_regressor == m.keypoint_regressor);
  CHECK(r.skinning_weights == m.skinning_weights);
  CHECK(r.pose_blendshapes == m.pose_blendshapes);
  CHECK(r.parents == m.parents);
  CHECK(r.faces == m.faces);
}

TEST_CASE("model io: bad skinning row is reported by field and row") {
  const auto dir = test::temp_dir("model_bad");
  const BodyModelSpec m = test::small_model();
  save_model(m, dir / "m.json");
  // Halve row 3 in the file; the saver itself refuses invalid models.
  nlohmann::json doc;
  std::ifstream(dir / "m.json") >> doc;
  const int j = m.joint_count();
  for (int c = 0; c < j; ++c) doc["skinning_weights"][3 * j + c] = 0.5 * m.skinning_weights(3, c);
  std::ofstream(dir / "m.json") << doc;
  try {
    load_model(dir / "m.json");
    FAIL("expected an invariant error");
  } catch (const InvariantError& e) {
    const std::string what = e.what();
    CHECK(what.find("skinning_weights") != std::string::npos);
    CHECK(what.find("row 3") != std::string::npos);
  }
}

TEST_CASE("model io: truncated file is a parse error") {
  const auto dir = test::temp_dir("model_trunc");
  save_model(test::small_model(), dir / "m.json");
  std::ifstream in(dir / "m.json");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::ofstream(dir / "t.json") << text.substr(0, text.size() / 2);
  CHECK_THROWS_AS(load_model(dir / "t.json"), ParseError);
  CHECK_THROWS_AS(load_model(dir / "missing.json"), ParseError);
}

TEST_CASE("validate rejects malformed trees and faces") {
  BodyModelSpec m = test::two_bone_chain();
  m.parents = {-1, 1};
  CHECK_THROWS_AS(validate(m), InvariantError);
  m = test::two_bone_chain();
  m.faces(0, 2) = 6;
  CHECK_THROWS_AS(validate(m), InvariantError);
  m = test::two_bone_chain();
  m.joint_regressor(0, 0) = 0.9;
  CHECK_THROWS_AS(validate(m), InvariantError);
}

TEST_CASE("backward matches finite differences of a linear vertex loss") {
  for (bool pbs : {false, true}) {
    const BodyModelSpec m = test::small_model(11, 8, pbs);
    const ForwardOptions opt{pbs};
    std::mt19937_64 rng(12);
    const BodyParams p = test::random_params(m, rng);
    Points3 g(m.vertex_count(), 3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    const ForwardState s = forward_state(m, p, opt);
    const BodyParamsGradient grad = backward(m, p, s, g, opt);
    auto loss = [&](const BodyParams& q) { return (forward(m, q, opt).array() * g.array()).sum(); };
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p.pose.size(); ++i) {
      BodyParams hi = p, lo = p;
      hi.pose[i] += h;
      lo.pose[i] -= h;
      const double fd = (loss(hi) - loss(lo)) / (2 * h);
      CHECK(grad.pose[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
    for (Eigen::Index i = 0; i < p.shape.size(); ++i) {
      BodyParams hi = p, lo = p;
      hi.shape[i] += h;
      lo.shape[i] -= h;
      const double fd = (loss(hi) - loss(lo)) / (2 * h);
      CHECK(grad.shape[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("vertex_jacobian matches finite differences") {
  for (bool pbs : {false, true}) {
    const BodyModelSpec m = test::small_model(13, 10, pbs);
    const ForwardOptions opt{pbs};
    std::mt19937_64 rng(14);
    const BodyParams p = test::random_params(m, rng);
    const Eigen::MatrixXd jac = vertex_jacobian(m, p, forward_state(m, p, opt), opt);
    REQUIRE(jac.rows() == 3 * m.vertex_count());
    REQUIRE(jac.cols() == m.pose_dim() + m.shape_count());
    Eigen::MatrixXd fd(jac.rows(), jac.cols());
    const double h = 1e-6;
    for (Eigen::Index c = 0; c < jac.cols(); ++c) {
      BodyParams hi = p, lo = p;
      if (c < m.pose_dim()) {
        hi.pose[c] += h;
        lo.pose[c] -= h;
      } else {
        hi.shape[c - m.pose_dim()] += h;
        lo.shape[c - m.pose_dim()] -= h;
      }
      const Points3 d = (forward(m, hi, opt) - forward(m, lo, opt)) / (2 * h);
      for (int i = 0; i < m.vertex_count(); ++i)
        for (int k = 0; k < 3; ++k) fd(3 * i + k, c) = d(i, k);
    }
    CHECK((jac - fd).norm() / fd.norm() < 1e-7);
  }
}
