#include "densefit/metrics.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>

using namespace densefit;

namespace {

Points3 random_points(std::mt19937_64& rng, int n, double scale = 0.3) {
  std::normal_distribution<double> d(0.0, scale);
  Points3 p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = d(rng);
  return p;
}

double mean_distance_mm(const Points3& a, const Points3& b) { return 1000.0 * (a - b).rowwise().norm().mean(); }

// Scale minimizing Σ||s·p - g||² by golden-section search.
double golden_scale(const Points3& p, const Points3& g) {
  auto f = [&](double s) { return (s * p - g).squaredNorm(); };
  double a = -20.0, b = 20.0;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  for (int it = 0; it < 200; ++it) {
    if (f(c) < f(d)) b = d;
    else a = c;
    c = b - phi * (b - a);
    d = a + phi * (b - a);
  }
  return 0.5 * (a + b);
}

Points3 centered(const Points3& p) { return p.rowwise() - p.colwise().mean(); }

}  // namespace

TEST_CASE("mpjpe: identity, uniform offset, per-point oracle") {
  std::mt19937_64 rng(1);
  const Points3 g = random_points(rng, 17);
  CHECK(mpjpe(g, g) == 0.0);
  const Points3 shifted = g.rowwise() + Eigen::RowVector3d(0.006, 0.0, 0.008);
  CHECK(mpjpe(shifted, g) == doctest::Approx(10.0));
  const Points3 p = random_points(rng, 17);
  double sum = 0.0;
  for (int i = 0; i < 17; ++i) sum += std::sqrt((p.row(i) - g.row(i)).squaredNorm());
  CHECK(mpjpe(p, g) == doctest::Approx(1000.0 * sum / 17).epsilon(1e-13));
  CHECK(mpjpe(shifted, g, {true}) == doctest::Approx(0.0).scale(1.0));
  CHECK_THROWS_AS(mpjpe(p, g.topRows(3)), DimensionError);
}

TEST_CASE("pa_align: exact similarity and identity") {
  std::mt19937_64 rng(2);
  const Points3 p = random_points(rng, 12);
  const Mat3 r = test::random_rotation(rng);
  const Points3 g = ((1.7 * p * r.transpose()).rowwise() + Eigen::RowVector3d(0.3, -0.2, 1.0)).eval();
  const Similarity s = pa_align(p, g);
  CHECK(s.scale == doctest::Approx(1.7).epsilon(1e-12));
  CHECK((s.rotation - r).norm() < 1e-10);
  CHECK(pa_mpjpe(p, g) <= 1e-8);
  CHECK(pa_mpjpe(g, g) <= 1e-8);
}

TEST_CASE("pa_align: four asymmetric points match the Umeyama closed form") {
  Points3 p(4, 3), g(4, 3);
  p << 0, 0, 0, 1, 0, 0, 0, 2, 0, 0.3, 0.1, 1.5;
  g << 0.1, 0.2, -0.1, 0.9, 0.5, 0.2, -0.6, 1.7, 0.1, 0.2, 0.9, 1.2;
  const Eigen::Matrix4d t = Eigen::umeyama(p.transpose(), g.transpose(), true);
  const Similarity s = pa_align(p, g);
  const double scale = std::cbrt(t.topLeftCorner<3, 3>().determinant());
  CHECK(s.scale == doctest::Approx(scale).epsilon(1e-12));
  CHECK((s.rotation - t.topLeftCorner<3, 3>() / scale).norm() < 1e-10);
  CHECK((s.translation - t.topRightCorner<3, 1>()).norm() < 1e-10);
  Points3 oracle(4, 3);
  for (int i = 0; i < 4; ++i)
    oracle.row(i) = (t.topLeftCorner<3, 3>() * p.row(i).transpose() + t.topRightCorner<3, 1>()).transpose();
  CHECK(pa_mpjpe(p, g) == doctest::Approx(mean_distance_mm(oracle, g)).epsilon(1e-10));
}

TEST_CASE("pa_align never returns a reflection") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Points3 p = random_points(rng, 8);
    Points3 g = p;
    g.col(0) *= -1.0;  // mirror image
    const Similarity s = pa_align(p, g);
    CHECK(s.rotation.determinant() == doctest::Approx(1.0));
    const Eigen::Matrix4d t = Eigen::umeyama(p.transpose(), g.transpose(), true);
    const double scale = std::cbrt(t.topLeftCorner<3, 3>().determinant());
    CHECK(s.scale == doctest::Approx(scale).epsilon(1e-9));
  }
}

TEST_CASE("pa_align rejects degenerate inputs") {
  Points3 two(2, 3);
  two << 0, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(pa_align(two, two), InvariantError);
  Points3 line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) << i, 2 * i, -i;
  CHECK_THROWS_AS(pa_align(line, line), InvariantError);
}

TEST_CASE("n_mpjpe: doubled prediction, identity, golden-section oracle") {
  std::mt19937_64 rng(4);
  const Points3 g = centered(random_points(rng, 20));
  CHECK(n_mpjpe(2.0 * g, g) <= 1e-12);
  CHECK(n_mpjpe(g, g) <= 1e-12);
  for (int trial = 0; trial < 10; ++trial) {
    const Points3 p = random_points(rng, 20);
    const Points3 q = random_points(rng, 20);
    const double s = golden_scale(centered(p), centered(q));
    CHECK(n_mpjpe(p, q) == doctest::Approx(mean_distance_mm(s * centered(p), centered(q))).epsilon(1e-7));
  }
}

TEST_CASE("metric invariances under similarity and scaling") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  std::normal_distribution<double> t(0.0, 2.0);
  const Points3 p = random_points(rng, 25);
  const Points3 g = random_points(rng, 25);
  const double pa = pa_mpjpe(p, g);
  const double n = n_mpjpe(p, g);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat3 r = test::random_rotation(rng);
    const Points3 moved = ((scale(rng) * p * r.transpose()).rowwise() + Eigen::RowVector3d(t(rng), t(rng), t(rng))).eval();
    CHECK(std::abs(pa_mpjpe(moved, g) - pa) <= 1e-8);
    CHECK(std::abs(n_mpjpe(scale(rng) * p, g) - n) <= 1e-8);
  }
}

TEST_CASE("PA <= N <= plain in squared error on arbitrary centered data") {
  // Both alignments are least-squares fits over nested transform families.
  std::mt19937_64 rng(6);
  auto sq = [](const Points3& a, const Points3& b) { return (a - b).squaredNorm(); };
  for (int trial = 0; trial < 100; ++trial) {
    const Points3 g = centered(random_points(rng, 15));
    const Points3 p = centered(random_points(rng, 15) + 0.5 * g);
    const double s = (p.array() * g.array()).sum() / p.squaredNorm();
    const double pa = sq(pa_align(p, g).apply(p), g);
    const double n = sq(s * p, g);
    const double plain = sq(p, g);
    CHECK(pa <= n * (1 + 1e-12));
    CHECK(n <= plain * (1 + 1e-12));
  }
}

TEST_CASE("mean-distance metrics do not always keep the least-squares ordering") {
  // Least-squares alignment can raise the mean Euclidean distance, so PA-MPJPE
  // may exceed N-MPJPE and N-MPJPE may exceed MPJPE on noisy predictions.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1.0);
  int pa_above_n = 0, n_above_plain = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Points3 g = centered(random_points(rng, 24));
    Points3 p = g;
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += 0.015 * noise(rng);
    p = centered(p);
    const double pa = pa_mpjpe(p, g), n = n_mpjpe(p, g), plain = mpjpe(p, g);
    pa_above_n += pa > n;
    n_above_plain += n > plain;
  }
  CHECK(pa_above_n > 0);
  CHECK(n_above_plain > 0);
}

TEST_CASE("report composes the six metrics") {
  const BodyModelSpec m = test::small_model();
  std::mt19937_64 rng(7);
  const Points3 gt = forward(m, test::random_params(m, rng));
  const Points3 pred = forward(m, test::random_params(m, rng));
  const MetricsReport r = report(pred, gt, m);
  const Points3 jp = regress_keypoints(m, pred);
  const Points3 jg = regress_keypoints(m, gt);
  CHECK(r.mpjpe == mpjpe(jp, jg));
  CHECK(r.pa_mpjpe == pa_mpjpe(jp, jg));
  CHECK(r.n_mpjpe == n_mpjpe(jp, jg));
  CHECK(r.pve == mpjpe(pred, gt));
  CHECK(r.pa_pve == pa_mpjpe(pred, gt));
  CHECK(r.n_pve == n_mpjpe(pred, gt));
  const MetricsReport same = report(gt, gt, m);
  CHECK(same.mpjpe == 0.0);
  CHECK(same.pve == 0.0);
  CHECK(same.pa_pve <= 1e-8);
  CHECK_FALSE(r.epe.has_value());
}
