#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "talkgen/pose/pose.hpp"
#include "talkgen/pose/render.hpp"

using namespace talkgen;
using namespace talkgen::pose;

namespace {

double centroid_col(const Tensor<float>& im) {
  double sum = 0, count = 0;
  for (Index y = 0; y < im.dim(1); ++y)
    for (Index x = 0; x < im.dim(2); ++x)
      if (im(0, y, x) > 0.5f) {
        sum += (double)x;
        count += 1;
      }
  REQUIRE(count > 0);
  return sum / count;
}

double pixel_iou(const Tensor<float>& a, const Tensor<float>& b) {
  double inter = 0, uni = 0;
  for (Index i = 0; i < a.size(); ++i) {
    bool pa = a[i] > 0.5f, pb = b[i] > 0.5f;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  return uni > 0 ? inter / uni : 1.0;
}

}  // namespace

TEST_CASE("identity pose renders a binary, centerline-symmetric box") {
  CameraModel cam;
  Pose pose;
  auto im = render_pose_box(pose, cam);
  CHECK(im.shape() == Shape{1, 64, 64});
  Index nonzero = 0;
  for (Index i = 0; i < im.size(); ++i) {
    CHECK((im[i] == 0.0f || im[i] == 1.0f));
    nonzero += im[i] == 1.0f;
  }
  CHECK(nonzero > 0);
  for (Index y = 0; y < 64; ++y)
    for (Index x = 0; x < 64; ++x)
      CHECK(im(0, y, x) == im(0, y, 63 - x));
}

TEST_CASE("translation in +x strictly increases the centroid column") {
  CameraModel cam;
  Pose a, b;
  b.translation.x() = 0.15;
  auto ia = render_pose_box(a, cam);
  auto ib = render_pose_box(b, cam);
  CHECK(centroid_col(ib) > centroid_col(ia));

  // pinhole-predicted pixel shift from the box center depth
  BoxGeometry geo;
  double predicted = cam.focal * b.translation.x() * geo.translation_scale /
                     geo.camera_distance;
  double measured = centroid_col(ib) - centroid_col(ia);
  CHECK(std::abs(measured - predicted) <= 1.0);
}

TEST_CASE("projected vertex oracle: +x translation moves all vertices right") {
  CameraModel cam;
  Pose a, b;
  b.translation.x() = 0.2;
  auto va = project_box_vertices(a, cam);
  auto vb = project_box_vertices(b, cam);
  for (int i = 0; i < 8; ++i) CHECK(vb[(size_t)i].u > va[(size_t)i].u);
}

TEST_CASE("rotation about the camera axis preserves vertex depths") {
  CameraModel cam;
  Pose a, b;
  b.rotation.z() = 0.6;
  auto va = project_box_vertices(a, cam);
  auto vb = project_box_vertices(b, cam);
  std::array<double, 8> da{}, db{};
  for (int i = 0; i < 8; ++i) {
    da[(size_t)i] = va[(size_t)i].depth;
    db[(size_t)i] = vb[(size_t)i].depth;
  }
  std::sort(da.begin(), da.end());
  std::sort(db.begin(), db.end());
  for (int i = 0; i < 8; ++i)
    CHECK(da[(size_t)i] == doctest::Approx(db[(size_t)i]).epsilon(1e-9));
}

TEST_CASE("box fully behind the camera raises out-of-frustum") {
  CameraModel cam;
  Pose p;
  p.translation.z() = -3.0;  // center depth 2.5 - 3.0 < 0
  CHECK_THROWS_AS((void)render_pose_box(p, cam), Error);
  try {
    (void)render_pose_box(p, cam);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::out_of_frustum);
  }
}

TEST_CASE("pose sequences stack to [64,64,1,T]") {
  CameraModel cam;
  PoseSequence seq;
  seq.poses.setZero(64, 6);
  auto vs = render_pose_sequence(seq, cam);
  CHECK(vs.width() == 64);
  CHECK(vs.height() == 64);
  CHECK(vs.channels() == 1);
  CHECK(vs.frames() == 64);

  // constant sequence: identical slices
  for (Index t = 1; t < 64; ++t)
    for (Index y = 0; y < 64; ++y)
      for (Index x = 0; x < 64; ++x)
        CHECK(vs.data(0, t, y, x) == vs.data(0, 0, y, x));
}

TEST_CASE("sequence render names the offending frame") {
  CameraModel cam;
  PoseSequence seq;
  seq.poses.setZero(3, 6);
  seq.poses(2, 5) = -3.0;
  CHECK_THROWS_WITH_AS((void)render_pose_sequence(seq, cam),
                       doctest::Contains("frame 2"), Error);
}

TEST_CASE("smooth pose interpolation keeps adjacent slices overlapping") {
  CameraModel cam;
  Pose a, b;
  b.translation.x() = 0.2;
  b.rotation.z() = 0.17;
  const Index T = 96;
  PoseSequence seq;
  seq.poses.setZero(T, 6);
  for (Index t = 0; t < T; ++t) {
    double f = (double)t / (T - 1);
    seq.poses(t, 2) = f * b.rotation.z();
    seq.poses(t, 3) = f * b.translation.x();
  }
  auto vs = render_pose_sequence(seq, cam);
  for (Index t = 1; t < T; ++t) {
    Tensor<float> prev({1, 64, 64}), cur({1, 64, 64});
    for (Index y = 0; y < 64; ++y)
      for (Index x = 0; x < 64; ++x) {
        prev(0, y, x) = vs.data(0, t - 1, y, x);
        cur(0, y, x) = vs.data(0, t, y, x);
      }
    CHECK(pixel_iou(prev, cur) >= 0.5);
  }
}

TEST_CASE("pose csv round trip and canonicalization") {
  auto dir = std::filesystem::temp_directory_path() / "talkgen_pose_test";
  std::filesystem::create_directories(dir);
  PoseSequence seq;
  seq.poses.resize(5, 6);
  for (Index i = 0; i < 5; ++i)
    for (int c = 0; c < 6; ++c) seq.poses(i, c) = 0.01 * (double)(i * 6 + c) - 0.1;
  auto p = (dir / "poses.csv").string();
  write_pose_csv(p, seq);
  auto back = read_pose_csv(p);
  REQUIRE(back.size() == 5);
  for (Index i = 0; i < 5; ++i)
    for (int c = 0; c < 6; ++c)
      CHECK(back.poses(i, c) == doctest::Approx(seq.poses(i, c)).epsilon(1e-7));

  Pose big;
  big.rotation = Eigen::Vector3d(0, 0, 3.5);  // over pi
  auto canon = big.canonicalized();
  CHECK(canon.rotation.norm() <= M_PI + 1e-12);
  // same rotation matrix
  CHECK((canon.rotation_matrix() - big.rotation_matrix()).norm() < 1e-9);
}
