#include "talkgen/pose/render.hpp"

#include "talkgen/core/errors.hpp"

namespace talkgen::pose {

namespace {

struct Vec3 {
  double x, y, z;
};

constexpr int kEdges[12][2] = {{0, 1}, {1, 3}, {3, 2}, {2, 0}, {4, 5}, {5, 7},
                               {7, 6}, {6, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

void plot(Tensor<float>& im, long x, long y) {
  if (x >= 0 && x < im.dim(2) && y >= 0 && y < im.dim(1)) im(0, y, x) = 1.0f;
}

// Integer Bresenham between rounded endpoints.
bool draw_line(Tensor<float>& im, double u0, double v0, double u1, double v1) {
  long x0 = std::lround(u0), y0 = std::lround(v0);
  long x1 = std::lround(u1), y1 = std::lround(v1);
  long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  bool any = false;
  while (true) {
    if (x0 >= 0 && x0 < im.dim(2) && y0 >= 0 && y0 < im.dim(1)) {
      im(0, y0, x0) = 1.0f;
      any = true;
    }
    if (x0 == x1 && y0 == y1) break;
    long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
  (void)plot;
  return any;
}

}  // namespace

std::array<ProjectedVertex, 8> project_box_vertices(const Pose& pose,
                                                    const CameraModel& cam,
                                                    const BoxGeometry& geo) {
  check_invalid(pose.finite(), "pose has non-finite entries");
  check_invalid(cam.valid(), "invalid camera model");
  Eigen::Matrix3d R = pose.rotation_matrix();
  Eigen::Vector3d center(pose.translation.x() * geo.translation_scale,
                         pose.translation.y() * geo.translation_scale,
                         geo.camera_distance +
                             pose.translation.z() * geo.translation_scale);
  std::array<ProjectedVertex, 8> out;
  int idx = 0;
  for (int ix = 0; ix < 2; ++ix)
    for (int iy = 0; iy < 2; ++iy)
      for (int iz = 0; iz < 2; ++iz) {
        Eigen::Vector3d corner((ix ? 0.5 : -0.5) * geo.size_x,
                               (iy ? 0.5 : -0.5) * geo.size_y,
                               (iz ? 0.5 : -0.5) * geo.size_z);
        Eigen::Vector3d p = R * corner + center;
        ProjectedVertex pv;
        pv.depth = p.z();
        if (p.z() > geo.near_plane) {
          pv.u = cam.focal * p.x() / p.z() + cam.cx;
          pv.v = cam.focal * p.y() / p.z() + cam.cy;
        } else {
          pv.u = pv.v = std::numeric_limits<double>::quiet_NaN();
        }
        out[(size_t)idx++] = pv;
      }
  return out;
}

Tensor<float> render_pose_box(const Pose& pose, const CameraModel& cam,
                              const BoxGeometry& geo) {
  auto verts = project_box_vertices(pose, cam, geo);
  bool any_in_front = false;
  for (const auto& v : verts) any_in_front = any_in_front || v.depth > geo.near_plane;
  if (!any_in_front)
    throw Error(ErrorKind::out_of_frustum, "pose box fully behind the camera");

  Tensor<float> im({1, cam.height, cam.width});
  bool drew = false;
  for (const auto& e : kEdges) {
    const auto& a = verts[(size_t)e[0]];
    const auto& b = verts[(size_t)e[1]];
    bool a_ok = a.depth > geo.near_plane, b_ok = b.depth > geo.near_plane;
    if (!a_ok && !b_ok) continue;
    // Edges crossing the near plane are dropped rather than clipped; the
    // conditioning box lives far inside the frustum in normal operation.
    if (a_ok && b_ok) drew = draw_line(im, a.u, a.v, b.u, b.v) || drew;
  }
  if (!drew)
    throw Error(ErrorKind::out_of_frustum, "pose box projects outside the image");
  return im;
}

PoseTensor render_pose_sequence(const PoseSequence& seq, const CameraModel& cam,
                                const BoxGeometry& geo) {
  check_invalid(seq.size() >= 1, "empty pose sequence");
  PoseTensor vs;
  vs.data = Tensor<float>({1, seq.size(), cam.height, cam.width});
  for (Index t = 0; t < seq.size(); ++t) {
    Tensor<float> frame;
    try {
      frame = render_pose_box(seq.at(t), cam, geo);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::out_of_frustum)
        throw Error(ErrorKind::out_of_frustum,
                    "frame " + std::to_string(t) + ": " + e.what());
      throw;
    }
    for (Index y = 0; y < cam.height; ++y)
      for (Index x = 0; x < cam.width; ++x) vs.data(0, t, y, x) = frame(0, y, x);
  }
  return vs;
}

}  // namespace talkgen::pose
