#pragma once

#include <array>

#include "talkgen/core/tensor.hpp"
#include "talkgen/pose/pose.hpp"

namespace talkgen::pose {

// Pinhole camera for the pose-box conditioning channel. Declared
// conventions, recorded in config: any consistent choice works since the
// renderer only has to encode pose.
struct CameraModel {
  double focal = 64.0;
  double cx = 31.5;  // pixel-grid center of a 64-wide image
  double cy = 31.5;
  int width = 64;
  int height = 64;

  bool valid() const {
    return focal > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
};

// Axis-aligned head box, centered at the head origin, plus the camera-space
// placement conventions for pose translation.
struct BoxGeometry {
  double size_x = 1.0;
  double size_y = 1.3;
  double size_z = 1.1;
  double camera_distance = 2.5;   // box center depth at t = 0
  double translation_scale = 1.0; // camera-space units per normalized unit
  double near_plane = 0.05;
};

struct ProjectedVertex {
  double u, v, depth;
};

// Camera-space projection of the 8 box corners under a pose.
std::array<ProjectedVertex, 8> project_box_vertices(const Pose& pose,
                                                    const CameraModel& cam,
                                                    const BoxGeometry& geo = {});

// Binary [1,H,W] wireframe rasterization of the posed box (12 edges,
// Bresenham, 1 px). Throws out_of_frustum when nothing is visible.
Tensor<float> render_pose_box(const Pose& pose, const CameraModel& cam,
                              const BoxGeometry& geo = {});

// Stacked pose tensor: logically [W,H,1,T], stored [1,T,H,W].
struct PoseTensor {
  Tensor<float> data;  // [1,T,H,W]
  Index width() const { return data.dim(3); }
  Index height() const { return data.dim(2); }
  Index channels() const { return data.dim(0); }
  Index frames() const { return data.dim(1); }
};

PoseTensor render_pose_sequence(const PoseSequence& seq, const CameraModel& cam,
                                const BoxGeometry& geo = {});

// Camera for a square conditioning canvas of the given size, principal
// point at the pixel-grid center and focal length equal to the width.
inline CameraModel square_camera(Index size) {
  CameraModel cam;
  cam.width = (int)size;
  cam.height = (int)size;
  cam.cx = (double)size / 2.0 - 0.5;
  cam.cy = (double)size / 2.0 - 0.5;
  cam.focal = (double)size;
  return cam;
}

}  // namespace talkgen::pose
