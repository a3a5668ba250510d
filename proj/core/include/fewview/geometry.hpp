#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace fewview {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid camera-to-world transform. Convention throughout: right-handed,
// the camera looks along its -z axis, image y is up, world up is +z
// (Blender-synthetic convention, so `transforms` manifests load directly).
struct Pose {
  Mat3 rotation = Mat3::Identity();  // columns = camera axes in world space
  Vec3 translation = Vec3::Zero();   // camera center in world space

  Vec3 forward() const { return -rotation.col(2); }

  // Max-norm of R^T R - I; 0 for an exact rotation.
  double orthonormality_residual() const;
};

struct Camera {
  int width = 0;        // pixels
  int height = 0;       // pixels
  double focal = 0.0;   // pixels
  Pose pose;

  static Camera from_fov_x(int width, int height, double fov_x_radians,
                           const Pose& pose);

  // Throws on non-positive dimensions/focal or a non-orthonormal rotation.
  void validate() const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

// Pose looking from eye toward target with the given up hint.
// Throws DegenerateFrame when up is (nearly) parallel to the view direction.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

// Ray through pixel (px, py) offset by jitter in [0,1)^2; (0.5, 0.5) is the
// pixel center. Throws OutOfBounds for pixels outside the image.
Ray pixel_ray(const Camera& camera, int px, int py,
              double jitter_x = 0.5, double jitter_y = 0.5);

// n cameras on a sphere of `radius` around the origin, all looking at the
// origin: azimuths stratified over [0, 360), elevations uniform in
// [elevation_deg_min, elevation_deg_max]. Deterministic for a fixed seed.
std::vector<Camera> sample_poses_sphere_cap(int n, double radius,
                                            double elevation_deg_min,
                                            double elevation_deg_max,
                                            uint64_t seed, int width,
                                            int height, double fov_x_radians);

}  // namespace fewview
