#include "fewview/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "fewview/errors.hpp"
#include "fewview/rng.hpp"

namespace fewview {

double Pose::orthonormality_residual() const {
  return (rotation.transpose() * rotation - Mat3::Identity())
      .cwiseAbs()
      .maxCoeff();
}

Camera Camera::from_fov_x(int width, int height, double fov_x_radians,
                          const Pose& pose) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.focal = 0.5 * width / std::tan(0.5 * fov_x_radians);
  cam.pose = pose;
  cam.validate();
  return cam;
}

void Camera::validate() const {
  if (width <= 0 || height <= 0)
    throw InvalidBounds("camera dimensions must be positive");
  if (!(focal > 0.0)) throw InvalidBounds("camera focal must be positive");
  if (pose.orthonormality_residual() >= 1e-6)
    throw DegenerateFrame("camera rotation is not orthonormal");
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 view = target - eye;
  const double view_norm = view.norm();
  if (view_norm < 1e-12) throw DegenerateFrame("look_at: eye equals target");
  const Vec3 forward = view / view_norm;
  Vec3 right = forward.cross(up);
  const double right_norm = right.norm();
  if (right_norm < 1e-9)
    throw DegenerateFrame("look_at: up is parallel to the view direction");
  right /= right_norm;
  const Vec3 cam_up = right.cross(forward);  // unit: right <- forward x up

  Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = cam_up;
  pose.rotation.col(2) = -forward;  // camera looks along -z
  pose.translation = eye;
  return pose;
}

Ray pixel_ray(const Camera& camera, int px, int py, double jitter_x,
              double jitter_y) {
  if (px < 0 || px >= camera.width || py < 0 || py >= camera.height)
    throw OutOfBounds("pixel_ray: pixel outside image");
  const double x = (px + jitter_x - 0.5 * camera.width) / camera.focal;
  // Image rows grow downward while the camera y axis points up.
  const double y = -(py + jitter_y - 0.5 * camera.height) / camera.focal;
  const Vec3 dir_cam(x, y, -1.0);
  Ray ray;
  ray.origin = camera.pose.translation;
  ray.direction = (camera.pose.rotation * dir_cam).normalized();
  return ray;
}

std::vector<Camera> sample_poses_sphere_cap(int n, double radius,
                                            double elevation_deg_min,
                                            double elevation_deg_max,
                                            uint64_t seed, int width,
                                            int height, double fov_x_radians) {
  if (n < 1) throw InvalidBounds("sample_poses_sphere_cap: n must be >= 1");
  if (!(radius > 0.0))
    throw InvalidBounds("sample_poses_sphere_cap: radius must be positive");

  constexpr double kDegToRad = M_PI / 180.0;
  Rng rng(seed);
  std::vector<Camera> cameras;
  cameras.reserve(n);
  for (int i = 0; i < n; ++i) {
    // One azimuth sample per stratum keeps the ring evenly covered for any n.
    const double azimuth =
        (i + rng.uniform()) * (2.0 * M_PI / n);
    const double elevation =
        rng.uniform_in(elevation_deg_min, elevation_deg_max) * kDegToRad;
    const Vec3 eye(radius * std::cos(elevation) * std::cos(azimuth),
                   radius * std::cos(elevation) * std::sin(azimuth),
                   radius * std::sin(elevation));
    // Near the poles +z is almost parallel to the view; fall back to +y.
    const Vec3 up = std::abs(std::sin(elevation)) > 0.999
                        ? Vec3(0, 1, 0)
                        : Vec3(0, 0, 1);
    cameras.push_back(Camera::from_fov_x(width, height, fov_x_radians,
                                         look_at(eye, Vec3::Zero(), up)));
  }
  return cameras;
}

}  // namespace fewview
