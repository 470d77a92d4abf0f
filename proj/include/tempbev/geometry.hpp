#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

namespace tempbev::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform. Ego frame convention: x forward, y left, z up.
class Pose {
public:
    Pose() : r_(Mat3::Identity()), t_(Vec3::Zero()) {}
    Pose(const Mat3& rotation, const Vec3& translation);

    static Pose identity() { return Pose(); }
    static Pose from_yaw(double yaw, const Vec3& translation = Vec3::Zero());
    static Pose from_rpy(double roll, double pitch, double yaw,
                         const Vec3& translation = Vec3::Zero());

    const Mat3& rotation() const { return r_; }
    const Vec3& translation() const { return t_; }
    double yaw() const;

    Vec3 apply(const Vec3& p) const { return r_ * p + t_; }
    Pose inverse() const { return Pose(r_.transpose(), -(r_.transpose() * t_)); }

private:
    Mat3 r_;
    Vec3 t_;
};

// result applies b then a
Pose compose(const Pose& a, const Pose& b);

// transform taking points in `from`'s frame to `to`'s frame:
// compose(to, result) == from
Pose relative_pose(const Pose& from, const Pose& to);

bool approx_equal(const Pose& a, const Pose& b, double tol = 1e-9);

struct CameraModel {
    // Camera frame: z forward (optical axis), x right in image, y down in image.
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Pose extrinsic;  // camera frame -> ego frame
    int height = 0, width = 0;

    void validate() const;
};

struct Projection {
    double u = 0, v = 0, depth = 0;
};

// Pinhole back-projection; pixel at given depth (camera-frame z), ego frame out.
Vec3 pixel_to_ego(const CameraModel& cam, double u, double v, double depth);

// nullopt when the point is behind the camera (non-positive camera-frame z)
std::optional<Projection> project_to_image(const CameraModel& cam, const Vec3& point_ego);

struct GridSpec {
    int h_bev = 0, w_bev = 0;
    double resolution = 0;  // meters per cell

    void validate() const;
    double extent_x() const { return h_bev * resolution; }
    double extent_y() const { return w_bev * resolution; }
    // Rows map to +x (forward = up), columns to +y (left). Half-open cells;
    // the far boundary is outside.
    std::optional<std::pair<int, int>> ego_to_cell(double x, double y) const;
    // ego-frame coordinates of a cell center
    std::pair<double, double> cell_center(int row, int col) const;
    bool operator==(const GridSpec& o) const {
        return h_bev == o.h_bev && w_bev == o.w_bev && resolution == o.resolution;
    }
};

}  // namespace tempbev::geom
