#include "tempbev/geometry.hpp"

#include <cmath>

namespace tempbev::geom {

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : r_(rotation), t_(translation) {
    const double ortho_err = (r_.transpose() * r_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho_err > 1e-9)
        throw std::invalid_argument("Pose: rotation is not orthonormal (err " +
                                    std::to_string(ortho_err) + ")");
    if (std::abs(r_.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("Pose: rotation determinant is not 1");
}

Pose Pose::from_yaw(double yaw, const Vec3& translation) {
    Mat3 r;
    r = Eigen::AngleAxisd(yaw, Vec3::UnitZ());
    return Pose(r, translation);
}

Pose Pose::from_rpy(double roll, double pitch, double yaw, const Vec3& translation) {
    Mat3 r;
    r = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
        Eigen::AngleAxisd(roll, Vec3::UnitX());
    return Pose(r, translation);
}

double Pose::yaw() const { return std::atan2(r_(1, 0), r_(0, 0)); }

Pose compose(const Pose& a, const Pose& b) {
    return Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

Pose relative_pose(const Pose& from, const Pose& to) { return compose(to.inverse(), from); }

bool approx_equal(const Pose& a, const Pose& b, double tol) {
    return (a.rotation() - b.rotation()).cwiseAbs().maxCoeff() <= tol &&
           (a.translation() - b.translation()).cwiseAbs().maxCoeff() <= tol;
}

void CameraModel::validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("CameraModel: focal lengths must be positive");
    if (!(cx > 0 && cx < width && cy > 0 && cy < height))
        throw std::invalid_argument("CameraModel: principal point outside image");
}

Vec3 pixel_to_ego(const CameraModel& cam, double u, double v, double depth) {
    if (depth <= 0) throw std::domain_error("pixel_to_ego: depth must be positive");
    // camera frame: x right, y down, z forward
    const Vec3 p_cam((u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth);
    return cam.extrinsic.apply(p_cam);
}

std::optional<Projection> project_to_image(const CameraModel& cam, const Vec3& point_ego) {
    const Vec3 p_cam = cam.extrinsic.inverse().apply(point_ego);
    if (p_cam.z() <= 0) return std::nullopt;
    Projection pr;
    pr.u = cam.fx * p_cam.x() / p_cam.z() + cam.cx;
    pr.v = cam.fy * p_cam.y() / p_cam.z() + cam.cy;
    pr.depth = p_cam.z();
    return pr;
}

void GridSpec::validate() const {
    if (h_bev <= 0 || w_bev <= 0) throw std::invalid_argument("GridSpec: cell counts must be positive");
    if (resolution <= 0) throw std::invalid_argument("GridSpec: resolution must be positive");
}

std::optional<std::pair<int, int>> GridSpec::ego_to_cell(double x, double y) const {
    const int row = static_cast<int>(std::floor((extent_x() / 2 + x) / resolution));
    const int col = static_cast<int>(std::floor((extent_y() / 2 + y) / resolution));
    if (row < 0 || row >= h_bev || col < 0 || col >= w_bev) return std::nullopt;
    return std::make_pair(row, col);
}

std::pair<double, double> GridSpec::cell_center(int row, int col) const {
    return {-extent_x() / 2 + (row + 0.5) * resolution,
            -extent_y() / 2 + (col + 0.5) * resolution};
}

}  // namespace tempbev::geom
