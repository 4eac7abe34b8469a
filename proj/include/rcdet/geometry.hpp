#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rcdet/errors.hpp"
#include "rcdet/tensor.hpp"

namespace rcdet {

// Pinhole camera: intrinsics in pixels, extrinsics mapping camera frame to
// world frame (camera convention: +z forward, +x right, +y down).
struct CameraCalib {
    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
    Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();
    int image_h = 0;
    int image_w = 0;
    int feature_stride = 16;

    void validate() const;
    int feature_h() const { return image_h / feature_stride; }
    int feature_w() const { return image_w / feature_stride; }
};

struct WorldRange {
    double x_min = -51.2, x_max = 51.2;
    double y_min = -51.2, y_max = 51.2;
    double z_min = -5.0, z_max = 3.0;

    void validate() const;
    double extent(int axis) const;
    double min(int axis) const;
    bool contains_xy(double x, double y) const {
        return x >= x_min && x < x_max && y >= y_min && y < y_max;
    }
};

struct DepthBins {
    std::vector<double> values;  // strictly increasing, positive, meters

    static DepthBins linspace(int count, double near, double far);
    void validate() const;
    long count() const { return static_cast<long>(values.size()); }
};

// Pixel-space center of a feature cell.
inline double feature_pixel(long index, int stride) {
    return (static_cast<double>(index) + 0.5) * static_cast<double>(stride);
}

// Frustum sample points (u*d_i, v*d_i, d_i, 1) for a pixel location.
std::vector<Eigen::Vector4d> frustum_points(double u_px, double v_px, const DepthBins& bins);

// Lifts a frustum point through the inverse intrinsics and the extrinsics.
Eigen::Vector3d frustum_to_world(const CameraCalib& calib, const Eigen::Vector4d& frustum_pt);

struct FrustumProjection {
    Eigen::Vector4d frustum;  // (u*d, v*d, d, 1)
    bool visible = false;     // depth > 0 and pixel inside [0,W) x [0,H)
};

// Exact inverse of frustum_to_world; invisibility is a flag, never an error.
FrustumProjection world_to_frustum(const CameraCalib& calib, const Eigen::Vector3d& world);

Eigen::Vector3d denormalize_ref(const Eigen::Vector3d& r, const WorldRange& range);
Eigen::Vector3d normalize_ref(const Eigen::Vector3d& world, const WorldRange& range);

// Differentiable column-wise affine map of normalized refs [n x 3] to meters.
Tensor denormalize_refs(const Tensor& refs, const WorldRange& range);

}  // namespace rcdet
