#include "rcdet/geometry.hpp"

#include <cmath>

#include "rcdet/ops.hpp"

namespace rcdet {

void CameraCalib::validate() const {
    if (std::abs(intrinsics.determinant()) < 1e-12) {
        throw ConfigError("camera calibration: singular intrinsics");
    }
    const Eigen::Matrix3d r = extrinsics.block<3, 3>(0, 0);
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw ConfigError("camera calibration: extrinsics rotation is not orthonormal");
    }
    if (image_h <= 0 || image_w <= 0 || feature_stride <= 0 || image_h % feature_stride != 0 ||
        image_w % feature_stride != 0) {
        throw ConfigError("camera calibration: image size must be divisible by the feature stride");
    }
}

void WorldRange::validate() const {
    if (!(x_max > x_min && y_max > y_min && z_max > z_min)) {
        throw ConfigError("world range: max must exceed min on every axis");
    }
}

double WorldRange::extent(int axis) const {
    switch (axis) {
        case 0: return x_max - x_min;
        case 1: return y_max - y_min;
        case 2: return z_max - z_min;
        default: throw ContractError("world range: axis out of range");
    }
}

double WorldRange::min(int axis) const {
    switch (axis) {
        case 0: return x_min;
        case 1: return y_min;
        case 2: return z_min;
        default: throw ContractError("world range: axis out of range");
    }
}

DepthBins DepthBins::linspace(int count, double near, double far) {
    if (count < 1) throw ConfigError("depth bins: need at least one bin");
    if (near <= 0.0 || far <= near) throw ConfigError("depth bins: need 0 < near < far");
    DepthBins bins;
    bins.values.resize(static_cast<std::size_t>(count));
    if (count == 1) {
        bins.values[0] = near;
        return bins;
    }
    const double step = (far - near) / static_cast<double>(count - 1);
    for (int i = 0; i < count; ++i) bins.values[static_cast<std::size_t>(i)] = near + step * i;
    return bins;
}

void DepthBins::validate() const {
    if (values.empty()) throw ConfigError("depth bins: empty");
    double prev = 0.0;
    for (double d : values) {
        if (d <= prev) throw ConfigError("depth bins: values must be positive and increasing");
        prev = d;
    }
}

std::vector<Eigen::Vector4d> frustum_points(double u_px, double v_px, const DepthBins& bins) {
    bins.validate();
    std::vector<Eigen::Vector4d> pts;
    pts.reserve(bins.values.size());
    for (double d : bins.values) {
        pts.emplace_back(u_px * d, v_px * d, d, 1.0);
    }
    return pts;
}

Eigen::Vector3d frustum_to_world(const CameraCalib& calib, const Eigen::Vector4d& frustum_pt) {
    const Eigen::Vector3d cam = calib.intrinsics.inverse() * frustum_pt.head<3>();
    Eigen::Vector4d hom;
    hom << cam, frustum_pt(3);
    return (calib.extrinsics * hom).head<3>();
}

FrustumProjection world_to_frustum(const CameraCalib& calib, const Eigen::Vector3d& world) {
    Eigen::Vector4d hom;
    hom << world, 1.0;
    const Eigen::Vector3d cam = (calib.extrinsics.inverse() * hom).head<3>();
    const Eigen::Vector3d pix = calib.intrinsics * cam;
    FrustumProjection out;
    out.frustum << pix, 1.0;
    const double depth = cam(2);
    if (depth > 0.0) {
        const double u = pix(0) / depth;
        const double v = pix(1) / depth;
        out.visible = u >= 0.0 && u < static_cast<double>(calib.image_w) && v >= 0.0 &&
                      v < static_cast<double>(calib.image_h);
    }
    return out;
}

Eigen::Vector3d denormalize_ref(const Eigen::Vector3d& r, const WorldRange& range) {
    return {r(0) * (range.x_max - range.x_min) + range.x_min,
            r(1) * (range.y_max - range.y_min) + range.y_min,
            r(2) * (range.z_max - range.z_min) + range.z_min};
}

Eigen::Vector3d normalize_ref(const Eigen::Vector3d& world, const WorldRange& range) {
    return {(world(0) - range.x_min) / (range.x_max - range.x_min),
            (world(1) - range.y_min) / (range.y_max - range.y_min),
            (world(2) - range.z_min) / (range.z_max - range.z_min)};
}

Tensor denormalize_refs(const Tensor& refs, const WorldRange& range) {
    if (refs.dim() != 2 || refs.size(1) != 3) throw DimError("denormalize_refs: expected [n x 3]");
    const Tensor scale =
        Tensor::from_data({3}, {range.x_max - range.x_min, range.y_max - range.y_min,
                                range.z_max - range.z_min});
    const Tensor offset = Tensor::from_data({3}, {range.x_min, range.y_min, range.z_min});
    return add(mul(refs, scale), offset);
}

}  // namespace rcdet
