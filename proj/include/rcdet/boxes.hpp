#pragma once

#include <vector>

namespace rcdet {

// Ground-truth 3D box: center, extents (w across, l along heading, h up),
// yaw in (-pi, pi], planar velocity. track_id identifies the object across
// frames of a sequence.
struct GtBox {
    double x = 0, y = 0, z = 0;
    double w = 1, l = 1, h = 1;
    double yaw = 0;
    double vx = 0, vy = 0;
    int cls = 0;
    int track_id = -1;
};

struct GroundTruthSet {
    std::vector<GtBox> boxes;

    std::size_t size() const { return boxes.size(); }
};

struct Detection {
    double x = 0, y = 0, z = 0;
    double w = 1, l = 1, h = 1;
    double yaw = 0;
    double vx = 0, vy = 0;
    double score = 0;
    int cls = 0;
};

}  // namespace rcdet
