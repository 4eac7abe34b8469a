#pragma once

#include <vector>

#include "rcdet/boxes.hpp"
#include "rcdet/errors.hpp"

namespace rcdet {

struct Track {
    int id = -1;
    double x = 0, y = 0;
    double vx = 0, vy = 0;
    int cls = 0;
    int age_since_update = 0;
    double score = 0;
};

struct TrackerConfig {
    double match_radius = 2.0;  // meters
    int max_age = 3;            // frames a track survives unmatched
    double min_score = 0.3;
};

struct TrackedBox {
    int id = -1;
    double x = 0, y = 0;
    int cls = 0;
    double score = 0;
};

struct TrackStepResult {
    std::vector<Track> tracks;
    std::vector<TrackedBox> labeled;  // id-labeled detections of this frame
};

// One greedy, velocity-predicted association step. Detections below min_score
// are dropped; remaining pairs of matching class are accepted in ascending
// center-distance order within match_radius (ties break on detection index,
// then track id). Matched tracks adopt the detection's center and regressed
// velocity; unmatched detections spawn fresh ids; unmatched tracks age out
// past max_age. next_id is advanced for every spawned track.
TrackStepResult track_step(const std::vector<Track>& tracks, const std::vector<Detection>& dets,
                           double dt, const TrackerConfig& cfg, int& next_id);

struct TrackingMetrics {
    double accuracy = 0;  // single-threshold MOTA-style score
    long fp = 0;
    long fn = 0;
    long ids = 0;
    long total_gt = 0;
};

// Frame-aligned comparison at a fixed center-distance threshold; identity
// switches are counted whenever a ground-truth track changes its matched id.
TrackingMetrics tracking_metrics(const std::vector<GroundTruthSet>& gt_frames,
                                 const std::vector<std::vector<TrackedBox>>& pred_frames,
                                 double dist_threshold = 2.0);

}  // namespace rcdet
