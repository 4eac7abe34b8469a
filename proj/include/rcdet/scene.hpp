#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rcdet/boxes.hpp"
#include "rcdet/geometry.hpp"
#include "rcdet/radar_bev.hpp"

namespace rcdet {

struct RadarNoiseModel {
    double hit_probability = 0.5;
    double azimuth_sigma = 0.3;  // m, tangential to the line of sight
    double depth_sigma = 0.4;    // m, along the line of sight
    double z_sigma = 0.5;        // m, height collapses toward the ground plane
    double clutter_rate = 15.0;  // expected uniform clutter points per frame
    int num_sweeps = 6;
    double sweep_period = 0.05;  // s between accumulated sweeps
};

struct SceneConfig {
    int num_objects = 10;
    int num_classes = 3;  // car-like, pedestrian-like, barrier-like
    int num_cameras = 2;
    int image_h = 64;
    int image_w = 176;
    int feature_stride = 16;
    double dt = 0.25;        // s between sequence frames
    double max_speed = 4.0;  // m/s per axis for car-like objects
    double birth_rate = 0.0;  // expected objects entering per sequence frame
    double death_prob = 0.0;  // per-object chance of leaving, each frame
    long max_radar_points = 2048;
    WorldRange range;
    RadarNoiseModel radar;
    // objects spawn in front of the camera rig
    double spawn_x_min = -24.0, spawn_x_max = 24.0;
    double spawn_y_min = 8.0, spawn_y_max = 44.0;
};

struct Scene {
    int frame_index = 0;
    GroundTruthSet gt;
    std::vector<CameraCalib> calibs;
    RadarPoints radar;
    Tensor images;  // [num_cameras x H x W x 3] in [0,1]
};

// Two forward-facing cameras at +-22 degrees yaw around +y.
std::vector<CameraCalib> default_camera_rig(const SceneConfig& cfg);

// Deterministic in (seed, cfg): boxes with classes, sizes, yaws and constant
// velocities; radar returns on object facing surfaces with configured noise;
// rasterized class-colored views over a textured background.
Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg);

// Constant-velocity motion of one sampled object set over several frames.
std::vector<Scene> sequence(std::uint64_t seed, int frames, const SceneConfig& cfg);

struct DropSpec {
    std::vector<int> cameras;
    bool radar = false;
};

// Replaces dropped inputs by zero tensors of identical shape.
Scene dropout_harness(const Scene& scene, const DropSpec& drop);

struct DetectionMetrics {
    double map = 0;
    double mate = 0;  // mean matched center error at the 2 m threshold
    double mave = 0;  // mean matched velocity error at the 2 m threshold
    std::map<int, std::map<double, double>> ap;  // class -> threshold -> AP
};

inline const std::vector<double>& ap_thresholds() {
    static const std::vector<double> t = {0.5, 1.0, 2.0, 4.0};
    return t;
}

// Score-ordered greedy matching by BEV center distance per class and
// threshold; AP over a 101-point interpolated precision-recall curve.
DetectionMetrics eval_detection(const std::vector<std::vector<Detection>>& preds,
                                const std::vector<GroundTruthSet>& gts);

// JSONL persistence, one scene per line; binary payloads are base64-coded
// little-endian float64.
void save_scenes_jsonl(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_scenes_jsonl(const std::string& path);

}  // namespace rcdet
