#include "rcdet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "rcdet/rng.hpp"

namespace rcdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ClassPrior {
    double w, l, h;
    double jitter;
    double speed_scale;
};

const ClassPrior kClassPriors[3] = {
    {1.9, 4.5, 1.6, 0.15, 1.0},   // car-like
    {0.6, 0.6, 1.7, 0.05, 0.35},  // pedestrian-like
    {0.5, 2.2, 1.0, 0.05, 0.0},   // barrier-like
};

GtBox sample_object(Rng& rng, const SceneConfig& cfg, int track_id) {
    GtBox box;
    box.cls = static_cast<int>(rng.randint(static_cast<std::uint64_t>(cfg.num_classes)));
    const ClassPrior& prior = kClassPriors[box.cls % 3];
    box.w = std::max(0.2, prior.w + prior.jitter * rng.normal());
    box.l = std::max(0.2, prior.l + prior.jitter * rng.normal());
    box.h = std::max(0.2, prior.h + prior.jitter * rng.normal());
    box.x = rng.uniform(cfg.spawn_x_min, cfg.spawn_x_max);
    box.y = rng.uniform(cfg.spawn_y_min, cfg.spawn_y_max);
    box.z = box.h / 2.0;
    box.yaw = rng.uniform(-kPi, kPi);
    box.vx = prior.speed_scale * rng.uniform(-cfg.max_speed, cfg.max_speed);
    box.vy = prior.speed_scale * rng.uniform(-cfg.max_speed, cfg.max_speed);
    box.track_id = track_id;
    return box;
}

// Entry point of the sensor->center ray into the box footprint.
Eigen::Vector2d facing_surface_point(const GtBox& box) {
    const Eigen::Vector2d center(box.x, box.y);
    const double dist = center.norm();
    if (dist < 1e-9) return center;
    const Eigen::Vector2d dir = center / dist;
    const double c = std::cos(-box.yaw), s = std::sin(-box.yaw);
    const Eigen::Matrix2d rot_inv = (Eigen::Matrix2d() << c, -s, s, c).finished();
    const Eigen::Vector2d a = rot_inv * dir;         // ray direction in box frame
    const Eigen::Vector2d b = rot_inv * (-center);   // ray origin in box frame
    const double half[2] = {box.l / 2.0, box.w / 2.0};
    double t_enter = 0.0, t_exit = dist;
    for (int axis = 0; axis < 2; ++axis) {
        if (std::abs(a(axis)) < 1e-12) {
            if (std::abs(b(axis)) > half[axis]) return center;  // degenerate, fall back
            continue;
        }
        double t0 = (-half[axis] - b(axis)) / a(axis);
        double t1 = (half[axis] - b(axis)) / a(axis);
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    if (t_enter > t_exit) return center;
    return t_enter * dir;
}

void render_background(std::vector<double>& img, int h, int w, Rng& rng) {
    const double p1 = rng.uniform(0.0, 2.0 * kPi);
    const double p2 = rng.uniform(0.0, 2.0 * kPi);
    const double p3 = rng.uniform(0.0, 2.0 * kPi);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = 0.35 + 0.08 * std::sin(0.37 * x + p1) * std::cos(0.23 * y + p2) +
                             0.03 * std::sin(1.7 * (x + y) + p3);
            for (int c = 0; c < 3; ++c) {
                img[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                    std::clamp(v + 0.02 * c, 0.0, 1.0);
            }
        }
    }
}

const double kClassColors[3][3] = {
    {0.85, 0.15, 0.15},
    {0.15, 0.85, 0.15},
    {0.15, 0.15, 0.85},
};

void render_objects(std::vector<double>& img, const CameraCalib& calib,
                    const std::vector<GtBox>& boxes) {
    const int h = calib.image_h, w = calib.image_w;
    // painter order: far objects first
    std::vector<std::pair<double, std::size_t>> order;
    const Eigen::Matrix4d world_to_cam = calib.extrinsics.inverse();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        Eigen::Vector4d hom(boxes[i].x, boxes[i].y, boxes[i].z, 1.0);
        const double depth = (world_to_cam * hom)(2);
        order.emplace_back(-depth, i);
    }
    std::sort(order.begin(), order.end());

    for (const auto& [neg_depth, idx] : order) {
        const GtBox& box = boxes[idx];
        const double cy = std::cos(box.yaw), sy = std::sin(box.yaw);
        double umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
        bool any = false;
        for (int cx = -1; cx <= 1; cx += 2) {
            for (int cyy = -1; cyy <= 1; cyy += 2) {
                for (int cz = -1; cz <= 1; cz += 2) {
                    const double lx = cx * box.l / 2.0, ly = cyy * box.w / 2.0;
                    const Eigen::Vector3d corner(box.x + cy * lx - sy * ly,
                                                 box.y + sy * lx + cy * ly,
                                                 box.z + cz * box.h / 2.0);
                    Eigen::Vector4d hom;
                    hom << corner, 1.0;
                    const Eigen::Vector3d cam = (world_to_cam * hom).head<3>();
                    if (cam(2) < 0.1) continue;
                    const Eigen::Vector3d pix = calib.intrinsics * cam;
                    const double u = pix(0) / cam(2), v = pix(1) / cam(2);
                    umin = std::min(umin, u);
                    umax = std::max(umax, u);
                    vmin = std::min(vmin, v);
                    vmax = std::max(vmax, v);
                    any = true;
                }
            }
        }
        if (!any) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(umin)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(umax)));
        const int y0 = std::max(0, static_cast<int>(std::floor(vmin)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(vmax)));
        if (x0 > x1 || y0 > y1) continue;
        const double depth = -neg_depth;
        const double shade = 1.0 / (1.0 + 0.02 * std::max(0.0, depth));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                for (int c = 0; c < 3; ++c) {
                    img[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                        std::clamp(kClassColors[box.cls % 3][c] * shade, 0.0, 1.0);
                }
            }
        }
    }
}

Scene assemble_scene(int frame_index, const std::vector<GtBox>& boxes, const SceneConfig& cfg,
                     Rng& sensor_rng) {
    Scene scene;
    scene.frame_index = frame_index;
    scene.gt.boxes = boxes;
    scene.calibs = default_camera_rig(cfg);

    // radar returns: per object per sweep, then clutter
    std::vector<std::array<double, 6>> returns;
    for (const GtBox& box : boxes) {
        for (int s = 0; s < cfg.radar.num_sweeps; ++s) {
            if (!sensor_rng.bernoulli(cfg.radar.hit_probability)) continue;
            const Eigen::Vector2d surf = facing_surface_point(box);
            const double dist = surf.norm();
            Eigen::Vector2d dir(1.0, 0.0);
            if (dist > 1e-9) dir = surf / dist;
            const Eigen::Vector2d tangent(-dir(1), dir(0));
            const Eigen::Vector2d noisy = surf + cfg.radar.depth_sigma * sensor_rng.normal() * dir +
                                          cfg.radar.azimuth_sigma * sensor_rng.normal() * tangent;
            const double z = cfg.radar.z_sigma * sensor_rng.normal();
            returns.push_back({noisy(0), noisy(1), z, box.vx, box.vy,
                               -static_cast<double>(s) * cfg.radar.sweep_period});
        }
    }
    const int clutter = sensor_rng.poisson(cfg.radar.clutter_rate);
    for (int i = 0; i < clutter; ++i) {
        const double x = sensor_rng.uniform(cfg.range.x_min, cfg.range.x_max);
        const double y = sensor_rng.uniform(cfg.range.y_min, cfg.range.y_max);
        const double z = cfg.radar.z_sigma * sensor_rng.normal();
        const double t =
            -static_cast<double>(sensor_rng.randint(static_cast<std::uint64_t>(
                std::max(1, cfg.radar.num_sweeps)))) *
            cfg.radar.sweep_period;
        returns.push_back({x, y, z, 0.0, 0.0, t});
    }
    if (static_cast<long>(returns.size()) > cfg.max_radar_points) {
        returns.resize(static_cast<std::size_t>(cfg.max_radar_points));
    }
    scene.radar.pts.resize(static_cast<long>(returns.size()), RadarPoints::kColumns);
    for (std::size_t i = 0; i < returns.size(); ++i) {
        for (int c = 0; c < RadarPoints::kColumns; ++c) {
            scene.radar.pts(static_cast<long>(i), c) = returns[i][static_cast<std::size_t>(c)];
        }
    }

    // camera views
    const int h = cfg.image_h, w = cfg.image_w;
    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(cfg.num_cameras * h * w * 3));
    for (int cam = 0; cam < cfg.num_cameras; ++cam) {
        std::vector<double> img(static_cast<std::size_t>(h * w * 3), 0.0);
        render_background(img, h, w, sensor_rng);
        render_objects(img, scene.calibs[static_cast<std::size_t>(cam)], boxes);
        all.insert(all.end(), img.begin(), img.end());
    }
    scene.images = Tensor::from_data({cfg.num_cameras, h, w, 3}, std::move(all));
    return scene;
}

}  // namespace

std::vector<CameraCalib> default_camera_rig(const SceneConfig& cfg) {
    std::vector<CameraCalib> rig;
    const double focal = 75.0;
    for (int cam = 0; cam < cfg.num_cameras; ++cam) {
        CameraCalib calib;
        calib.image_h = cfg.image_h;
        calib.image_w = cfg.image_w;
        calib.feature_stride = cfg.feature_stride;
        calib.intrinsics << focal, 0.0, cfg.image_w / 2.0,
                            0.0, focal, cfg.image_h / 2.0,
                            0.0, 0.0, 1.0;
        // camera frame: +z forward, +x right, +y down; rig looks along +y world
        const double yaw = (cfg.num_cameras == 1) ? 0.0
                                                  : (cam == 0 ? 22.0 : -22.0) * kPi / 180.0;
        const Eigen::Matrix3d face_forward =
            (Eigen::Matrix3d() << 1, 0, 0, 0, 0, 1, 0, -1, 0).finished();  // cam z -> world +y
        const Eigen::Matrix3d spin = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).matrix();
        calib.extrinsics.setIdentity();
        calib.extrinsics.block<3, 3>(0, 0) = spin * face_forward;
        calib.extrinsics(0, 3) = cam == 0 ? -1.0 : 1.0;
        calib.extrinsics(1, 3) = 0.0;
        calib.extrinsics(2, 3) = 1.5;
        calib.validate();
        rig.push_back(calib);
    }
    return rig;
}

Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
    if (cfg.num_objects < 0) throw ContractError("gen_scene: object count must be >= 0");
    cfg.range.validate();
    Rng rng(seed);
    Rng object_rng = rng.fork(1);
    Rng sensor_rng = rng.fork(2);
    std::vector<GtBox> boxes;
    for (int i = 0; i < cfg.num_objects; ++i) boxes.push_back(sample_object(object_rng, cfg, i));
    return assemble_scene(0, boxes, cfg, sensor_rng);
}

std::vector<Scene> sequence(std::uint64_t seed, int frames, const SceneConfig& cfg) {
    if (frames < 1) throw ContractError("sequence: need at least one frame");
    if (cfg.death_prob < 0.0 || cfg.death_prob > 1.0 || cfg.birth_rate < 0.0) {
        throw ContractError("sequence: bad birth/death configuration");
    }
    cfg.range.validate();
    Rng rng(seed);
    Rng object_rng = rng.fork(1);

    struct Lived {
        GtBox at_birth;
        int birth_frame;
    };
    std::vector<Lived> alive;
    int next_track_id = 0;
    for (int i = 0; i < cfg.num_objects; ++i) {
        alive.push_back({sample_object(object_rng, cfg, next_track_id++), 0});
    }

    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        if (f > 0) {
            std::vector<Lived> survivors;
            for (const Lived& obj : alive) {
                if (!object_rng.bernoulli(cfg.death_prob)) survivors.push_back(obj);
            }
            alive = std::move(survivors);
            if (cfg.birth_rate > 0.0) {
                const int births = object_rng.poisson(cfg.birth_rate);
                for (int b = 0; b < births; ++b) {
                    alive.push_back({sample_object(object_rng, cfg, next_track_id++), f});
                }
            }
        }
        std::vector<GtBox> moved;
        moved.reserve(alive.size());
        for (const Lived& obj : alive) {
            GtBox b = obj.at_birth;
            const double age = cfg.dt * static_cast<double>(f - obj.birth_frame);
            b.x += b.vx * age;
            b.y += b.vy * age;
            moved.push_back(b);
        }
        Rng sensor_rng = rng.fork(1000 + static_cast<std::uint64_t>(f));
        scenes.push_back(assemble_scene(f, moved, cfg, sensor_rng));
    }
    return scenes;
}

Scene dropout_harness(const Scene& scene, const DropSpec& drop) {
    Scene out = scene;
    if (!drop.cameras.empty()) {
        const long n_cam = scene.images.size(0);
        std::vector<double> data = scene.images.data();
        const long block = scene.images.numel() / n_cam;
        for (int cam : drop.cameras) {
            if (cam < 0 || cam >= n_cam) throw ContractError("dropout: camera index out of range");
            std::fill(data.begin() + cam * block, data.begin() + (cam + 1) * block, 0.0);
        }
        out.images = Tensor::from_data(scene.images.shape(), std::move(data));
    }
    if (drop.radar) {
        out.radar.pts.setZero();
    }
    return out;
}

DetectionMetrics eval_detection(const std::vector<std::vector<Detection>>& preds,
                                const std::vector<GroundTruthSet>& gts) {
    if (preds.size() != gts.size()) throw ContractError("eval_detection: frame counts differ");
    DetectionMetrics metrics;

    std::vector<int> classes;
    for (const auto& gt : gts) {
        for (const auto& box : gt.boxes) {
            if (std::find(classes.begin(), classes.end(), box.cls) == classes.end()) {
                classes.push_back(box.cls);
            }
        }
    }
    std::sort(classes.begin(), classes.end());

    struct Cand {
        double score;
        std::size_t frame;
        std::size_t idx;
    };

    double ap_sum = 0.0;
    long ap_count = 0;
    double mate_sum = 0.0, mave_sum = 0.0;
    long match_count = 0;

    for (int cls : classes) {
        std::vector<Cand> cands;
        long total_gt = 0;
        for (std::size_t f = 0; f < preds.size(); ++f) {
            for (std::size_t i = 0; i < preds[f].size(); ++i) {
                if (preds[f][i].cls == cls) cands.push_back({preds[f][i].score, f, i});
            }
            for (const auto& box : gts[f].boxes) {
                if (box.cls == cls) ++total_gt;
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.frame != b.frame) return a.frame < b.frame;
            return a.idx < b.idx;
        });

        for (double threshold : ap_thresholds()) {
            std::vector<std::vector<char>> gt_used(gts.size());
            for (std::size_t f = 0; f < gts.size(); ++f) {
                gt_used[f].assign(gts[f].boxes.size(), 0);
            }
            std::vector<char> is_tp;
            is_tp.reserve(cands.size());
            for (const Cand& cand : cands) {
                const Detection& det = preds[cand.frame][cand.idx];
                double best = threshold;
                long best_gt = -1;
                const auto& boxes = gts[cand.frame].boxes;
                for (std::size_t g = 0; g < boxes.size(); ++g) {
                    if (boxes[g].cls != cls || gt_used[cand.frame][g]) continue;
                    const double dx = det.x - boxes[g].x;
                    const double dy = det.y - boxes[g].y;
                    const double dist = std::sqrt(dx * dx + dy * dy);
                    if (dist <= best) {
                        best = dist;
                        best_gt = static_cast<long>(g);
                    }
                }
                if (best_gt >= 0) {
                    gt_used[cand.frame][static_cast<std::size_t>(best_gt)] = 1;
                    is_tp.push_back(1);
                    if (threshold == 2.0) {
                        const GtBox& box = gts[cand.frame].boxes[static_cast<std::size_t>(best_gt)];
                        const double dx = det.x - box.x, dy = det.y - box.y;
                        const double dvx = det.vx - box.vx, dvy = det.vy - box.vy;
                        mate_sum += std::sqrt(dx * dx + dy * dy);
                        mave_sum += std::sqrt(dvx * dvx + dvy * dvy);
                        ++match_count;
                    }
                } else {
                    is_tp.push_back(0);
                }
            }

            double ap = 0.0;
            if (total_gt > 0) {
                std::vector<double> precision, recall;
                long tp = 0;
                for (std::size_t i = 0; i < is_tp.size(); ++i) {
                    if (is_tp[i]) ++tp;
                    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
                    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
                }
                // 101-point interpolation: mean over the recall grid of the max
                // precision at recall >= r
                for (int ri = 0; ri <= 100; ++ri) {
                    const double r = static_cast<double>(ri) / 100.0;
                    double best_p = 0.0;
                    for (std::size_t i = 0; i < precision.size(); ++i) {
                        if (recall[i] >= r - 1e-12) best_p = std::max(best_p, precision[i]);
                    }
                    ap += best_p;
                }
                ap /= 101.0;
            }
            metrics.ap[cls][threshold] = ap;
            ap_sum += ap;
            ++ap_count;
        }
    }
    metrics.map = ap_count > 0 ? ap_sum / static_cast<double>(ap_count) : 0.0;
    metrics.mate = match_count > 0 ? mate_sum / static_cast<double>(match_count) : 0.0;
    metrics.mave = match_count > 0 ? mave_sum / static_cast<double>(match_count) : 0.0;
    return metrics;
}

// ---------------------------------------------------------------------------
// JSONL persistence

namespace {

const char kB64Table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const double* values, std::size_t count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(values);
    const std::size_t n = count * sizeof(double);
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        unsigned int chunk = static_cast<unsigned int>(bytes[i]) << 16;
        if (i + 1 < n) chunk |= static_cast<unsigned int>(bytes[i + 1]) << 8;
        if (i + 2 < n) chunk |= static_cast<unsigned int>(bytes[i + 2]);
        out.push_back(kB64Table[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Table[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < n ? kB64Table[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < n ? kB64Table[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<double> base64_decode(const std::string& text) {
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    int table[256];
    std::fill(std::begin(table), std::end(table), -1);
    for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64Table[i])] = i;
    unsigned int chunk = 0;
    int bits = 0;
    for (char ch : text) {
        if (ch == '=') break;
        const int v = table[static_cast<unsigned char>(ch)];
        if (v < 0) throw IoError("base64: invalid character");
        chunk = (chunk << 6) | static_cast<unsigned int>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((chunk >> bits) & 0xff));
        }
    }
    if (bytes.size() % sizeof(double) != 0) throw IoError("base64: payload is not float64-aligned");
    std::vector<double> values(bytes.size() / sizeof(double));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

constexpr int kSceneFormatVersion = 1;

}  // namespace

void save_scenes_jsonl(const std::string& path, const std::vector<Scene>& scenes) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const Scene& scene : scenes) {
        nlohmann::json j;
        j["format_version"] = kSceneFormatVersion;
        j["frame_index"] = scene.frame_index;
        nlohmann::json objs = nlohmann::json::array();
        for (const GtBox& b : scene.gt.boxes) {
            objs.push_back({{"x", b.x},
                            {"y", b.y},
                            {"z", b.z},
                            {"w", b.w},
                            {"l", b.l},
                            {"h", b.h},
                            {"yaw", b.yaw},
                            {"vx", b.vx},
                            {"vy", b.vy},
                            {"cls", b.cls},
                            {"track_id", b.track_id}});
        }
        j["objects"] = objs;
        nlohmann::json calibs = nlohmann::json::array();
        for (const CameraCalib& c : scene.calibs) {
            std::vector<double> intr(c.intrinsics.data(), c.intrinsics.data() + 9);
            std::vector<double> extr(c.extrinsics.data(), c.extrinsics.data() + 16);
            calibs.push_back({{"intrinsics", intr},
                              {"extrinsics", extr},
                              {"image_h", c.image_h},
                              {"image_w", c.image_w},
                              {"feature_stride", c.feature_stride}});
        }
        j["calibrations"] = calibs;
        std::vector<double> radar_rowmajor;
        radar_rowmajor.reserve(static_cast<std::size_t>(scene.radar.pts.size()));
        for (long r = 0; r < scene.radar.count(); ++r) {
            for (int c = 0; c < RadarPoints::kColumns; ++c) {
                radar_rowmajor.push_back(scene.radar.pts(r, c));
            }
        }
        j["radar"] = {{"rows", scene.radar.count()},
                      {"data", base64_encode(radar_rowmajor.data(), radar_rowmajor.size())}};
        j["images"] = {{"shape", scene.images.shape()},
                       {"data", base64_encode(scene.images.data().data(),
                                              scene.images.data().size())}};
        out << j.dump() << "\n";
    }
}

std::vector<Scene> load_scenes_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<Scene> scenes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoError("scene file: invalid JSON line");
        if (!j.contains("format_version") || j["format_version"].get<int>() != kSceneFormatVersion) {
            throw IoError("scene file: missing or unsupported format_version");
        }
        Scene scene;
        scene.frame_index = j["frame_index"].get<int>();
        for (const auto& o : j["objects"]) {
            GtBox b;
            b.x = o["x"].get<double>();
            b.y = o["y"].get<double>();
            b.z = o["z"].get<double>();
            b.w = o["w"].get<double>();
            b.l = o["l"].get<double>();
            b.h = o["h"].get<double>();
            b.yaw = o["yaw"].get<double>();
            b.vx = o["vx"].get<double>();
            b.vy = o["vy"].get<double>();
            b.cls = o["cls"].get<int>();
            b.track_id = o["track_id"].get<int>();
            scene.gt.boxes.push_back(b);
        }
        for (const auto& c : j["calibrations"]) {
            CameraCalib calib;
            const auto intr = c["intrinsics"].get<std::vector<double>>();
            const auto extr = c["extrinsics"].get<std::vector<double>>();
            if (intr.size() != 9 || extr.size() != 16) throw IoError("scene file: bad calibration");
            std::memcpy(calib.intrinsics.data(), intr.data(), 9 * sizeof(double));
            std::memcpy(calib.extrinsics.data(), extr.data(), 16 * sizeof(double));
            calib.image_h = c["image_h"].get<int>();
            calib.image_w = c["image_w"].get<int>();
            calib.feature_stride = c["feature_stride"].get<int>();
            calib.validate();
            scene.calibs.push_back(calib);
        }
        const long rows = j["radar"]["rows"].get<long>();
        const auto rvals = base64_decode(j["radar"]["data"].get<std::string>());
        if (static_cast<long>(rvals.size()) != rows * RadarPoints::kColumns) {
            throw IoError("scene file: radar payload size mismatch");
        }
        scene.radar.pts.resize(rows, RadarPoints::kColumns);
        for (long r = 0; r < rows; ++r) {
            for (int c = 0; c < RadarPoints::kColumns; ++c) {
                scene.radar.pts(r, c) = rvals[static_cast<std::size_t>(r * RadarPoints::kColumns + c)];
            }
        }
        const auto shape = j["images"]["shape"].get<Shape>();
        auto ivals = base64_decode(j["images"]["data"].get<std::string>());
        scene.images = Tensor::from_data(shape, std::move(ivals));
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

}  // namespace rcdet
