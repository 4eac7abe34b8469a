#include "rcdet/cli_commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "rcdet/cli_commands.hpp"
#include "rcdet/optim.hpp"
#include "rcdet/tracker.hpp"

namespace rcdet {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

nlohmann::json metrics_json(const DetectionMetrics& m) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, by_thr] : m.ap) {
        nlohmann::json thr = nlohmann::json::object();
        for (const auto& [t, ap] : by_thr) thr[std::to_string(t)] = ap;
        per_class[std::to_string(cls)] = thr;
    }
    return {{"mAP", m.map}, {"mATE", m.mate}, {"mAVE", m.mave}, {"per_class_ap", per_class}};
}

std::vector<Scene> require_scenes(const std::string& path) {
    std::vector<Scene> scenes = load_scenes_jsonl(path);
    if (scenes.empty()) throw ContractError("no scenes in " + path);
    return scenes;
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const std::string& out_path) {
    cfg.validate();
    std::vector<Scene> scenes;
    if (cfg.gen.mode == "sequence") {
        if (cfg.gen.count > 0) {
            scenes = sequence(cfg.seed, static_cast<int>(cfg.gen.count), cfg.scene);
        }
    } else {
        Rng seeder(cfg.seed);
        for (long i = 0; i < cfg.gen.count; ++i) {
            scenes.push_back(gen_scene(seeder.next_u64(), cfg.scene));
        }
    }
    save_scenes_jsonl(out_path, scenes);

    // occupancy statistics on the model's BEV grid
    const BevGridSpec grid = BevGridSpec::from_range(cfg.model.range, cfg.model.bev_h,
                                                     cfg.model.bev_w);
    double nonempty_sum = 0.0;
    double points_sum = 0.0;
    for (const Scene& scene : scenes) {
        std::vector<char> occupied(static_cast<std::size_t>(grid.h * grid.w), 0);
        for (long i = 0; i < scene.radar.count(); ++i) {
            long row = 0, col = 0;
            if (grid.cell_of(scene.radar.pts(i, 0), scene.radar.pts(i, 1), row, col)) {
                occupied[static_cast<std::size_t>(row * grid.w + col)] = 1;
            }
        }
        nonempty_sum += static_cast<double>(std::count(occupied.begin(), occupied.end(), 1)) /
                        static_cast<double>(grid.h * grid.w);
        points_sum += static_cast<double>(scene.radar.count());
    }
    nlohmann::json manifest;
    manifest["seed"] = cfg.seed;
    manifest["config_hash"] = config_hash(cfg);
    manifest["mode"] = cfg.gen.mode;
    manifest["scenes"] = scenes.size();
    manifest["bev_grid"] = {{"h", grid.h}, {"w", grid.w}};
    manifest["mean_nonempty_cell_fraction"] =
        scenes.empty() ? 0.0 : nonempty_sum / static_cast<double>(scenes.size());
    manifest["mean_radar_points"] =
        scenes.empty() ? 0.0 : points_sum / static_cast<double>(scenes.size());
    std::ofstream mf(out_path + ".manifest.json");
    if (!mf) throw IoError("cannot open for writing: " + out_path + ".manifest.json");
    mf << manifest.dump(2) << "\n";
}

TrainResult cmd_train(const RunConfig& cfg, const std::string& data_path,
                      const std::string& out_prefix) {
    cfg.validate();
    const std::vector<Scene> scenes = require_scenes(data_path);
    Model model = Model::create(cfg.model, cfg.seed);
    AdamW opt(cfg.train.lr, 0.9, 0.999, 1e-8, cfg.train.weight_decay);
    Rng rng(cfg.seed ^ 0x7261696e65724cULL);

    std::ofstream log(out_prefix + ".train.jsonl");
    if (!log) throw IoError("cannot open for writing: " + out_prefix + ".train.jsonl");

    std::vector<std::size_t> order(scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    TrainResult result;
    result.steps = cfg.train.steps;
    for (long step = 0; step < cfg.train.steps; ++step) {
        Tensor acc;
        double cls_sum = 0.0, reg_sum = 0.0;
        std::vector<double> ref_spread;  // query-collapse diagnostic, last sample
        std::vector<std::size_t> batch;
        for (long b = 0; b < cfg.train.batch_size; ++b) {
            if (cursor >= order.size()) {
                // reshuffle each epoch
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[rng.randint(i)]);
                }
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        auto abort_dump = [&](const std::string& why) {
            nlohmann::json dump;
            dump["step"] = step;
            dump["batch"] = batch;
            dump["cls"] = cls_sum;
            dump["reg"] = reg_sum;
            dump["reason"] = why;
            std::ofstream abort_f(out_prefix + ".abort.json");
            abort_f << dump.dump(2) << "\n";
            throw NumericError("training aborted at step " + std::to_string(step) + ": " + why);
        };
        // token PEs are shared across the batch; weights only move at step end
        Tensor loss;
        try {
            const Model::TokenPeCache pe_cache = model.make_token_pe(scenes[batch[0]].calibs);
            for (std::size_t idx : batch) {
                const Scene* scene = &scenes[idx];
                Scene dropped;
                if (cfg.train.drop_augment && scenes[idx].calibs.size() > 1 &&
                    rng.bernoulli(cfg.train.drop_prob)) {
                    DropSpec spec;
                    spec.cameras = {static_cast<int>(rng.randint(scenes[idx].calibs.size()))};
                    dropped = dropout_harness(scenes[idx], spec);
                    scene = &dropped;
                }
                Model::Forward fwd = model.forward(*scene, RunMode::kTrain, &pe_cache);
                LossBreakdown lb = total_loss(fwd.preds, scene->gt, cfg.model.range, cfg.loss);
                cls_sum += lb.cls;
                reg_sum += lb.reg;
                ref_spread.clear();
                for (const QueryState& s : fwd.states) {
                    ref_spread.push_back(min_pairwise_ref_distance(s));
                }
                acc = acc.defined() ? add(acc, lb.loss) : lb.loss;
            }
            loss = mul_scalar(acc, 1.0 / static_cast<double>(cfg.train.batch_size));
        } catch (const ContractError& e) {
            // inputs were validated up front, so a mid-step contract breach
            // means the numerics broke down (e.g. non-finite matching costs)
            abort_dump(e.what());
        }
        const double loss_v = loss.value();
        if (step == 0) result.first_loss = loss_v;
        result.final_loss = loss_v;
        if (!std::isfinite(loss_v)) abort_dump("non-finite loss");
        const double lr = one_cycle_lr(step, cfg.train.steps, cfg.train.lr, cfg.train.warmup_frac,
                                       cfg.train.lr_floor_frac);
        backward(loss);
        opt.step(model.params, lr);
        model.params.zero_grad();
        if (step % std::max<long>(1, cfg.train.log_every) == 0 || step + 1 == cfg.train.steps) {
            nlohmann::json line = {{"step", step},
                                   {"loss", loss_v},
                                   {"cls", cls_sum / static_cast<double>(batch.size())},
                                   {"reg", reg_sum / static_cast<double>(batch.size())},
                                   {"lr", lr},
                                   {"min_ref_dist", ref_spread}};
            log << line.dump() << "\n";
            log.flush();
        }
    }
    save_checkpoint(model, out_prefix);
    return result;
}

DetectionMetrics cmd_eval(const RunConfig& cfg, const std::string& checkpoint_prefix,
                          const std::string& data_path, const std::string& out_path,
                          const DropSpec* drop) {
    cfg.validate();
    const std::vector<Scene> scenes = require_scenes(data_path);
    Model model = Model::create(cfg.model, cfg.seed);
    load_checkpoint(model, checkpoint_prefix);

    std::vector<std::vector<Detection>> preds;
    std::vector<GroundTruthSet> gts;
    Model::TokenPeCache pe_cache;
    {
        NoGradGuard no_grad;
        pe_cache = model.make_token_pe(scenes.front().calibs);
    }
    for (const Scene& scene : scenes) {
        const Scene* s = &scene;
        Scene dropped;
        if (drop) {
            dropped = dropout_harness(scene, *drop);
            s = &dropped;
        }
        preds.push_back(model.infer(*s, &pe_cache));
        gts.push_back(scene.gt);
    }
    DetectionMetrics metrics = eval_detection(preds, gts);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot open for writing: " + out_path);
        out << metrics_json(metrics).dump(2) << "\n";
    }
    return metrics;
}

InferStats cmd_infer(const RunConfig& cfg, const std::string& checkpoint_prefix,
                     const std::string& data_path, const std::string& out_path) {
    cfg.validate();
    const std::vector<Scene> scenes = require_scenes(data_path);
    Model model = Model::create(cfg.model, cfg.seed);
    load_checkpoint(model, checkpoint_prefix);

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    Model::TokenPeCache pe_cache;
    {
        NoGradGuard no_grad;
        pe_cache = model.make_token_pe(scenes.front().calibs);
    }
    std::vector<double> times;
    for (const Scene& scene : scenes) {
        const double t0 = now_ms();
        const std::vector<Detection> dets = model.infer(scene, &pe_cache);
        const double elapsed = now_ms() - t0;
        times.push_back(elapsed);
        nlohmann::json dlist = nlohmann::json::array();
        for (const Detection& d : dets) {
            dlist.push_back({{"x", d.x}, {"y", d.y}, {"z", d.z}, {"w", d.w}, {"l", d.l},
                             {"h", d.h}, {"yaw", d.yaw}, {"vx", d.vx}, {"vy", d.vy},
                             {"score", d.score}, {"cls", d.cls}});
        }
        out << nlohmann::json{{"frame", scene.frame_index},
                              {"latency_ms", elapsed},
                              {"detections", dlist}}
                   .dump()
            << "\n";
    }
    InferStats stats;
    stats.scenes = static_cast<long>(times.size());
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    stats.median_ms = sorted[sorted.size() / 2];
    for (double t : times) stats.mean_ms += t;
    stats.mean_ms /= static_cast<double>(times.size());
    std::ofstream mf(out_path + ".metrics.json");
    if (!mf) throw IoError("cannot open for writing: " + out_path + ".metrics.json");
    mf << nlohmann::json{{"median_ms", stats.median_ms},
                         {"mean_ms", stats.mean_ms},
                         {"scenes", stats.scenes}}
              .dump(2)
       << "\n";
    return stats;
}

TrackingMetrics cmd_track(const RunConfig& cfg, const std::string& checkpoint_prefix,
                          const std::string& data_path, const std::string& out_path) {
    cfg.validate();
    std::vector<Scene> scenes = require_scenes(data_path);
    std::sort(scenes.begin(), scenes.end(),
              [](const Scene& a, const Scene& b) { return a.frame_index < b.frame_index; });
    Model model = Model::create(cfg.model, cfg.seed);
    load_checkpoint(model, checkpoint_prefix);

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);

    std::vector<Track> tracks;
    int next_id = 0;
    std::vector<GroundTruthSet> gt_frames;
    std::vector<std::vector<TrackedBox>> pred_frames;
    Model::TokenPeCache pe_cache;
    {
        NoGradGuard no_grad;
        pe_cache = model.make_token_pe(scenes.front().calibs);
    }
    for (const Scene& scene : scenes) {
        const std::vector<Detection> dets = model.infer(scene, &pe_cache);
        TrackStepResult step = track_step(tracks, dets, cfg.scene.dt, cfg.tracker, next_id);
        tracks = step.tracks;
        for (const TrackedBox& t : step.labeled) {
            out << nlohmann::json{{"frame", scene.frame_index}, {"id", t.id}, {"class", t.cls},
                                  {"x", t.x}, {"y", t.y}, {"score", t.score}}
                       .dump()
                << "\n";
        }
        gt_frames.push_back(scene.gt);
        pred_frames.push_back(step.labeled);
    }
    TrackingMetrics metrics = tracking_metrics(gt_frames, pred_frames);
    std::ofstream mf(out_path + ".metrics.json");
    if (!mf) throw IoError("cannot open for writing: " + out_path + ".metrics.json");
    mf << nlohmann::json{{"accuracy", metrics.accuracy}, {"fp", metrics.fp}, {"fn", metrics.fn},
                         {"ids", metrics.ids}, {"gt_boxes", metrics.total_gt}}
              .dump(2)
       << "\n";
    return metrics;
}

void cmd_robust(const RunConfig& cfg, const std::string& checkpoint_prefix,
                const std::string& data_path, const std::string& out_path) {
    cfg.validate();
    std::vector<std::pair<std::string, DropSpec>> patterns;
    patterns.emplace_back("none", DropSpec{});
    std::vector<int> all_cams;
    for (int cam = 0; cam < cfg.scene.num_cameras; ++cam) {
        patterns.emplace_back("camera_" + std::to_string(cam), DropSpec{{cam}, false});
        all_cams.push_back(cam);
    }
    if (cfg.scene.num_cameras > 1) {
        patterns.emplace_back("all_cameras", DropSpec{all_cams, false});
    }
    patterns.emplace_back("radar", DropSpec{{}, true});

    nlohmann::json grid = nlohmann::json::object();
    for (const auto& [name, spec] : patterns) {
        const DetectionMetrics m = cmd_eval(cfg, checkpoint_prefix, data_path, "", &spec);
        grid[name] = metrics_json(m);
    }
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << grid.dump(2) << "\n";
}

}  // namespace rcdet
