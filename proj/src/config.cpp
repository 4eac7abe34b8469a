#include "rcdet/config.hpp"

#include <fstream>
#include <set>

namespace rcdet {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

WorldRange parse_range(const nlohmann::json& j) {
    check_keys(j, {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max"}, "range");
    WorldRange r;
    read(j, "x_min", r.x_min);
    read(j, "x_max", r.x_max);
    read(j, "y_min", r.y_min);
    read(j, "y_max", r.y_max);
    read(j, "z_min", r.z_min);
    read(j, "z_max", r.z_max);
    return r;
}

nlohmann::json range_json(const WorldRange& r) {
    return {{"x_min", r.x_min}, {"x_max", r.x_max}, {"y_min", r.y_min},
            {"y_max", r.y_max}, {"z_min", r.z_min}, {"z_max", r.z_max}};
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    scene.range.validate();
    if (scene.num_classes != static_cast<int>(model.num_classes)) {
        throw ConfigError("config: scene and model class counts differ");
    }
    if (scene.feature_stride != static_cast<int>(model.backbone_stride())) {
        throw ConfigError("config: scene feature stride does not match the backbone stride");
    }
    if (scene.image_h % scene.feature_stride != 0 || scene.image_w % scene.feature_stride != 0) {
        throw ConfigError("config: image size must be divisible by the feature stride");
    }
    if (scene.num_cameras < 1) throw ConfigError("config: need at least one camera");
    if (train.steps < 0 || train.batch_size < 1) throw ConfigError("config: bad training budget");
    if (train.drop_prob < 0.0 || train.drop_prob > 1.0) throw ConfigError("config: bad drop_prob");
    if (gen.mode != "scenes" && gen.mode != "sequence") {
        throw ConfigError("config: gen.mode must be 'scenes' or 'sequence'");
    }
    if (gen.count < 0) throw ConfigError("config: gen.count must be >= 0");
    if (loss.w_cls < 0.0 || loss.w_reg < 0.0) throw ConfigError("config: loss weights must be >= 0");
    // the BEV grid must tile the range with square cells
    (void)BevGridSpec::from_range(model.range, model.bev_h, model.bev_w);
}

RunConfig parse_run_config(const nlohmann::json& j) {
    check_keys(j, {"seed", "range", "model", "scene", "train", "loss", "tracker", "gen"}, "root");
    RunConfig cfg;
    read(j, "seed", cfg.seed);
    if (j.contains("range")) {
        const WorldRange r = parse_range(j.at("range"));
        cfg.model.range = r;
        cfg.scene.range = r;
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m,
                   {"embed_dim", "heads", "train_layers", "inference_layers", "num_queries",
                    "num_classes", "ffn_mult", "head_hidden", "num_freqs", "depth_bins",
                    "depth_min", "depth_max", "bev_h", "bev_w", "radar_point_channels",
                    "pillar_hidden", "pillar_channels", "rde_c1", "rde_c2", "rde_c3",
                    "rde_attn_heads", "rde_attn_layers", "backbone_channels"},
                   "model");
        read(m, "embed_dim", cfg.model.embed_dim);
        read(m, "heads", cfg.model.heads);
        read(m, "train_layers", cfg.model.train_layers);
        read(m, "inference_layers", cfg.model.inference_layers);
        read(m, "num_queries", cfg.model.num_queries);
        read(m, "num_classes", cfg.model.num_classes);
        read(m, "ffn_mult", cfg.model.ffn_mult);
        read(m, "head_hidden", cfg.model.head_hidden);
        read(m, "num_freqs", cfg.model.num_freqs);
        read(m, "depth_bins", cfg.model.depth_bins);
        read(m, "depth_min", cfg.model.depth_min);
        read(m, "depth_max", cfg.model.depth_max);
        read(m, "bev_h", cfg.model.bev_h);
        read(m, "bev_w", cfg.model.bev_w);
        read(m, "radar_point_channels", cfg.model.radar_point_channels);
        read(m, "pillar_hidden", cfg.model.pillar_hidden);
        read(m, "pillar_channels", cfg.model.pillar_channels);
        read(m, "rde_c1", cfg.model.rde_c1);
        read(m, "rde_c2", cfg.model.rde_c2);
        read(m, "rde_c3", cfg.model.rde_c3);
        read(m, "rde_attn_heads", cfg.model.rde_attn_heads);
        read(m, "rde_attn_layers", cfg.model.rde_attn_layers);
        read(m, "backbone_channels", cfg.model.backbone_channels);
    }
    if (j.contains("scene")) {
        const auto& s = j.at("scene");
        check_keys(s,
                   {"num_objects", "num_classes", "num_cameras", "image_h", "image_w",
                    "feature_stride", "dt", "max_speed", "birth_rate", "death_prob",
                    "max_radar_points", "radar", "spawn_x_min", "spawn_x_max",
                    "spawn_y_min", "spawn_y_max"},
                   "scene");
        read(s, "num_objects", cfg.scene.num_objects);
        read(s, "num_classes", cfg.scene.num_classes);
        read(s, "num_cameras", cfg.scene.num_cameras);
        read(s, "image_h", cfg.scene.image_h);
        read(s, "image_w", cfg.scene.image_w);
        read(s, "feature_stride", cfg.scene.feature_stride);
        read(s, "dt", cfg.scene.dt);
        read(s, "max_speed", cfg.scene.max_speed);
        read(s, "birth_rate", cfg.scene.birth_rate);
        read(s, "death_prob", cfg.scene.death_prob);
        read(s, "max_radar_points", cfg.scene.max_radar_points);
        read(s, "spawn_x_min", cfg.scene.spawn_x_min);
        read(s, "spawn_x_max", cfg.scene.spawn_x_max);
        read(s, "spawn_y_min", cfg.scene.spawn_y_min);
        read(s, "spawn_y_max", cfg.scene.spawn_y_max);
        if (s.contains("radar")) {
            const auto& r = s.at("radar");
            check_keys(r,
                       {"hit_probability", "azimuth_sigma", "depth_sigma", "z_sigma",
                        "clutter_rate", "num_sweeps", "sweep_period"},
                       "scene.radar");
            read(r, "hit_probability", cfg.scene.radar.hit_probability);
            read(r, "azimuth_sigma", cfg.scene.radar.azimuth_sigma);
            read(r, "depth_sigma", cfg.scene.radar.depth_sigma);
            read(r, "z_sigma", cfg.scene.radar.z_sigma);
            read(r, "clutter_rate", cfg.scene.radar.clutter_rate);
            read(r, "num_sweeps", cfg.scene.radar.num_sweeps);
            read(r, "sweep_period", cfg.scene.radar.sweep_period);
        }
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t,
                   {"steps", "batch_size", "lr", "weight_decay", "warmup_frac", "lr_floor_frac",
                    "drop_augment", "drop_prob", "log_every"},
                   "train");
        read(t, "steps", cfg.train.steps);
        read(t, "batch_size", cfg.train.batch_size);
        read(t, "lr", cfg.train.lr);
        read(t, "weight_decay", cfg.train.weight_decay);
        read(t, "warmup_frac", cfg.train.warmup_frac);
        read(t, "lr_floor_frac", cfg.train.lr_floor_frac);
        read(t, "drop_augment", cfg.train.drop_augment);
        read(t, "drop_prob", cfg.train.drop_prob);
        read(t, "log_every", cfg.train.log_every);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        check_keys(l, {"w_cls", "w_reg", "focal_alpha", "focal_gamma"}, "loss");
        read(l, "w_cls", cfg.loss.w_cls);
        read(l, "w_reg", cfg.loss.w_reg);
        read(l, "focal_alpha", cfg.loss.focal_alpha);
        read(l, "focal_gamma", cfg.loss.focal_gamma);
    }
    if (j.contains("tracker")) {
        const auto& t = j.at("tracker");
        check_keys(t, {"match_radius", "max_age", "min_score"}, "tracker");
        read(t, "match_radius", cfg.tracker.match_radius);
        read(t, "max_age", cfg.tracker.max_age);
        read(t, "min_score", cfg.tracker.min_score);
    }
    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        check_keys(g, {"mode", "count"}, "gen");
        read(g, "mode", cfg.gen.mode);
        read(g, "count", cfg.gen.count);
    }
    cfg.validate();
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["range"] = range_json(cfg.model.range);
    j["model"] = {{"embed_dim", cfg.model.embed_dim},
                  {"heads", cfg.model.heads},
                  {"train_layers", cfg.model.train_layers},
                  {"inference_layers", cfg.model.inference_layers},
                  {"num_queries", cfg.model.num_queries},
                  {"num_classes", cfg.model.num_classes},
                  {"ffn_mult", cfg.model.ffn_mult},
                  {"head_hidden", cfg.model.head_hidden},
                  {"num_freqs", cfg.model.num_freqs},
                  {"depth_bins", cfg.model.depth_bins},
                  {"depth_min", cfg.model.depth_min},
                  {"depth_max", cfg.model.depth_max},
                  {"bev_h", cfg.model.bev_h},
                  {"bev_w", cfg.model.bev_w},
                  {"radar_point_channels", cfg.model.radar_point_channels},
                  {"pillar_hidden", cfg.model.pillar_hidden},
                  {"pillar_channels", cfg.model.pillar_channels},
                  {"rde_c1", cfg.model.rde_c1},
                  {"rde_c2", cfg.model.rde_c2},
                  {"rde_c3", cfg.model.rde_c3},
                  {"rde_attn_heads", cfg.model.rde_attn_heads},
                  {"rde_attn_layers", cfg.model.rde_attn_layers},
                  {"backbone_channels", cfg.model.backbone_channels}};
    j["scene"] = {{"num_objects", cfg.scene.num_objects},
                  {"num_classes", cfg.scene.num_classes},
                  {"num_cameras", cfg.scene.num_cameras},
                  {"image_h", cfg.scene.image_h},
                  {"image_w", cfg.scene.image_w},
                  {"feature_stride", cfg.scene.feature_stride},
                  {"dt", cfg.scene.dt},
                  {"max_speed", cfg.scene.max_speed},
                  {"birth_rate", cfg.scene.birth_rate},
                  {"death_prob", cfg.scene.death_prob},
                  {"max_radar_points", cfg.scene.max_radar_points},
                  {"spawn_x_min", cfg.scene.spawn_x_min},
                  {"spawn_x_max", cfg.scene.spawn_x_max},
                  {"spawn_y_min", cfg.scene.spawn_y_min},
                  {"spawn_y_max", cfg.scene.spawn_y_max},
                  {"radar",
                   {{"hit_probability", cfg.scene.radar.hit_probability},
                    {"azimuth_sigma", cfg.scene.radar.azimuth_sigma},
                    {"depth_sigma", cfg.scene.radar.depth_sigma},
                    {"z_sigma", cfg.scene.radar.z_sigma},
                    {"clutter_rate", cfg.scene.radar.clutter_rate},
                    {"num_sweeps", cfg.scene.radar.num_sweeps},
                    {"sweep_period", cfg.scene.radar.sweep_period}}}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},
                  {"weight_decay", cfg.train.weight_decay},
                  {"warmup_frac", cfg.train.warmup_frac},
                  {"lr_floor_frac", cfg.train.lr_floor_frac},
                  {"drop_augment", cfg.train.drop_augment},
                  {"drop_prob", cfg.train.drop_prob},
                  {"log_every", cfg.train.log_every}};
    j["loss"] = {{"w_cls", cfg.loss.w_cls},
                 {"w_reg", cfg.loss.w_reg},
                 {"focal_alpha", cfg.loss.focal_alpha},
                 {"focal_gamma", cfg.loss.focal_gamma}};
    j["tracker"] = {{"match_radius", cfg.tracker.match_radius},
                    {"max_age", cfg.tracker.max_age},
                    {"min_score", cfg.tracker.min_score}};
    j["gen"] = {{"mode", cfg.gen.mode}, {"count", cfg.gen.count}};
    return j;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: invalid JSON in " + path);
    return parse_run_config(j);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << to_json(cfg).dump(2) << "\n";
}

std::string config_hash(const RunConfig& cfg) {
    const std::string dump = to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace rcdet
