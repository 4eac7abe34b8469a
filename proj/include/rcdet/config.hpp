#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "rcdet/model.hpp"
#include "rcdet/tracker.hpp"

namespace rcdet {

struct TrainConfig {
    long steps = 2000;
    long batch_size = 4;
    double lr = 4e-4;
    double weight_decay = 1e-2;
    double warmup_frac = 0.1;
    double lr_floor_frac = 0.05;
    bool drop_augment = false;
    double drop_prob = 0.5;
    long log_every = 10;
};

struct GenConfig {
    std::string mode = "scenes";  // "scenes" | "sequence"
    long count = 8;
};

// Everything a run needs; every field has a default, unknown keys are
// rejected, and load -> serialize -> load is a fixed point.
struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;
    SceneConfig scene;
    TrainConfig train;
    LossConfig loss;
    TrackerConfig tracker;
    GenConfig gen;

    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// FNV-1a over the canonical serialization.
std::string config_hash(const RunConfig& cfg);

}  // namespace rcdet
