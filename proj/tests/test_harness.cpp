#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rcdet/cli_commands.hpp"
#include "rcdet/optim.hpp"

using namespace rcdet;

namespace {

// a configuration small enough for end-to-end smoke runs
RunConfig micro_config() {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.model.embed_dim = 16;
    cfg.model.heads = 2;
    cfg.model.train_layers = 2;
    cfg.model.inference_layers = 1;
    cfg.model.num_queries = 6;
    cfg.model.head_hidden = 16;
    cfg.model.num_freqs = 4;
    cfg.model.depth_bins = 4;
    cfg.model.bev_h = 16;
    cfg.model.bev_w = 16;
    cfg.model.pillar_hidden = 8;
    cfg.model.pillar_channels = 8;
    cfg.model.rde_c1 = 8;
    cfg.model.rde_c2 = 8;
    cfg.model.rde_c3 = 8;
    cfg.model.rde_attn_heads = 2;
    cfg.model.rde_attn_layers = 1;
    cfg.model.backbone_channels = {4, 4, 8};
    cfg.scene.num_objects = 4;
    cfg.scene.num_cameras = 2;
    cfg.scene.image_h = 32;
    cfg.scene.image_w = 48;
    cfg.scene.radar.clutter_rate = 3.0;
    cfg.train.steps = 3;
    cfg.train.batch_size = 2;
    cfg.train.log_every = 1;
    cfg.gen.count = 2;
    cfg.validate();
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("run config round trip is a fixed point") {
    RunConfig cfg = micro_config();
    const nlohmann::json j1 = to_json(cfg);
    const RunConfig parsed = parse_run_config(j1);
    const nlohmann::json j2 = to_json(parsed);
    CHECK(j1.dump() == j2.dump());
    CHECK(config_hash(cfg) == config_hash(parsed));

    const std::string path = "test_cfg_roundtrip.json";
    save_run_config(cfg, path);
    const RunConfig loaded = load_run_config(path);
    CHECK(to_json(loaded).dump() == j1.dump());
    std::remove(path.c_str());
}

TEST_CASE("unknown config keys are rejected") {
    nlohmann::json j = to_json(micro_config());
    j["model"]["mystery_knob"] = 3;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
    nlohmann::json j2 = to_json(micro_config());
    j2["totally_unknown"] = 1;
    CHECK_THROWS_AS(parse_run_config(j2), ConfigError);
    CHECK_THROWS_AS(load_run_config("no_such_config.json"), IoError);
}

TEST_CASE("partial configs inherit defaults") {
    const RunConfig cfg = parse_run_config(nlohmann::json::parse(R"({"model":{"embed_dim":32}})"));
    CHECK(cfg.model.embed_dim == 32);
    CHECK(cfg.model.heads == 4);
    CHECK(cfg.scene.num_objects == 10);
    CHECK(cfg.train.steps == 2000);
    CHECK(cfg.loss.w_cls == doctest::Approx(2.0));
}

TEST_CASE("checkpoint round trip restores every parameter bitwise") {
    const RunConfig cfg = micro_config();
    Model a = Model::create(cfg.model, 1);
    Model b = Model::create(cfg.model, 2);
    save_checkpoint(a, "test_ckpt");

    bool differ = false;
    for (std::size_t i = 0; i < a.params.items().size(); ++i) {
        if (a.params.items()[i].second.data() != b.params.items()[i].second.data()) differ = true;
    }
    CHECK(differ);

    load_checkpoint(b, "test_ckpt");
    for (std::size_t i = 0; i < a.params.items().size(); ++i) {
        CHECK(a.params.items()[i].second.data() == b.params.items()[i].second.data());
    }
    std::remove("test_ckpt.json");
    std::remove("test_ckpt.bin");
}

TEST_CASE("checkpoint mismatches name the offending tensors") {
    const RunConfig cfg = micro_config();
    Model a = Model::create(cfg.model, 1);
    save_checkpoint(a, "test_ckpt_mismatch");

    RunConfig other = cfg;
    other.model.num_queries = 9;
    Model b = Model::create(other.model, 1);
    try {
        load_checkpoint(b, "test_ckpt_mismatch");
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("queries.refs") != std::string::npos);
    }
    std::remove("test_ckpt_mismatch.json");
    std::remove("test_ckpt_mismatch.bin");
}

TEST_CASE("gen-data is deterministic and reports occupancy") {
    const RunConfig cfg = micro_config();
    cmd_gen_data(cfg, "test_gen_a.jsonl");
    cmd_gen_data(cfg, "test_gen_b.jsonl");
    CHECK(slurp("test_gen_a.jsonl") == slurp("test_gen_b.jsonl"));
    const nlohmann::json manifest =
        nlohmann::json::parse(slurp("test_gen_a.jsonl.manifest.json"));
    CHECK(manifest["scenes"] == 2);
    CHECK(manifest["config_hash"] == config_hash(cfg));
    CHECK(manifest.contains("mean_nonempty_cell_fraction"));

    RunConfig empty_cfg = cfg;
    empty_cfg.gen.count = 0;
    cmd_gen_data(empty_cfg, "test_gen_empty.jsonl");
    CHECK(slurp("test_gen_empty.jsonl").empty());
    const nlohmann::json m2 = nlohmann::json::parse(slurp("test_gen_empty.jsonl.manifest.json"));
    CHECK(m2["scenes"] == 0);

    for (const char* f : {"test_gen_a.jsonl", "test_gen_a.jsonl.manifest.json", "test_gen_b.jsonl",
                          "test_gen_b.jsonl.manifest.json", "test_gen_empty.jsonl",
                          "test_gen_empty.jsonl.manifest.json"}) {
        std::remove(f);
    }
}

TEST_CASE("training smoke run: logs, checkpoint, and the zero-lr fixed point") {
    RunConfig cfg = micro_config();
    cmd_gen_data(cfg, "test_train_data.jsonl");

    SUBCASE("zero learning rate keeps the loss constant") {
        RunConfig frozen = cfg;
        frozen.train.lr = 0.0;
        frozen.train.steps = 3;
        frozen.train.batch_size = 2;  // both scenes each step, same batch every time
        const TrainResult r = cmd_train(frozen, "test_train_data.jsonl", "test_train_frozen");
        CHECK(r.first_loss == r.final_loss);

        // step-0 loss equals an independently computed forward-only loss
        const auto scenes = load_scenes_jsonl("test_train_data.jsonl");
        Model model = Model::create(frozen.model, frozen.seed);
        double expect = 0.0;
        {
            NoGradGuard ng;
            for (const Scene& s : scenes) {
                Model::Forward fwd = model.forward(s, RunMode::kTrain);
                expect += total_loss(fwd.preds, s.gt, frozen.model.range, frozen.loss).total;
            }
        }
        expect /= static_cast<double>(scenes.size());
        CHECK(r.first_loss == doctest::Approx(expect).epsilon(1e-12));
        std::remove("test_train_frozen.json");
        std::remove("test_train_frozen.bin");
        std::remove("test_train_frozen.train.jsonl");
    }

    SUBCASE("a few steps run end to end and the loss stays finite") {
        const TrainResult r = cmd_train(cfg, "test_train_data.jsonl", "test_train_run");
        CHECK(std::isfinite(r.final_loss));
        CHECK(slurp("test_train_run.train.jsonl").find("\"loss\"") != std::string::npos);

        // eval, infer, track and robust all run on the trained checkpoint
        const DetectionMetrics m =
            cmd_eval(cfg, "test_train_run", "test_train_data.jsonl", "test_eval_out.json");
        CHECK(m.map >= 0.0);
        CHECK(m.map <= 1.0);

        const InferStats st =
            cmd_infer(cfg, "test_train_run", "test_train_data.jsonl", "test_infer_out.jsonl");
        CHECK(st.scenes == 2);
        CHECK(st.median_ms > 0.0);

        const TrackingMetrics tm =
            cmd_track(cfg, "test_train_run", "test_train_data.jsonl", "test_track_out.jsonl");
        CHECK(tm.total_gt > 0);

        cmd_robust(cfg, "test_train_run", "test_train_data.jsonl", "test_robust_out.json");
        const nlohmann::json grid = nlohmann::json::parse(slurp("test_robust_out.json"));
        CHECK(grid.contains("none"));
        CHECK(grid.contains("camera_0"));
        CHECK(grid.contains("camera_1"));
        CHECK(grid.contains("all_cameras"));
        CHECK(grid.contains("radar"));

        for (const char* f :
             {"test_train_run.json", "test_train_run.bin", "test_train_run.train.jsonl",
              "test_eval_out.json", "test_infer_out.jsonl", "test_infer_out.jsonl.metrics.json",
              "test_track_out.jsonl", "test_track_out.jsonl.metrics.json",
              "test_robust_out.json"}) {
            std::remove(f);
        }
    }
    std::remove("test_train_data.jsonl");
    std::remove("test_train_data.jsonl.manifest.json");
}

TEST_CASE("drop-pattern forwards preserve shapes end to end") {
    RunConfig cfg = micro_config();
    const Scene scene = gen_scene(3, cfg.scene);
    Model model = Model::create(cfg.model, cfg.seed);
    const std::vector<DropSpec> patterns = {
        {}, {{0}, false}, {{1}, false}, {{0, 1}, false}, {{}, true}, {{0, 1}, true}};
    for (const DropSpec& spec : patterns) {
        const Scene dropped = dropout_harness(scene, spec);
        const auto dets = model.infer(dropped);
        CHECK(dets.size() == static_cast<std::size_t>(cfg.model.num_queries));
        for (const Detection& d : dets) {
            CHECK(std::isfinite(d.x));
            CHECK(std::isfinite(d.score));
        }
    }
}

TEST_CASE("cli exit codes") {
    if (std::system(nullptr) == 0) return;  // no shell available
    {
        std::ifstream bin("./rcdet");
        if (!bin.good()) return;  // not running from the build directory
    }
    auto run = [](const std::string& cmd) {
        const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    save_run_config(micro_config(), "cli_cfg.json");
    CHECK(run("./rcdet") == 1);                  // usage
    CHECK(run("./rcdet --help") == 0);
    CHECK(run("./rcdet gen-data --config no_such_file.json --out cli_x.jsonl") == 2);  // IO
    CHECK(run("./rcdet eval --config cli_cfg.json --data cli_d.jsonl") == 1);  // missing --out

    // checkpoint/config mismatch -> 3
    RunConfig cfg = micro_config();
    cmd_gen_data(cfg, "cli_data.jsonl");
    Model model = Model::create(cfg.model, cfg.seed);
    save_checkpoint(model, "cli_ckpt");
    RunConfig other = cfg;
    other.model.num_queries = 9;
    save_run_config(other, "cli_cfg_other.json");
    CHECK(run("./rcdet eval --config cli_cfg_other.json --checkpoint cli_ckpt "
              "--data cli_data.jsonl --out cli_m.json") == 3);

    // exploding step size -> non-finite loss -> 4, with a diagnostic dump
    RunConfig blowup = cfg;
    blowup.train.lr = 1e12;
    blowup.train.steps = 8;
    save_run_config(blowup, "cli_cfg_blowup.json");
    CHECK(run("./rcdet train --config cli_cfg_blowup.json --data cli_data.jsonl "
              "--out cli_blowup") == 4);
    std::ifstream dump("cli_blowup.abort.json");
    CHECK(dump.good());

    for (const char* f : {"cli_cfg.json", "cli_data.jsonl", "cli_data.jsonl.manifest.json",
                          "cli_ckpt.json", "cli_ckpt.bin", "cli_cfg_other.json",
                          "cli_cfg_blowup.json", "cli_blowup.abort.json", "cli_blowup.train.jsonl",
                          "cli_m.json"}) {
        std::remove(f);
    }
}

TEST_CASE("full-scale configuration is expressible") {
    const RunConfig cfg = parse_run_config(nlohmann::json::parse(R"({
        "model": {"embed_dim": 256, "heads": 8, "num_queries": 900,
                   "bev_h": 128, "bev_w": 128, "num_classes": 10},
        "scene": {"num_cameras": 6, "num_classes": 10, "max_radar_points": 2048,
                   "radar": {"num_sweeps": 6}}
    })"));
    CHECK(cfg.model.num_queries == 900);
    CHECK(cfg.model.bev_h == 128);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("one-cycle schedule shape") {
    const double peak = 4e-4;
    CHECK(one_cycle_lr(0, 100, peak) < peak);
    CHECK(one_cycle_lr(9, 100, peak) == doctest::Approx(peak));
    CHECK(one_cycle_lr(99, 100, peak) < 0.1 * peak);
    double prev = 0.0;
    for (long s = 0; s < 10; ++s) {
        const double lr = one_cycle_lr(s, 100, peak);
        CHECK(lr >= prev);
        prev = lr;
    }
}
