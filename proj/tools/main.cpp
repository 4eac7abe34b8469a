#include <CLI11.hpp>
#include <iostream>

#include "rcdet/cli_commands.hpp"

namespace {

struct Args {
    std::string config;
    std::string data;
    std::string checkpoint;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

rcdet::RunConfig resolve_config(const Args& args) {
    rcdet::RunConfig cfg;
    if (!args.config.empty()) cfg = rcdet::load_run_config(args.config);
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

void add_common(CLI::App* cmd, Args& args, bool needs_data, bool needs_checkpoint) {
    cmd->add_option("--config", args.config, "JSON run configuration");
    auto* seed = cmd->add_option("--seed", args.seed, "override the config seed");
    seed->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--out", args.out, "output path")->required();
    if (needs_data) cmd->add_option("--data", args.data, "scene JSONL file")->required();
    if (needs_checkpoint) {
        cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path prefix")->required();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"radar-camera 3D detection testbench"};
    app.require_subcommand(1);

    Args args;
    CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic scenes");
    add_common(gen, args, false, false);
    CLI::App* train = app.add_subcommand("train", "train a model on scene data");
    add_common(train, args, true, false);
    CLI::App* eval = app.add_subcommand("eval", "evaluate detection metrics");
    add_common(eval, args, true, true);
    CLI::App* infer = app.add_subcommand("infer", "run inference and time it");
    add_common(infer, args, true, true);
    CLI::App* track = app.add_subcommand("track", "run the tracker over a sequence");
    add_common(track, args, true, true);
    CLI::App* robust = app.add_subcommand("robust", "sensor-dropout metric grid");
    add_common(robust, args, true, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        const rcdet::RunConfig cfg = resolve_config(args);
        if (gen->parsed()) {
            rcdet::cmd_gen_data(cfg, args.out);
        } else if (train->parsed()) {
            const auto r = rcdet::cmd_train(cfg, args.data, args.out);
            std::cout << "trained " << r.steps << " steps, loss " << r.first_loss << " -> "
                      << r.final_loss << "\n";
        } else if (eval->parsed()) {
            const auto m = rcdet::cmd_eval(cfg, args.checkpoint, args.data, args.out);
            std::cout << "mAP " << m.map << "  mATE " << m.mate << "  mAVE " << m.mave << "\n";
        } else if (infer->parsed()) {
            const auto s = rcdet::cmd_infer(cfg, args.checkpoint, args.data, args.out);
            std::cout << "median latency " << s.median_ms << " ms over " << s.scenes
                      << " scenes\n";
        } else if (track->parsed()) {
            const auto m = rcdet::cmd_track(cfg, args.checkpoint, args.data, args.out);
            std::cout << "accuracy " << m.accuracy << "  FP " << m.fp << "  FN " << m.fn
                      << "  IDS " << m.ids << "\n";
        } else if (robust->parsed()) {
            rcdet::cmd_robust(cfg, args.checkpoint, args.data, args.out);
        }
    } catch (const rcdet::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const rcdet::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const rcdet::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
