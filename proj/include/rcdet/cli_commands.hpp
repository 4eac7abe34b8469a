#pragma once

#include <string>

#include "rcdet/config.hpp"

namespace rcdet {

// Command bodies shared by the CLI and the test harness. IO failures raise
// IoError, config problems ConfigError, checkpoint mismatches CheckpointError
// and numerical aborts NumericError; main() maps these to exit codes.

void cmd_gen_data(const RunConfig& cfg, const std::string& out_path);

struct TrainResult {
    double first_loss = 0;
    double final_loss = 0;
    long steps = 0;
};

TrainResult cmd_train(const RunConfig& cfg, const std::string& data_path,
                      const std::string& out_prefix);

DetectionMetrics cmd_eval(const RunConfig& cfg, const std::string& checkpoint_prefix,
                          const std::string& data_path, const std::string& out_path,
                          const DropSpec* drop = nullptr);

struct InferStats {
    double median_ms = 0;
    double mean_ms = 0;
    long scenes = 0;
};

InferStats cmd_infer(const RunConfig& cfg, const std::string& checkpoint_prefix,
                     const std::string& data_path, const std::string& out_path);

TrackingMetrics cmd_track(const RunConfig& cfg, const std::string& checkpoint_prefix,
                          const std::string& data_path, const std::string& out_path);

void cmd_robust(const RunConfig& cfg, const std::string& checkpoint_prefix,
                const std::string& data_path, const std::string& out_path);

}  // namespace rcdet
