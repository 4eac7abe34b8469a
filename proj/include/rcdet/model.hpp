#pragma once

#include <string>

#include "rcdet/head_loss.hpp"
#include "rcdet/scene.hpp"

namespace rcdet {

struct ModelConfig {
    long embed_dim = 64;
    long heads = 4;
    long train_layers = 6;
    long inference_layers = 3;
    long num_queries = 24;
    long num_classes = 3;
    long ffn_mult = 2;
    long head_hidden = 128;
    // position embeddings
    long num_freqs = 8;
    long depth_bins = 16;
    double depth_min = 1.0;
    double depth_max = 40.0;
    // radar branch
    long bev_h = 32;
    long bev_w = 32;
    long radar_point_channels = 6;  // 5 drops the sweep time offset
    long pillar_hidden = 32;
    long pillar_channels = 16;
    long rde_c1 = 32;
    long rde_c2 = 64;
    long rde_c3 = 64;
    long rde_attn_heads = 4;
    long rde_attn_layers = 2;
    // camera branch: stride-2 conv stages between RGB and embed_dim, total
    // stride must equal the calibration feature stride
    std::vector<long> backbone_channels = {8, 16, 32};
    WorldRange range;

    void validate() const;
    long backbone_stride() const { return 1L << (backbone_channels.size() + 1); }
};

struct ImageBackbone {
    std::vector<ConvBlock> convs;

    static ImageBackbone create(ParamStore& store, const std::string& prefix,
                                const std::vector<long>& stage_channels, long out_channels,
                                Rng& rng);
    // [H x W x 3] -> [Hf*Wf x out_channels] tokens, row-major over (v, u)
    Tensor forward(const Tensor& image_hwc) const;
};

// The full detector: token generator (camera stub + pillars + dense radar
// encoder + position embeddings), pruning sequential decoder, prediction head.
struct Model {
    ModelConfig cfg;
    ParamStore params;
    ImageBackbone backbone;
    PillarNet pillar;
    RdeWeights rde;
    SharedPeEncoders pe;
    DecoderStack stack;
    HeadWeights head;
    DepthBins bins;
    BevGridSpec grid;

    static Model create(const ModelConfig& cfg, std::uint64_t seed);

    struct Forward {
        std::vector<QueryState> states;
        std::vector<BoxPrediction> preds;
    };

    // Token PEs depend only on the calibration rig and the current encoder
    // weights, so they are computed once and shared across a batch (training)
    // or a whole evaluation run (frozen weights).
    struct TokenPeCache {
        Tensor radar_pe;
        std::vector<Tensor> image_pe;
        std::vector<CameraCalib> calibs;
    };

    TokenPeCache make_token_pe(const std::vector<CameraCalib>& calibs) const;

    Forward forward(const Scene& scene, RunMode mode, const TokenPeCache* cache = nullptr) const;
    // No-grad inference through the pruned stack; returns one detection per query.
    std::vector<Detection> infer(const Scene& scene, const TokenPeCache* cache = nullptr) const;
};

// Manifest (<prefix>.json) listing {name, shape, byte offset} plus one
// little-endian float64 blob (<prefix>.bin).
void save_checkpoint(const Model& model, const std::string& prefix);
// Validates every tensor's shape against the model; lists mismatches.
void load_checkpoint(Model& model, const std::string& prefix);

}  // namespace rcdet
