#include "rcdet/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace rcdet {

void ModelConfig::validate() const {
    range.validate();
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
        throw ConfigError("model: embed_dim must be a positive multiple of heads");
    }
    if (train_layers < 1 || inference_layers < 1 || inference_layers > train_layers) {
        throw ConfigError("model: inference layers must be in [1, train layers]");
    }
    if (num_queries < 1) throw ConfigError("model: need at least one query");
    if (num_classes < 1) throw ConfigError("model: need at least one class");
    if (depth_bins < 1 || depth_min <= 0.0 || depth_max <= depth_min) {
        throw ConfigError("model: depth bins must span 0 < near < far");
    }
    if (bev_h % 8 != 0 || bev_w % 8 != 0) {
        throw ConfigError("model: BEV grid must be divisible by 8");
    }
    if (radar_point_channels != 5 && radar_point_channels != 6) {
        throw ConfigError("model: radar point channels must be 5 or 6");
    }
    if (backbone_channels.empty()) throw ConfigError("model: backbone needs at least one stage");
}

ImageBackbone ImageBackbone::create(ParamStore& store, const std::string& prefix,
                                    const std::vector<long>& stage_channels, long out_channels,
                                    Rng& rng) {
    ImageBackbone bb;
    long cin = 3;
    for (std::size_t i = 0; i < stage_channels.size(); ++i) {
        bb.convs.push_back(ConvBlock::create(store, prefix + ".conv" + std::to_string(i), cin,
                                             stage_channels[i], 3, 2, 1, true, rng));
        cin = stage_channels[i];
    }
    bb.convs.push_back(ConvBlock::create(store, prefix + ".conv" + std::to_string(stage_channels.size()),
                                         cin, out_channels, 3, 2, 1, false, rng));
    return bb;
}

Tensor ImageBackbone::forward(const Tensor& image_hwc) const {
    if (image_hwc.dim() != 3 || image_hwc.size(2) != 3) {
        throw DimError("backbone: expected [H x W x 3] image");
    }
    Tensor x = permute(image_hwc, {2, 0, 1});
    for (const ConvBlock& blk : convs) x = blk.forward(x);
    const long d = x.size(0), hf = x.size(1), wf = x.size(2);
    return reshape(permute(x, {1, 2, 0}), {hf * wf, d});
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng(seed);
    m.backbone = ImageBackbone::create(m.params, "backbone", cfg.backbone_channels, cfg.embed_dim, rng);
    m.pillar = PillarNet::create(m.params, "pillar", cfg.radar_point_channels, cfg.pillar_hidden,
                                 cfg.pillar_channels, rng);
    RdeConfig rde_cfg;
    rde_cfg.c_in = cfg.pillar_channels;
    rde_cfg.c1 = cfg.rde_c1;
    rde_cfg.c2 = cfg.rde_c2;
    rde_cfg.c3 = cfg.rde_c3;
    rde_cfg.c_out = cfg.embed_dim;
    rde_cfg.attn_heads = cfg.rde_attn_heads;
    rde_cfg.attn_layers = cfg.rde_attn_layers;
    rde_cfg.ffn_mult = cfg.ffn_mult;
    m.rde = RdeWeights::create(m.params, "rde", rde_cfg, cfg.bev_h, cfg.bev_w, rng);
    m.pe = SharedPeEncoders::create(m.params, "pe", cfg.embed_dim, cfg.num_freqs, cfg.depth_bins, rng);
    m.stack = DecoderStack::create(m.params, "decoder", cfg.embed_dim, cfg.heads, cfg.ffn_mult,
                                   cfg.train_layers, cfg.inference_layers, rng);
    m.head = HeadWeights::create(m.params, "head", cfg.embed_dim, cfg.head_hidden, cfg.num_classes, rng);
    init_queries(m.params, cfg.num_queries, cfg.embed_dim, rng);
    m.bins = DepthBins::linspace(static_cast<int>(cfg.depth_bins), cfg.depth_min, cfg.depth_max);
    m.grid = BevGridSpec::from_range(cfg.range, cfg.bev_h, cfg.bev_w);
    return m;
}

namespace {

bool same_rig(const std::vector<CameraCalib>& a, const std::vector<CameraCalib>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].intrinsics != b[i].intrinsics || a[i].extrinsics != b[i].extrinsics ||
            a[i].image_h != b[i].image_h || a[i].image_w != b[i].image_w ||
            a[i].feature_stride != b[i].feature_stride) {
            return false;
        }
    }
    return true;
}

}  // namespace

Model::TokenPeCache Model::make_token_pe(const std::vector<CameraCalib>& calibs) const {
    TokenPeCache cache;
    cache.calibs = calibs;
    cache.radar_pe = radar_token_pe(grid.h, grid.w, pe);
    cache.image_pe.reserve(calibs.size());
    for (const CameraCalib& calib : calibs) {
        cache.image_pe.push_back(image_token_pe(calib, bins, cfg.range, pe));
    }
    return cache;
}

Model::Forward Model::forward(const Scene& scene, RunMode mode, const TokenPeCache* cache) const {
    if (scene.calibs.empty()) throw ContractError("model: scene has no cameras");
    if (scene.images.dim() != 4 || scene.images.size(0) != static_cast<long>(scene.calibs.size())) {
        throw ContractError("model: image stack does not match the calibrations");
    }
    for (const CameraCalib& calib : scene.calibs) {
        if (calib.feature_stride != cfg.backbone_stride()) {
            throw ConfigError("model: calibration stride does not match the backbone");
        }
    }
    TokenPeCache local;
    if (cache == nullptr || !same_rig(cache->calibs, scene.calibs)) {
        local = make_token_pe(scene.calibs);
        cache = &local;
    }

    // radar tokens
    BevGrid bev = pillarize(scene.radar, grid, pillar);
    BevGrid dense = rde_forward(bev, rde);
    Tensor t_r = reshape(dense.features, {grid.h * grid.w, cfg.embed_dim});
    t_r = add(t_r, cache->radar_pe);

    // image tokens
    const long n_cam = scene.images.size(0);
    const long img_h = scene.images.size(1), img_w = scene.images.size(2);
    std::vector<Tensor> cam_tokens;
    cam_tokens.reserve(static_cast<std::size_t>(n_cam));
    for (long cam = 0; cam < n_cam; ++cam) {
        Tensor img = reshape(slice(scene.images, 0, cam, 1), {img_h, img_w, 3});
        Tensor tokens = backbone.forward(img);
        tokens = add(tokens, cache->image_pe[static_cast<std::size_t>(cam)]);
        cam_tokens.push_back(tokens);
    }
    Tensor t_i = n_cam == 1 ? cam_tokens[0] : concat(cam_tokens, 0);

    Forward out;
    QueryState state0 = reset_queries(params, cfg.num_queries, cfg.embed_dim);
    out.states = run_stack(state0, t_r, t_i, stack, pe, mode);
    out.preds.reserve(out.states.size());
    for (const QueryState& s : out.states) out.preds.push_back(predict(s, head));
    return out;
}

std::vector<Detection> Model::infer(const Scene& scene, const TokenPeCache* cache) const {
    NoGradGuard no_grad;
    Forward fwd = forward(scene, RunMode::kInfer, cache);
    return decode_detections(fwd.preds.back(), cfg.range);
}

void save_checkpoint(const Model& model, const std::string& prefix) {
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    nlohmann::json tensors = nlohmann::json::array();
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open for writing: " + prefix + ".bin");
    std::size_t offset = 0;
    for (const auto& [name, tensor] : model.params.items()) {
        tensors.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
        const auto& data = tensor.data();
        bin.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
        offset += data.size() * sizeof(double);
    }
    manifest["tensors"] = tensors;
    manifest["total_bytes"] = offset;
    std::ofstream mf(prefix + ".json");
    if (!mf) throw IoError("cannot open for writing: " + prefix + ".json");
    mf << manifest.dump(2) << "\n";
}

void load_checkpoint(Model& model, const std::string& prefix) {
    std::ifstream mf(prefix + ".json");
    if (!mf) throw IoError("cannot open checkpoint manifest: " + prefix + ".json");
    nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
    if (manifest.is_discarded()) throw IoError("checkpoint manifest: invalid JSON");
    if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != 1) {
        throw IoError("checkpoint manifest: missing or unsupported format_version");
    }
    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open checkpoint blob: " + prefix + ".bin");

    std::string mismatches;
    std::size_t matched = 0;
    for (const auto& entry : manifest["tensors"]) {
        const std::string name = entry["name"].get<std::string>();
        const Shape shape = entry["shape"].get<Shape>();
        Tensor target = model.params.find(name);
        if (!target.defined()) {
            mismatches += "  " + name + ": not in model\n";
            continue;
        }
        if (target.shape() != shape) {
            mismatches += "  " + name + ": checkpoint " + shape_str(shape) + " vs model " +
                          shape_str(target.shape()) + "\n";
            continue;
        }
        ++matched;
    }
    if (matched != model.params.items().size()) {
        for (const auto& [name, _] : model.params.items()) {
            bool found = false;
            for (const auto& entry : manifest["tensors"]) {
                if (entry["name"].get<std::string>() == name) {
                    found = true;
                    break;
                }
            }
            if (!found) mismatches += "  " + name + ": missing from checkpoint\n";
        }
    }
    if (!mismatches.empty()) {
        throw CheckpointError("checkpoint does not match the model config:\n" + mismatches);
    }
    for (const auto& entry : manifest["tensors"]) {
        const std::string name = entry["name"].get<std::string>();
        const std::size_t offset = entry["offset"].get<std::size_t>();
        Tensor target = model.params.find(name);
        std::vector<double>& dst = target.raw_data();
        bin.seekg(static_cast<std::streamoff>(offset));
        bin.read(reinterpret_cast<char*>(dst.data()),
                 static_cast<std::streamsize>(dst.size() * sizeof(double)));
        if (!bin) throw IoError("checkpoint blob: truncated read for " + name);
    }
}

}  // namespace rcdet
