#include "rcdet/radar_bev.hpp"

#include <cmath>

namespace rcdet {

BevGridSpec BevGridSpec::from_range(const WorldRange& range, long h, long w) {
    range.validate();
    BevGridSpec spec;
    spec.h = h;
    spec.w = w;
    spec.cell_size = (range.x_max - range.x_min) / static_cast<double>(w);
    const double cell_y = (range.y_max - range.y_min) / static_cast<double>(h);
    if (std::abs(cell_y - spec.cell_size) > 1e-9) {
        throw ConfigError("bev grid: cells must be square; adjust grid counts to the range");
    }
    spec.origin_x = range.x_min;
    spec.origin_y = range.y_min;
    spec.validate();
    return spec;
}

void BevGridSpec::validate() const {
    if (h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0) {
        throw ConfigError("bev grid: H and W must be multiples of 8 (three 2x downsamples)");
    }
    if (cell_size <= 0.0) throw ConfigError("bev grid: cell size must be positive");
}

bool BevGridSpec::cell_of(double x, double y, long& row, long& col) const {
    col = static_cast<long>(std::floor((x - origin_x) / cell_size));
    row = static_cast<long>(std::floor((y - origin_y) / cell_size));
    return row >= 0 && row < h && col >= 0 && col < w;
}

double BevGrid::empty_fraction() const {
    if (nonempty.empty()) return 1.0;
    long filled = 0;
    for (std::uint8_t m : nonempty) filled += m ? 1 : 0;
    return 1.0 - static_cast<double>(filled) / static_cast<double>(nonempty.size());
}

PillarNet PillarNet::create(ParamStore& store, const std::string& prefix, long point_channels,
                            long hidden, long out_channels, Rng& rng) {
    if (point_channels != 5 && point_channels != 6) {
        throw ConfigError("pillar net: point channels must be 5 or 6");
    }
    PillarNet net;
    net.point_channels = point_channels;
    net.out_channels = out_channels;
    net.mlp = Mlp::create(store, prefix, {point_channels, hidden, out_channels}, rng);
    return net;
}

BevGrid pillarize(const RadarPoints& points, const BevGridSpec& spec, const PillarNet& net) {
    spec.validate();
    BevGrid grid;
    grid.spec = spec;
    grid.nonempty.assign(static_cast<std::size_t>(spec.h * spec.w), 0);

    const long pc = net.point_channels;
    std::vector<double> feats;
    std::vector<long> cells;
    for (long i = 0; i < points.count(); ++i) {
        const auto row = points.pts.row(i);
        bool all_zero = true;
        for (int c = 0; c < RadarPoints::kColumns; ++c) {
            if (row(c) != 0.0) {
                all_zero = false;
                break;
            }
        }
        if (all_zero) continue;  // padding
        long cr = 0, cc = 0;
        if (!spec.cell_of(row(0), row(1), cr, cc)) continue;
        // planar position enters as the offset from the cell center, which
        // keeps the grid equivariant under whole-cell translations
        feats.push_back(row(0) - spec.center_x(cc));
        feats.push_back(row(1) - spec.center_y(cr));
        for (long c = 2; c < pc; ++c) feats.push_back(row(static_cast<int>(c)));
        cells.push_back(cr * spec.w + cc);
    }

    const long k = static_cast<long>(cells.size());
    if (k == 0) {
        grid.features = Tensor::zeros({spec.h, spec.w, net.out_channels});
        return grid;
    }
    for (long cell : cells) grid.nonempty[static_cast<std::size_t>(cell)] = 1;

    Tensor in = Tensor::from_data({k, pc}, std::move(feats));
    Tensor per_point = net.mlp.forward(in);
    Tensor scattered = pillar_scatter_max(per_point, cells, spec.h * spec.w);
    grid.features = reshape(scattered, {spec.h, spec.w, net.out_channels});
    return grid;
}

ConvBlock ConvBlock::create(ParamStore& store, const std::string& prefix, long cin, long cout,
                            long k, long stride, long pad, bool norm_act, Rng& rng) {
    ConvBlock blk;
    blk.stride = stride;
    blk.pad = pad;
    blk.norm_act = norm_act;
    const long fan_in = cin * k * k;
    const long fan_out = cout * k * k;
    blk.w = xavier_param(store, prefix + ".w", {cout, cin, k, k}, fan_in, fan_out, rng);
    blk.b = zeros_param(store, prefix + ".b", {cout});
    if (norm_act) blk.ln = LayerNormParams::create(store, prefix + ".ln", cout);
    return blk;
}

Tensor ConvBlock::forward(const Tensor& x_chw) const {
    Tensor y = strided_conv2d(x_chw, w, b, stride, pad);
    if (!norm_act) return y;
    // layer norm runs over channels, so through HWC and back
    Tensor hwc = permute(y, {1, 2, 0});
    hwc = relu(ln.forward(hwc));
    return permute(hwc, {2, 0, 1});
}

AttnBlock AttnBlock::create(ParamStore& store, const std::string& prefix, long dim, long heads,
                            long ffn_mult, Rng& rng) {
    AttnBlock blk;
    blk.mha = MultiHeadAttention::create(store, prefix + ".mha", dim, heads, rng);
    blk.ln1 = LayerNormParams::create(store, prefix + ".ln1", dim);
    blk.ffn = FeedForward::create(store, prefix + ".ffn", dim, dim * ffn_mult, rng);
    blk.ln2 = LayerNormParams::create(store, prefix + ".ln2", dim);
    return blk;
}

Tensor AttnBlock::forward(const Tensor& tokens) const {
    Tensor x = ln1.forward(add(tokens, mha.forward(tokens, tokens, tokens)));
    return ln2.forward(add(x, ffn.forward(x)));
}

RdeWeights RdeWeights::create(ParamStore& store, const std::string& prefix, const RdeConfig& cfg,
                              long grid_h, long grid_w, Rng& rng) {
    if (grid_h % 8 != 0 || grid_w % 8 != 0) {
        throw ConfigError("rde: grid dimensions must be divisible by 8");
    }
    RdeWeights w;
    w.cfg = cfg;
    w.grid_h = grid_h;
    w.grid_w = grid_w;
    w.down1 = ConvBlock::create(store, prefix + ".down1", cfg.c_in, cfg.c1, 3, 2, 1, true, rng);
    w.down2 = ConvBlock::create(store, prefix + ".down2", cfg.c1, cfg.c2, 3, 2, 1, true, rng);
    w.down3 = ConvBlock::create(store, prefix + ".down3", cfg.c2, cfg.c3, 3, 2, 1, true, rng);
    const long hc = grid_h / 8, wc = grid_w / 8;
    {
        std::vector<double> table(static_cast<std::size_t>(hc * wc * cfg.c3));
        for (double& v : table) v = 0.02 * rng.normal();
        w.pos_table = store.add(prefix + ".pos_table",
                                Tensor::from_data({hc * wc, cfg.c3}, std::move(table), true));
    }
    for (long i = 0; i < cfg.attn_layers; ++i) {
        w.attn.push_back(AttnBlock::create(store, prefix + ".attn" + std::to_string(i), cfg.c3,
                                           cfg.attn_heads, cfg.ffn_mult, rng));
    }
    w.fuse2 = ConvBlock::create(store, prefix + ".fuse2", cfg.c3 + cfg.c2, cfg.c2, 1, 1, 0, true, rng);
    w.fuse1 = ConvBlock::create(store, prefix + ".fuse1", cfg.c2 + cfg.c1, cfg.c1, 1, 1, 0, true, rng);
    w.fuse0 = ConvBlock::create(store, prefix + ".fuse0", cfg.c1 + cfg.c_in, cfg.c_out, 1, 1, 0,
                                false, rng);
    return w;
}

BevGrid rde_forward(const BevGrid& grid, const RdeWeights& w) {
    grid.spec.validate();
    if (grid.spec.h != w.grid_h || grid.spec.w != w.grid_w) {
        throw ConfigError("rde: grid size does not match the weights");
    }
    if (grid.features.dim() != 3 || grid.features.size(2) != w.cfg.c_in) {
        throw ConfigError("rde: input channel count mismatch");
    }
    const long h = grid.spec.h, wd = grid.spec.w;

    Tensor b0 = permute(grid.features, {2, 0, 1});  // CHW
    Tensor b1 = w.down1.forward(b0);
    Tensor b2 = w.down2.forward(b1);
    Tensor b3 = w.down3.forward(b2);

    // global self-attention at the coarsest scale
    const long hc = h / 8, wc = wd / 8;
    Tensor tokens = reshape(permute(b3, {1, 2, 0}), {hc * wc, w.cfg.c3});
    tokens = add(tokens, w.pos_table);
    for (const auto& blk : w.attn) tokens = blk.forward(tokens);
    Tensor bf = permute(reshape(tokens, {hc, wc, w.cfg.c3}), {2, 0, 1});

    Tensor up2 = w.fuse2.forward(concat({upsample2x(bf), b2}, 0));
    Tensor up1 = w.fuse1.forward(concat({upsample2x(up2), b1}, 0));
    Tensor out = w.fuse0.forward(concat({upsample2x(up1), b0}, 0));

    BevGrid dense;
    dense.spec = grid.spec;
    dense.nonempty = grid.nonempty;
    dense.features = permute(out, {1, 2, 0});
    return dense;
}

}  // namespace rcdet
