#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rcdet/geometry.hpp"
#include "rcdet/nn.hpp"

namespace rcdet {

// Radar returns, one row per point: x, y, z [m, world], vx, vy [m/s,
// ego-motion compensated], t_offset [s, <= 0 for accumulated sweeps].
// All-zero rows are padding and are ignored by pillarize.
struct RadarPoints {
    static constexpr int kColumns = 6;
    Eigen::Matrix<double, Eigen::Dynamic, kColumns> pts;

    long count() const { return pts.rows(); }
};

struct BevGridSpec {
    long h = 32;
    long w = 32;
    double cell_size = 3.2;
    double origin_x = -51.2;
    double origin_y = -51.2;

    static BevGridSpec from_range(const WorldRange& range, long h, long w);
    void validate() const;
    // Row/col of a world point; false when outside the grid.
    bool cell_of(double x, double y, long& row, long& col) const;
    double center_x(long col) const { return origin_x + (static_cast<double>(col) + 0.5) * cell_size; }
    double center_y(long row) const { return origin_y + (static_cast<double>(row) + 0.5) * cell_size; }
};

struct BevGrid {
    BevGridSpec spec;
    Tensor features;  // [h x w x c]
    std::vector<std::uint8_t> nonempty;  // row-major h*w

    double empty_fraction() const;
};

// Per-point MLP max-pooled per cell. Input channels are the point channels
// with (x, y) replaced by offsets from the cell center; absolute planar
// position is carried by the cell itself.
struct PillarNet {
    Mlp mlp;
    long point_channels = 6;  // 5 drops the time offset
    long out_channels = 16;

    static PillarNet create(ParamStore& store, const std::string& prefix, long point_channels,
                            long hidden, long out_channels, Rng& rng);
};

BevGrid pillarize(const RadarPoints& points, const BevGridSpec& spec, const PillarNet& net);

struct RdeConfig {
    long c_in = 16;
    long c1 = 32;
    long c2 = 64;
    long c3 = 64;
    long c_out = 64;
    long attn_heads = 4;
    long attn_layers = 2;
    long ffn_mult = 2;
};

struct ConvBlock {
    Tensor w;  // [cout x cin x k x k]
    Tensor b;  // [cout]
    LayerNormParams ln;
    long stride = 1;
    long pad = 0;
    bool norm_act = true;

    static ConvBlock create(ParamStore& store, const std::string& prefix, long cin, long cout,
                            long k, long stride, long pad, bool norm_act, Rng& rng);
    Tensor forward(const Tensor& x_chw) const;
};

struct AttnBlock {
    MultiHeadAttention mha;
    LayerNormParams ln1;
    FeedForward ffn;
    LayerNormParams ln2;

    static AttnBlock create(ParamStore& store, const std::string& prefix, long dim, long heads,
                            long ffn_mult, Rng& rng);
    Tensor forward(const Tensor& tokens) const;
};

// Downsample-then-upsample BEV densifier: three stride-2 convs, global
// self-attention with a learned per-cell embedding at the coarsest map, and
// skip-fused upsampling back to the input resolution.
struct RdeWeights {
    RdeConfig cfg;
    long grid_h = 0, grid_w = 0;
    ConvBlock down1, down2, down3;
    Tensor pos_table;  // [(h/8)*(w/8) x c3]
    std::vector<AttnBlock> attn;
    ConvBlock fuse2, fuse1, fuse0;  // 1x1 skip-fusion convs, coarse to fine

    static RdeWeights create(ParamStore& store, const std::string& prefix, const RdeConfig& cfg,
                             long grid_h, long grid_w, Rng& rng);
};

BevGrid rde_forward(const BevGrid& grid, const RdeWeights& w);

}  // namespace rcdet
