#pragma once

#include "rcdet/geometry.hpp"
#include "rcdet/nn.hpp"

namespace rcdet {

struct SinCosEncoder {
    long num_freqs = 8;
    double base = 10000.0;

    long out_dim(long in_cols) const { return in_cols * 2 * num_freqs; }
    Tensor encode(const Tensor& x) const { return sincos(x, num_freqs, base); }
};

// The two embedding MLPs of the token generator. The same weight instances
// also encode query positions, so token PEs and query PEs agree bit-for-bit
// on identical inputs.
struct SharedPeEncoders {
    SinCosEncoder enc2d;
    Mlp phi_im;  // (3 * depth_count) normalized world coords -> embed_dim
    Mlp phi_ra;  // sine-cosine vector -> embed_dim
    long embed_dim = 0;
    long depth_count = 0;

    static SharedPeEncoders create(ParamStore& store, const std::string& prefix, long embed_dim,
                                   long num_freqs, long depth_count, Rng& rng);

    Tensor apply_phi_im(const Tensor& coords) const;  // [n x 3*depth_count]
    Tensor apply_phi_ra(const Tensor& xy) const;      // [n x 2]
};

// One PE row per feature-map token, ordered row-major over (v, u). Each token
// lifts `depth_count` frustum points to world space, normalizes them by the
// range and feeds the concatenation to phi_im.
Tensor image_token_pe(const CameraCalib& calib, const DepthBins& bins, const WorldRange& range,
                      const SharedPeEncoders& enc);

// One PE row per BEV cell, ordered row-major over (h, w). Cell centers are
// encoded as ((w+0.5)/W, (h+0.5)/H) so a query placed at a cell center feeds
// phi_ra the identical bits.
Tensor radar_token_pe(long h_r, long w_r, const SharedPeEncoders& enc);

struct QueryPe {
    Tensor pe_2d;  // phi_ra(sincos(refs.xy)); independent of z
    Tensor pe_3d;  // phi_im(refs tiled depth_count times)
};

QueryPe query_pe(const Tensor& refs, const SharedPeEncoders& enc);

}  // namespace rcdet
