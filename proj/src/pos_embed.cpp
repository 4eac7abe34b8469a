#include "rcdet/pos_embed.hpp"

namespace rcdet {

SharedPeEncoders SharedPeEncoders::create(ParamStore& store, const std::string& prefix,
                                          long embed_dim, long num_freqs, long depth_count,
                                          Rng& rng) {
    SharedPeEncoders enc;
    enc.enc2d.num_freqs = num_freqs;
    enc.embed_dim = embed_dim;
    enc.depth_count = depth_count;
    const long hidden = 4 * embed_dim;
    enc.phi_im = Mlp::create(store, prefix + ".phi_im", {3 * depth_count, hidden, embed_dim}, rng);
    enc.phi_ra = Mlp::create(store, prefix + ".phi_ra", {enc.enc2d.out_dim(2), hidden, embed_dim}, rng);
    return enc;
}

Tensor SharedPeEncoders::apply_phi_im(const Tensor& coords) const {
    if (coords.dim() != 2 || coords.size(1) != 3 * depth_count) {
        throw DimError("phi_im: expected [n x " + std::to_string(3 * depth_count) + "] input");
    }
    return phi_im.forward(coords);
}

Tensor SharedPeEncoders::apply_phi_ra(const Tensor& xy) const {
    if (xy.dim() != 2 || xy.size(1) != 2) throw DimError("phi_ra: expected [n x 2] input");
    return phi_ra.forward(enc2d.encode(xy));
}

Tensor image_token_pe(const CameraCalib& calib, const DepthBins& bins, const WorldRange& range,
                      const SharedPeEncoders& enc) {
    calib.validate();
    bins.validate();
    if (bins.count() != enc.depth_count) {
        throw ConfigError("image_token_pe: depth bin count does not match the encoder");
    }
    const long hf = calib.feature_h();
    const long wf = calib.feature_w();
    const long d = bins.count();
    std::vector<double> coords;
    coords.reserve(static_cast<std::size_t>(hf * wf * 3 * d));
    for (long v = 0; v < hf; ++v) {
        for (long u = 0; u < wf; ++u) {
            const double u_px = feature_pixel(u, calib.feature_stride);
            const double v_px = feature_pixel(v, calib.feature_stride);
            for (const auto& fp : frustum_points(u_px, v_px, bins)) {
                const Eigen::Vector3d wpt = frustum_to_world(calib, fp);
                const Eigen::Vector3d n = normalize_ref(wpt, range);
                coords.push_back(n(0));
                coords.push_back(n(1));
                coords.push_back(n(2));
            }
        }
    }
    return enc.apply_phi_im(Tensor::from_data({hf * wf, 3 * d}, std::move(coords)));
}

Tensor radar_token_pe(long h_r, long w_r, const SharedPeEncoders& enc) {
    if (h_r < 1 || w_r < 1) throw ConfigError("radar_token_pe: grid must be non-empty");
    std::vector<double> xy;
    xy.reserve(static_cast<std::size_t>(h_r * w_r * 2));
    for (long h = 0; h < h_r; ++h) {
        for (long w = 0; w < w_r; ++w) {
            xy.push_back((static_cast<double>(w) + 0.5) / static_cast<double>(w_r));
            xy.push_back((static_cast<double>(h) + 0.5) / static_cast<double>(h_r));
        }
    }
    return enc.apply_phi_ra(Tensor::from_data({h_r * w_r, 2}, std::move(xy)));
}

QueryPe query_pe(const Tensor& refs, const SharedPeEncoders& enc) {
    if (refs.dim() != 2 || refs.size(1) != 3) throw DimError("query_pe: expected [n x 3] refs");
    QueryPe out;
    out.pe_2d = enc.apply_phi_ra(slice(refs, 1, 0, 2));
    std::vector<Tensor> tiles(static_cast<std::size_t>(enc.depth_count), refs);
    out.pe_3d = enc.apply_phi_im(concat(tiles, 1));
    return out;
}

}  // namespace rcdet
