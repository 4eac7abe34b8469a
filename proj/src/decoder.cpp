#include "rcdet/decoder.hpp"

#include <cmath>
#include <limits>

namespace rcdet {

DecoderLayerWeights DecoderLayerWeights::create(ParamStore& store, const std::string& prefix,
                                                long dim, long heads, long ffn_mult, Rng& rng) {
    DecoderLayerWeights w;
    w.self_attn = MultiHeadAttention::create(store, prefix + ".self", dim, heads, rng);
    w.ln_self = LayerNormParams::create(store, prefix + ".ln_self", dim);
    w.cross_radar = MultiHeadAttention::create(store, prefix + ".xradar", dim, heads, rng);
    w.ln_radar = LayerNormParams::create(store, prefix + ".ln_xradar", dim);
    w.ffn1 = FeedForward::create(store, prefix + ".ffn1", dim, dim * ffn_mult, rng);
    w.ln_ffn1 = LayerNormParams::create(store, prefix + ".ln_ffn1", dim);
    w.cross_image = MultiHeadAttention::create(store, prefix + ".ximage", dim, heads, rng);
    w.ln_image = LayerNormParams::create(store, prefix + ".ln_ximage", dim);
    w.ffn2 = FeedForward::create(store, prefix + ".ffn2", dim, dim * ffn_mult, rng);
    w.ln_ffn2 = LayerNormParams::create(store, prefix + ".ln_ffn2", dim);
    // small initial offsets keep early reference updates gentle
    w.offset_head = Linear::create(store, prefix + ".offset", dim, 3, rng, true, 0.1);
    return w;
}

DecoderStack DecoderStack::create(ParamStore& store, const std::string& prefix, long dim,
                                  long heads, long ffn_mult, long train_layers,
                                  long inference_layers, Rng& rng) {
    if (train_layers < 1) throw ConfigError("decoder: need at least one layer");
    if (inference_layers < 1 || inference_layers > train_layers) {
        throw ConfigError("decoder: inference layers must be in [1, train layers]");
    }
    DecoderStack stack;
    stack.inference_layers = inference_layers;
    for (long i = 0; i < train_layers; ++i) {
        stack.layers.push_back(
            DecoderLayerWeights::create(store, prefix + ".layer" + std::to_string(i), dim, heads,
                                        ffn_mult, rng));
    }
    return stack;
}

QueryState init_queries(ParamStore& store, long n, long dim, Rng& rng) {
    if (n < 1) throw ConfigError("queries: need n >= 1");
    std::vector<double> refs(static_cast<std::size_t>(n * 3));
    for (double& v : refs) v = rng.uniform();
    QueryState state;
    state.refs = store.add("queries.refs", Tensor::from_data({n, 3}, std::move(refs), true));
    state.features = Tensor::zeros({n, dim});
    state.layer_index = 0;
    return state;
}

QueryState reset_queries(const ParamStore& store, long n, long dim) {
    QueryState state;
    state.refs = store.find("queries.refs");
    if (!state.refs.defined()) throw ConfigError("queries: refs parameter missing from the store");
    if (state.refs.size(0) != n) throw ConfigError("queries: query count mismatch");
    state.features = Tensor::zeros({n, dim});
    state.layer_index = 0;
    return state;
}

QueryState decoder_layer(const QueryState& state, const Tensor& radar_tokens,
                         const Tensor& image_tokens, const DecoderLayerWeights& w,
                         const SharedPeEncoders& enc) {
    if (state.features.size(1) != radar_tokens.size(1) ||
        state.features.size(1) != image_tokens.size(1)) {
        throw ConfigError("decoder layer: token embedding dim does not match the queries");
    }
    const QueryPe pe = query_pe(state.refs, enc);

    Tensor x = state.features;
    // f1: self-attention (PE_2d on q/k), radar cross-attention, FFN
    Tensor q_self = add(x, pe.pe_2d);
    x = w.ln_self.forward(add(x, w.self_attn.forward(q_self, q_self, x)));
    x = w.ln_radar.forward(add(x, w.cross_radar.forward(add(x, pe.pe_2d), radar_tokens, radar_tokens)));
    x = w.ln_ffn1.forward(add(x, w.ffn1.forward(x)));
    // f2: image cross-attention (PE_3d on q), FFN
    x = w.ln_image.forward(add(x, w.cross_image.forward(add(x, pe.pe_3d), image_tokens, image_tokens)));
    x = w.ln_ffn2.forward(add(x, w.ffn2.forward(x)));

    QueryState next;
    next.features = x;
    next.refs = clamp(add(state.refs, w.offset_head.forward(x)), 0.0, 1.0);
    next.layer_index = state.layer_index + 1;
    return next;
}

double min_pairwise_ref_distance(const QueryState& state) {
    const long n = state.refs.size(0);
    const auto& r = state.refs.data();
    double best = std::numeric_limits<double>::infinity();
    for (long i = 0; i < n; ++i) {
        for (long j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (long c = 0; c < 3; ++c) {
                const double d = r[static_cast<std::size_t>(i * 3 + c)] -
                                 r[static_cast<std::size_t>(j * 3 + c)];
                d2 += d * d;
            }
            best = std::min(best, d2);
        }
    }
    return n > 1 ? std::sqrt(best) : 0.0;
}

std::vector<QueryState> run_stack(const QueryState& init, const Tensor& radar_tokens,
                                  const Tensor& image_tokens, const DecoderStack& stack,
                                  const SharedPeEncoders& enc, RunMode mode) {
    const long n_layers = mode == RunMode::kTrain ? static_cast<long>(stack.layers.size())
                                                  : stack.inference_layers;
    std::vector<QueryState> states;
    states.reserve(static_cast<std::size_t>(n_layers));
    QueryState state = init;
    for (long l = 0; l < n_layers; ++l) {
        state = decoder_layer(state, radar_tokens, image_tokens,
                              stack.layers[static_cast<std::size_t>(l)], enc);
        states.push_back(state);
    }
    return states;
}

}  // namespace rcdet
