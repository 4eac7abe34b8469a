#pragma once

#include "rcdet/pos_embed.hpp"

namespace rcdet {

struct QueryState {
    Tensor features;  // [n x dim]
    Tensor refs;      // [n x 3], normalized, clamped to [0,1]
    int layer_index = 0;
};

// One sequential-fusion layer: f1 = query self-attention + radar
// cross-attention + FFN, f2 = image cross-attention + FFN, then the reference
// offset head. PEs enter as query augmentations only; every sub-block is
// residual and ends in layer norm.
struct DecoderLayerWeights {
    MultiHeadAttention self_attn;
    LayerNormParams ln_self;
    MultiHeadAttention cross_radar;
    LayerNormParams ln_radar;
    FeedForward ffn1;
    LayerNormParams ln_ffn1;
    MultiHeadAttention cross_image;
    LayerNormParams ln_image;
    FeedForward ffn2;
    LayerNormParams ln_ffn2;
    Linear offset_head;  // dim -> 3

    static DecoderLayerWeights create(ParamStore& store, const std::string& prefix, long dim,
                                      long heads, long ffn_mult, Rng& rng);
};

struct DecoderStack {
    std::vector<DecoderLayerWeights> layers;
    long inference_layers = 3;

    static DecoderStack create(ParamStore& store, const std::string& prefix, long dim, long heads,
                               long ffn_mult, long train_layers, long inference_layers, Rng& rng);
};

enum class RunMode { kTrain, kInfer };

// Learnable refs uniform on [0,1]^3, zero-initialized features.
QueryState init_queries(ParamStore& store, long n, long dim, Rng& rng);
// Fresh layer-0 state reusing the registered refs parameter.
QueryState reset_queries(const ParamStore& store, long n, long dim);

QueryState decoder_layer(const QueryState& state, const Tensor& radar_tokens,
                         const Tensor& image_tokens, const DecoderLayerWeights& w,
                         const SharedPeEncoders& enc);

// Train mode executes every layer, inference mode exactly inference_layers;
// both return the visited states in order, so pruning is pure truncation.
std::vector<QueryState> run_stack(const QueryState& init, const Tensor& radar_tokens,
                                  const Tensor& image_tokens, const DecoderStack& stack,
                                  const SharedPeEncoders& enc, RunMode mode);

// Smallest pairwise distance between reference points; a shrinking value over
// the layers flags queries collapsing onto the same region.
double min_pairwise_ref_distance(const QueryState& state);

}  // namespace rcdet
