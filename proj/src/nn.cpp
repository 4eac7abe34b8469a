#include "rcdet/nn.hpp"

#include <cmath>

namespace rcdet {

Tensor ParamStore::add(const std::string& name, Tensor t) {
    for (const auto& [existing, _] : items_) {
        if (existing == name) throw ConfigError("duplicate parameter name: " + name);
    }
    items_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    return Tensor();
}

long ParamStore::total_count() const {
    long n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
}

Tensor xavier_param(ParamStore& store, const std::string& name, Shape shape, long fan_in,
                    long fan_out, Rng& rng, double gain) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> vals(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : vals) v = rng.uniform(-bound, bound);
    return store.add(name, Tensor::from_data(std::move(shape), std::move(vals), true));
}

Tensor zeros_param(ParamStore& store, const std::string& name, Shape shape) {
    return store.add(name, Tensor::zeros(std::move(shape), true));
}

Linear Linear::create(ParamStore& store, const std::string& prefix, long in_f, long out_f, Rng& rng,
                      bool bias, double gain) {
    Linear l;
    l.w = xavier_param(store, prefix + ".w", {in_f, out_f}, in_f, out_f, rng, gain);
    if (bias) l.b = zeros_param(store, prefix + ".b", {out_f});
    return l;
}

Linear Linear::create_zero(ParamStore& store, const std::string& prefix, long in_f, long out_f,
                           bool bias) {
    Linear l;
    l.w = zeros_param(store, prefix + ".w", {in_f, out_f});
    if (bias) l.b = zeros_param(store, prefix + ".b", {out_f});
    return l;
}

Mlp Mlp::create(ParamStore& store, const std::string& prefix, const std::vector<long>& widths,
                Rng& rng) {
    if (widths.size() < 2) throw ConfigError("Mlp: need at least input and output widths");
    Mlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        m.layers.push_back(Linear::create(store, prefix + ".fc" + std::to_string(i), widths[i],
                                          widths[i + 1], rng));
    }
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

LayerNormParams LayerNormParams::create(ParamStore& store, const std::string& prefix, long width) {
    LayerNormParams ln;
    ln.gamma = store.add(prefix + ".gamma", Tensor::full({width}, 1.0, true));
    ln.beta = zeros_param(store, prefix + ".beta", {width});
    return ln;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& prefix,
                                              long dim, long heads, Rng& rng) {
    if (heads < 1 || dim % heads != 0) {
        throw ConfigError("attention: embedding dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
    }
    MultiHeadAttention a;
    a.heads = heads;
    a.wq = Linear::create(store, prefix + ".wq", dim, dim, rng);
    a.wk = Linear::create(store, prefix + ".wk", dim, dim, rng);
    a.wv = Linear::create(store, prefix + ".wv", dim, dim, rng);
    a.wo = Linear::create(store, prefix + ".wo", dim, dim, rng);
    return a;
}

FeedForward FeedForward::create(ParamStore& store, const std::string& prefix, long dim, long hidden,
                                Rng& rng) {
    FeedForward f;
    f.fc1 = Linear::create(store, prefix + ".fc1", dim, hidden, rng);
    f.fc2 = Linear::create(store, prefix + ".fc2", hidden, dim, rng);
    return f;
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v) const {
    if (q.dim() != 2 || k.dim() != 2 || v.dim() != 2) {
        throw DimError("attention: expected 2D [rows x dim] inputs");
    }
    const long dim = q.size(1);
    if (dim % heads != 0) throw ConfigError("attention: dim not divisible by heads");
    if (k.size(1) != dim || v.size(1) != dim) throw DimError("attention: dim mismatch");
    if (k.size(0) != v.size(0)) throw DimError("attention: key/value row mismatch");
    const long dh = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor qp = wq.forward(q);
    Tensor kp = wk.forward(k);
    Tensor vp = wv.forward(v);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (long h = 0; h < heads; ++h) {
        Tensor qh = slice(qp, 1, h * dh, dh);
        Tensor kh = slice(kp, 1, h * dh, dh);
        Tensor vh = slice(vp, 1, h * dh, dh);
        Tensor logits = mul_scalar(matmul(qh, transpose(kh)), scale);
        Tensor attn = softmax(logits, 1);
        outs.push_back(matmul(attn, vh));
    }
    return wo.forward(concat(outs, 1));
}

}  // namespace rcdet
