#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rcdet/ops.hpp"
#include "rcdet/rng.hpp"
#include "rcdet/tensor.hpp"

namespace rcdet {

// Named registry of trainable tensors; owns the canonical order used by the
// optimizer and the checkpoint format.
class ParamStore {
  public:
    Tensor add(const std::string& name, Tensor t);
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    Tensor find(const std::string& name) const;  // undefined Tensor when absent
    long total_count() const;
    void zero_grad();

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Xavier-uniform leaf parameter.
Tensor xavier_param(ParamStore& store, const std::string& name, Shape shape, long fan_in,
                    long fan_out, Rng& rng, double gain = 1.0);
Tensor zeros_param(ParamStore& store, const std::string& name, Shape shape);

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [out], undefined when bias-free

    static Linear create(ParamStore& store, const std::string& prefix, long in_f, long out_f,
                         Rng& rng, bool bias = true, double gain = 1.0);
    static Linear create_zero(ParamStore& store, const std::string& prefix, long in_f, long out_f,
                              bool bias = true);
    Tensor forward(const Tensor& x) const { return linear(x, w, b); }
};

struct Mlp {
    std::vector<Linear> layers;  // relu between layers, last layer linear

    static Mlp create(ParamStore& store, const std::string& prefix, const std::vector<long>& widths,
                      Rng& rng);
    Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gamma;
    Tensor beta;

    static LayerNormParams create(ParamStore& store, const std::string& prefix, long width);
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

// Scaled dot-product attention with per-head slicing and an output projection.
struct MultiHeadAttention {
    long heads = 1;
    Linear wq, wk, wv, wo;

    static MultiHeadAttention create(ParamStore& store, const std::string& prefix, long dim,
                                     long heads, Rng& rng);
    Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v) const;
};

struct FeedForward {
    Linear fc1, fc2;

    static FeedForward create(ParamStore& store, const std::string& prefix, long dim, long hidden,
                              Rng& rng);
    Tensor forward(const Tensor& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

}  // namespace rcdet
