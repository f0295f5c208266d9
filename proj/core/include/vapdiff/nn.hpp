#pragma once

#include <string>
#include <vector>

#include "vapdiff/tensor.hpp"

namespace vapdiff {

// Ordered, named view of a module's trainable tensors. Order is construction
// order and is part of the checkpoint format.
struct ParamRef {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<ParamRef>;

struct LinearLayer {
    Tensor w;  // (in, out)
    Tensor b;  // (1, out)

    void init(int in_dim, int out_dim, RandomStream& rng);
    void init_zero(int in_dim, int out_dim);
    Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNormLayer {
    Tensor gain;
    Tensor bias;

    void init(int dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct MultiheadAttention {
    LinearLayer wq, wk, wv, wo;
    int heads = 1;

    void init(int dim, int n_heads, RandomStream& rng);
    Tensor self_attend(const Tensor& x) const;
    Tensor cross_attend(const Tensor& queries, const Tensor& keys_values) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
struct TransformerBlock {
    LayerNormLayer ln1, ln2;
    MultiheadAttention attn;
    LinearLayer fc1, fc2;

    void init(int dim, int n_heads, int mlp_hidden, RandomStream& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Classic sin/cos positional features for a scalar step index.
std::vector<double> sinusoidal_features(double position, int dim);

struct AdamOptimizer {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(const ParamList& params);
    void zero_grad(const ParamList& params);

    // Moment buffers, keyed by parameter order. Serialized with checkpoints.
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::vector<Slot> slots;
    int64_t t = 0;
};

// Exponential moving average of parameter values, for optional sampling-time
// weights. Off by default in configs.
struct EmaTracker {
    double decay = 0.999;
    std::vector<std::vector<double>> shadow;

    void update(const ParamList& params);
    void copy_to(const ParamList& params) const;
    bool initialized() const { return !shadow.empty(); }
};

}  // namespace vapdiff
