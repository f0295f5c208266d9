#include "vapdiff/nn.hpp"

#include <cmath>

namespace vapdiff {

void LinearLayer::init(int in_dim, int out_dim, RandomStream& rng) {
    w = Tensor::randn(in_dim, out_dim, rng, 1.0 / std::sqrt(static_cast<double>(in_dim)), true);
    b = Tensor::zeros(1, out_dim, true);
}

void LinearLayer::init_zero(int in_dim, int out_dim) {
    w = Tensor::zeros(in_dim, out_dim, true);
    b = Tensor::zeros(1, out_dim, true);
}

void LinearLayer::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

void LayerNormLayer::init(int dim) {
    gain = Tensor::full(1, dim, 1.0, true);
    bias = Tensor::zeros(1, dim, true);
}

void LayerNormLayer::collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
}

void MultiheadAttention::init(int dim, int n_heads, RandomStream& rng) {
    heads = n_heads;
    wq.init(dim, dim, rng);
    wk.init(dim, dim, rng);
    wv.init(dim, dim, rng);
    wo.init(dim, dim, rng);
}

Tensor MultiheadAttention::self_attend(const Tensor& x) const {
    return wo(attention(wq(x), wk(x), wv(x), heads));
}

Tensor MultiheadAttention::cross_attend(const Tensor& queries, const Tensor& keys_values) const {
    return wo(attention(wq(queries), wk(keys_values), wv(keys_values), heads));
}

void MultiheadAttention::collect(ParamList& out, const std::string& prefix) const {
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
}

void TransformerBlock::init(int dim, int n_heads, int mlp_hidden, RandomStream& rng) {
    ln1.init(dim);
    ln2.init(dim);
    attn.init(dim, n_heads, rng);
    fc1.init(dim, mlp_hidden, rng);
    fc2.init(mlp_hidden, dim, rng);
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
    Tensor h = add(x, attn.self_attend(ln1(x)));
    return add(h, fc2(gelu(fc1(ln2(h)))));
}

void TransformerBlock::collect(ParamList& out, const std::string& prefix) const {
    ln1.collect(out, prefix + ".ln1");
    ln2.collect(out, prefix + ".ln2");
    attn.collect(out, prefix + ".attn");
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
}

std::vector<double> sinusoidal_features(double position, int dim) {
    std::vector<double> out(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     std::max(1, half - 1));
        out[i] = std::sin(position * freq);
        out[half + i] = std::cos(position * freq);
    }
    if (dim % 2 == 1) {
        out[dim - 1] = 0.0;
    }
    return out;
}

void AdamOptimizer::step(const ParamList& params) {
    if (slots.size() != params.size()) {
        slots.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            slots[i].m.assign(params[i].tensor.size(), 0.0);
            slots[i].v.assign(params[i].tensor.size(), 0.0);
        }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].tensor;
        const auto& g = p.grad();
        auto& m = slots[i].m;
        auto& v = slots[i].v;
        auto& val = p.mutable_value();
        for (size_t j = 0; j < val.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void AdamOptimizer::zero_grad(const ParamList& params) {
    for (const auto& p : params) {
        const_cast<Tensor&>(p.tensor).zero_grad();
    }
}

void EmaTracker::update(const ParamList& params) {
    if (shadow.size() != params.size()) {
        shadow.clear();
        shadow.reserve(params.size());
        for (const auto& p : params) {
            shadow.push_back(p.tensor.value());
        }
        return;
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& val = params[i].tensor.value();
        auto& sh = shadow[i];
        for (size_t j = 0; j < sh.size(); ++j) {
            sh[j] = decay * sh[j] + (1.0 - decay) * val[j];
        }
    }
}

void EmaTracker::copy_to(const ParamList& params) const {
    for (size_t i = 0; i < params.size(); ++i) {
        const_cast<Tensor&>(params[i].tensor).mutable_value() = shadow[i];
    }
}

}  // namespace vapdiff
