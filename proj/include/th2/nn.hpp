#pragma once

#include <cstddef>
#include <vector>

#include "th2/rng.hpp"
#include "th2/tensor.hpp"

namespace th2::nn {

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    // x: [n, in] -> [n, out]
    Tensor operator()(const Tensor& x) const;
    void zero();
    void collect(std::vector<Tensor>& out) const { out.insert(out.end(), {weight, bias}); }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;
    double eps = 1e-6;

    static LayerNorm init(std::size_t width);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
    void collect(std::vector<Tensor>& out) const { out.insert(out.end(), {gain, bias}); }
};

// Row-stochastic weights of one head, kept for inspection.
struct AttentionTrace {
    std::vector<Tensor> weights;
};

struct MultiHeadAttention {
    Linear q, k, v, o;
    std::size_t n_heads = 1;

    // query_in/key_in/value_in share a width of q.weight rows.
    static MultiHeadAttention init(std::size_t query_width, std::size_t kv_width, std::size_t width,
                                   std::size_t n_heads, Rng& rng);
    Tensor operator()(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in,
                      AttentionTrace* trace = nullptr) const;
    void collect(std::vector<Tensor>& out) const;
};

struct Mlp {
    Linear up, down;

    static Mlp init(std::size_t width, std::size_t hidden, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
    void collect(std::vector<Tensor>& out) const {
        up.collect(out);
        down.collect(out);
    }
};

}  // namespace th2::nn
