#include "th2/nn.hpp"

#include <cmath>

#include "th2/errors.hpp"

namespace th2::nn {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
    std::vector<double> w(in * out);
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : w) x = sd * rng.normal();
    return {Tensor({in, out}, std::move(w)), Tensor::zeros({out})};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::zero() {
    for (double& x : weight.mutable_data()) x = 0.0;
    for (double& x : bias.mutable_data()) x = 0.0;
}

LayerNorm LayerNorm::init(std::size_t width) { return {Tensor::full({width}, 1.0), Tensor::zeros({width})}; }

MultiHeadAttention MultiHeadAttention::init(std::size_t query_width, std::size_t kv_width, std::size_t width,
                                            std::size_t n_heads, Rng& rng) {
    if (n_heads == 0 || width % n_heads) throw ConfigError("attention width must split evenly across heads");
    MultiHeadAttention m;
    m.q = Linear::init(query_width, width, rng);
    m.k = Linear::init(kv_width, width, rng);
    m.v = Linear::init(kv_width, width, rng);
    m.o = Linear::init(width, width, rng);
    m.n_heads = n_heads;
    return m;
}

Tensor MultiHeadAttention::operator()(const Tensor& query_in, const Tensor& key_in, const Tensor& value_in,
                                      AttentionTrace* trace) const {
    const Tensor qs = q(query_in);
    const Tensor ks = k(key_in);
    const Tensor vs = v(value_in);
    const std::size_t width = qs.dim(1);
    const std::size_t dh = width / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const Tensor qh = slice(qs, 1, h * dh, (h + 1) * dh);
        const Tensor kh = slice(ks, 1, h * dh, (h + 1) * dh);
        const Tensor vh = slice(vs, 1, h * dh, (h + 1) * dh);
        const Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
        if (trace) trace->weights.push_back(weights.detach());
        heads.push_back(matmul(weights, vh));
    }
    return o(n_heads == 1 ? heads[0] : concat(heads, 1));
}

void MultiHeadAttention::collect(std::vector<Tensor>& out) const {
    q.collect(out);
    k.collect(out);
    v.collect(out);
    o.collect(out);
}

Mlp Mlp::init(std::size_t width, std::size_t hidden, std::size_t out, Rng& rng) {
    return {Linear::init(width, hidden, rng), Linear::init(hidden, out, rng)};
}

}  // namespace th2::nn
