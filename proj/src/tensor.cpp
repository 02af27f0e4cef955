#include "th2/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "th2/errors.hpp"

namespace th2 {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

namespace {

void check_finite(std::span<const double> values, const char* where) {
    // x * 0 is NaN exactly when x is inf or NaN; one branch per tensor
    double probe = 0.0;
    for (double v : values) probe += v * 0.0;
    if (probe != 0.0 || std::isnan(probe)) throw InputError(std::string("non-finite value in ") + where);
}

using NodePtr = std::shared_ptr<detail::Node>;

// Builds an op result; history is attached only when some input needs grad.
Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::vector<NodePtr> parents,
                   std::function<void(detail::Node&)> backward) {
    check_finite(data, op);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor::from_node(std::move(node));
}

// outer/axis/inner decomposition of a shape around one axis
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                             " elements");
    }
    check_finite(data, "tensor construction");
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return node_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

// ---- Tape -----------------------------------------------------------------

Tape Tape::record(const Tensor& loss) {
    Tape tape;
    if (!loss.requires_grad()) return tape;
    std::unordered_set<const detail::Node*> seen;
    // Iterative post-order DFS: (node, next parent to visit).
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodePtr parent = node->parents[next++];
            if (parent->requires_grad && seen.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

bool Tape::topologically_ordered() const {
    std::unordered_set<const detail::Node*> earlier;
    for (const auto& node : order_) {
        for (const auto& parent : node->parents) {
            if (parent->requires_grad && !earlier.count(parent.get())) return false;
        }
        earlier.insert(node.get());
    }
    return true;
}

void Tape::backward(const Tensor& loss) const {
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    if (order_.empty() || order_.back() != loss.node()) throw ContractError("loss is not the root of this tape");
    // Interior gradients are per-pass; leaves accumulate across passes.
    for (const auto& node : order_) {
        if (node->backward) node->grad.clear();
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node& node = **it;
        if (node.backward && !node.grad.empty()) node.backward(node);
    }
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any tensor requiring grad");
    Tape::record(loss).backward(loss);
}

// ---- elementwise ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    auto A = a.data();
    auto B = b.data();
    if (n < 16) {
        // narrow output: contiguous dot products against a transposed copy of b
        std::vector<double> bt(n * k);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = &A[i * k];
            for (std::size_t j = 0; j < n; ++j) {
                const double* bcol = &bt[j * k];
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bcol[p];
                out[i * n + j] = acc;
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            double* orow = &out[i * n];
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = A[i * k + p];
                const double* brow = &B[p * n];
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
        }
    }
    NodePtr pa = a.node(), pb = b.node();
    return make_result({m, n}, std::move(out), "matmul", {pa, pb}, [pa, pb, m, k, n](detail::Node& self) {
        const auto& G = self.grad;
        if (pa->requires_grad) {
            auto& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * pb->data[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = pa->data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
                }
        }
    });
}

namespace {

enum class Combine { Add, Sub };

Tensor add_like(const Tensor& a, const Tensor& b, Combine kind) {
    const char* name = kind == Combine::Add ? "add" : "sub";
    const double sign = kind == Combine::Add ? 1.0 : -1.0;
    bool broadcast = false;
    if (a.shape() != b.shape()) {
        if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
            broadcast = true;
        } else {
            throw DimensionError(std::string(name) + " " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
        }
    }
    const std::size_t n = a.numel();
    const std::size_t width = b.numel();
    std::vector<double> out(n);
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i] + sign * B[broadcast ? i % width : i];
    NodePtr pa = a.node(), pb = b.node();
    return make_result(a.shape(), std::move(out), name, {pa, pb}, [pa, pb, n, width, sign, broadcast](detail::Node& self) {
        if (pa->requires_grad) {
            auto& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gb[broadcast ? i % width : i] += sign * self.grad[i];
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_like(a, b, Combine::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_like(a, b, Combine::Sub); }

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("mul " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    NodePtr pa = a.node(), pb = b.node();
    return make_result(a.shape(), std::move(out), "mul", {pa, pb}, [pa, pb, n](detail::Node& self) {
        if (pa->requires_grad) {
            auto& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * pa->data[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v *= factor;
    NodePtr px = x.node();
    return make_result(x.shape(), std::move(out), "scale", {px}, [px, factor](detail::Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

Tensor abs(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x[i]);
    NodePtr px = x.node();
    return make_result(x.shape(), std::move(out), "abs", {px}, [px](detail::Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = px->data[i];
            g[i] += (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)) * self.grad[i];
        }
    });
}

Tensor gelu(const Tensor& x) {
    // exact form: x * Phi(x)
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * x[i] * std::erfc(-x[i] / std::numbers::sqrt2);
    NodePtr px = x.node();
    return make_result(x.shape(), std::move(out), "gelu", {px}, [px](detail::Node& self) {
        auto& g = px->grad_buffer();
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = px->data[i];
            const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g[i] += (cdf + v * pdf) * self.grad[i];
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    NodePtr px = x.node();
    return make_result(Shape{}, {total}, "sum", {px}, [px](detail::Node& self) {
        auto& g = px->grad_buffer();
        for (double& gi : g) gi += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ContractError("mean of empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- row ops ------------------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() < 1 || x.numel() == 0) throw DimensionError("softmax_rows on " + shape_str(x.shape()));
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = &x.data()[r * n];
        double* o = &out[r * n];
        const double peak = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - peak));
        for (std::size_t j = 0; j < n; ++j) o[j] /= z;
    }
    NodePtr px = x.node();
    return make_result(x.shape(), std::move(out), "softmax_rows", {px}, [px, rows, n](detail::Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = &self.data[r * n];
            const double* gy = &self.grad[r * n];
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw DimensionError("layer_norm on scalar");
    const std::size_t d = x.shape().back();
    if (d < 2) throw DimensionError("layer_norm needs width >= 2");
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError("layer_norm affine params must be [" + std::to_string(d) + "]");
    }
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = &x.data()[r * d];
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mu) * inv_std[r];
            out[r * d + j] = xhat[r * d + j] * gain[j] + bias[j];
        }
    }
    NodePtr px = x.node(), pg = gain.node(), pb = bias.node();
    return make_result(x.shape(), std::move(out), "layer_norm", {px, pg, pb},
                       [px, pg, pb, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                           const auto& G = self.grad;
                           if (pg->requires_grad) {
                               auto& gg = pg->grad_buffer();
                               for (std::size_t i = 0; i < rows * d; ++i) gg[i % d] += G[i] * xhat[i];
                           }
                           if (pb->requires_grad) {
                               auto& gb = pb->grad_buffer();
                               for (std::size_t i = 0; i < rows * d; ++i) gb[i % d] += G[i];
                           }
                           if (px->requires_grad) {
                               auto& gx = px->grad_buffer();
                               const double inv_d = 1.0 / static_cast<double>(d);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double mean_dx = 0.0, mean_dx_xhat = 0.0;
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double dxh = G[r * d + j] * pg->data[j];
                                       mean_dx += dxh;
                                       mean_dx_xhat += dxh * xhat[r * d + j];
                                   }
                                   mean_dx *= inv_d;
                                   mean_dx_xhat *= inv_d;
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double dxh = G[r * d + j] * pg->data[j];
                                       gx[r * d + j] += inv_std[r] * (dxh - mean_dx - xhat[r * d + j] * mean_dx_xhat);
                                   }
                               }
                           }
                       });
}

Tensor max_pool_2x2(const Tensor& x) {
    if (x.rank() != 3) throw DimensionError("max_pool_2x2 expects [h,w,d], got " + shape_str(x.shape()));
    const std::size_t h = x.dim(0), w = x.dim(1), d = x.dim(2);
    if (h % 2 || w % 2) throw DimensionError("max_pool_2x2 needs even extents, got " + shape_str(x.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> out(oh * ow * d);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t c = 0; c < d; ++c) {
                std::size_t best = ((2 * i) * w + 2 * j) * d + c;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t at = ((2 * i + di) * w + 2 * j + dj) * d + c;
                        if (x[at] > x[best]) best = at;
                    }
                const std::size_t o = (i * ow + j) * d + c;
                out[o] = x[best];
                argmax[o] = best;
            }
    NodePtr px = x.node();
    return make_result({oh, ow, d}, std::move(out), "max_pool_2x2", {px},
                       [px, argmax = std::move(argmax)](detail::Node& self) {
                           auto& g = px->grad_buffer();
                           for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                       });
}

// ---- layout ---------------------------------------------------------------------

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(x.shape()));
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    NodePtr px = x.node();
    return make_result({n, m}, std::move(out), "transpose", {px}, [px, m, n](detail::Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    NodePtr px = x.node();
    return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), "reshape", {px},
                       [px](detail::Node& self) {
                           auto& g = px->grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw DimensionError("concat axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != first.size()) throw DimensionError("concat rank mismatch");
        out_shape[axis] += s[axis];
        s[axis] = first[axis];
        if (s != first) throw DimensionError("concat " + shape_str(p.shape()) + " onto " + shape_str(first));
    }
    const AxisSplit whole = split_axis(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    std::vector<NodePtr> parents;
    std::vector<std::size_t> offsets;  // along axis
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t ext = p.shape()[axis];
        for (std::size_t o = 0; o < whole.outer; ++o) {
            std::copy_n(&p.data()[o * ext * whole.inner], ext * whole.inner,
                        &out[(o * whole.extent + offset) * whole.inner]);
        }
        parents.push_back(p.node());
        offsets.push_back(offset);
        offset += ext;
    }
    return make_result(out_shape, std::move(out), "concat", parents,
                       [parents, offsets, whole, axis](detail::Node& self) {
                           for (std::size_t k = 0; k < parents.size(); ++k) {
                               auto& p = *parents[k];
                               if (!p.requires_grad) continue;
                               auto& g = p.grad_buffer();
                               const std::size_t ext = p.shape[axis];
                               for (std::size_t o = 0; o < whole.outer; ++o)
                                   for (std::size_t i = 0; i < ext * whole.inner; ++i)
                                       g[o * ext * whole.inner + i] +=
                                           self.grad[(o * whole.extent + offsets[k]) * whole.inner + i];
                           }
                       });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                             std::to_string(axis) + " of " + shape_str(x.shape()));
    }
    const AxisSplit s = split_axis(x.shape(), axis);
    const std::size_t ext = end - begin;
    Shape out_shape = x.shape();
    out_shape[axis] = ext;
    std::vector<double> out(s.outer * ext * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(&x.data()[(o * s.extent + begin) * s.inner], ext * s.inner, &out[o * ext * s.inner]);
    }
    NodePtr px = x.node();
    return make_result(std::move(out_shape), std::move(out), "slice", {px}, [px, s, begin, ext](detail::Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < ext * s.inner; ++i)
                g[(o * s.extent + begin) * s.inner + i] += self.grad[o * ext * s.inner + i];
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
    if (x.rank() < 1) throw DimensionError("gather_rows on scalar");
    const std::size_t rows = x.dim(0);
    const std::size_t width = rows ? x.numel() / rows : 0;
    Shape out_shape = x.shape();
    out_shape[0] = index.size();
    std::vector<double> out(index.size() * width);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= rows) throw DimensionError("gather_rows index " + std::to_string(index[i]) + " >= " + std::to_string(rows));
        std::copy_n(&x.data()[index[i] * width], width, &out[i * width]);
    }
    NodePtr px = x.node();
    std::vector<std::size_t> idx(index.begin(), index.end());
    return make_result(std::move(out_shape), std::move(out), "gather_rows", {px},
                       [px, idx = std::move(idx), width](detail::Node& self) {
                           auto& g = px->grad_buffer();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t c = 0; c < width; ++c) g[idx[i] * width + c] += self.grad[i * width + c];
                       });
}

}  // namespace th2
