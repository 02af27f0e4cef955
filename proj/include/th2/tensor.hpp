#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace th2 {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates self.grad into parents' grads.
    std::function<void(Node& self)> backward;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 array with an optional gradient.
///
/// Copies share the underlying buffer (handle semantics, like a framework
/// tensor); ops always allocate new storage. Every element is finite.
class Tensor {
   public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    // In-place parameter edits (optimizer steps, finite-difference probes).
    // Not for tensors already consumed by a live graph.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;
    double operator[](std::size_t flat) const { return node_->data[flat]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool has_grad() const { return !node_->grad.empty(); }
    // Zero-filled view of the right size when no gradient was accumulated.
    std::vector<double> grad() const;
    void zero_grad();

    // Same values, no history, no grad requirement.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> node);

   private:
    std::shared_ptr<detail::Node> node_;
};

/// Recorded operations reachable from a loss, parents before children.
class Tape {
   public:
    static Tape record(const Tensor& loss);

    std::size_t size() const { return order_.size(); }
    const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return order_; }
    bool topologically_ordered() const;

    // Seeds d(loss)/d(loss) = 1 and accumulates in reverse order.
    void backward(const Tensor& loss) const;

   private:
    std::vector<std::shared_ptr<detail::Node>> order_;
};

// Throws ContractError unless loss holds exactly one element.
void backward(const Tensor& loss);

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Same shape, or b is a trailing-axis vector broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor abs(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
Tensor max_pool_2x2(const Tensor& x);

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// out[i] = x[index[i]] along axis 0.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

}  // namespace th2
