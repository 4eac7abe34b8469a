#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "rcdet/errors.hpp"

namespace rcdet {

using Shape = std::vector<long>;

long shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<TensorNode>;

// Dense row-major float64 tensor. A Tensor is a cheap handle onto a shared
// node; values are immutable once the tensor has been consumed by an
// operation, gradients accumulate in place during backward().
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    long dim() const;
    long size(long axis) const;
    long numel() const;
    bool requires_grad() const;

    const std::vector<double>& data() const;
    // Direct mutable access; only valid before the tensor feeds any op.
    std::vector<double>& raw_data();
    double value() const;  // scalar tensors only
    double at(std::initializer_list<long> index) const;

    bool has_grad() const;
    const std::vector<double>& grad() const;  // materializes zeros when absent
    void zero_grad();

    // Value copy detached from the graph.
    Tensor detached(bool requires_grad = false) const;

    NodePtr node() const { return node_; }

  private:
    NodePtr node_;
};

// Thread-local switch disabling tape recording (inference, finite differences).
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Execution-ordered record of differentiable ops; the order is topological by
// construction. backward() walks it once in reverse and then clears it.
class Tape {
  public:
    static Tape& instance();
    void record(NodePtr node);
    void clear();
    std::size_t size() const { return entries_.size(); }
    const std::vector<NodePtr>& entries() const { return entries_; }

  private:
    std::vector<NodePtr> entries_;
};

// Reverse-mode sweep from a scalar loss. Consumes the whole thread-local tape.
void backward(const Tensor& loss);

// Central-difference check of backward() for a scalar-valued f. Returns the
// max elementwise relative error with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace rcdet
