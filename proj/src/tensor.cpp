#include "rcdet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rcdet {

long shape_numel(const Shape& shape) {
    long n = 1;
    for (long d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {

NodePtr new_node(Shape shape, bool requires_grad) {
    for (long d : shape) {
        if (d <= 0) throw DimError("tensor extent must be positive, got " + shape_str(shape));
    }
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data.assign(static_cast<std::size_t>(shape_numel(n->shape)), 0.0);
    n->requires_grad = requires_grad;
    return n;
}

thread_local int g_no_grad_depth = 0;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(new_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = new_node(std::move(shape), requires_grad);
    for (double& v : n->data) v = value;
    return Tensor(n);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    auto n = new_node(std::move(shape), requires_grad);
    if (values.size() != n->data.size()) {
        throw DimError("from_data: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(n->shape));
    }
    n->data = std::move(values);
    return Tensor(n);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

long Tensor::dim() const { return static_cast<long>(node_->shape.size()); }

long Tensor::size(long axis) const {
    if (axis < 0 || axis >= dim()) throw DimError("size: axis out of range");
    return node_->shape[static_cast<std::size_t>(axis)];
}

long Tensor::numel() const { return static_cast<long>(node_->data.size()); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const { return node_->data; }

std::vector<double>& Tensor::raw_data() { return node_->data; }

double Tensor::value() const {
    if (numel() != 1) throw ContractError("value(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<long> index) const {
    if (static_cast<long>(index.size()) != dim()) throw DimError("at(): rank mismatch");
    long flat = 0;
    long axis = 0;
    for (long i : index) {
        const long extent = node_->shape[static_cast<std::size_t>(axis)];
        if (i < 0 || i >= extent) throw DimError("at(): index out of range");
        flat = flat * extent + i;
        ++axis;
    }
    return node_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detached(bool requires_grad) const {
    auto n = new_node(node_->shape, requires_grad);
    n->data = node_->data;
    return Tensor(n);
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tape& Tape::instance() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(NodePtr node) { entries_.push_back(std::move(node)); }

void Tape::clear() { entries_.clear(); }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss does not require gradient");
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;

    auto& tape = Tape::instance();
    const auto& entries = tape.entries();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        TensorNode& node = **it;
        if (node.grad.size() != node.data.size()) continue;  // not on the path to the loss
        if (node.backward_fn) node.backward_fn();
    }
    tape.clear();
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

    Tensor probe = x.detached(true);
    std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
    {
        Tensor y = f(probe);
        if (y.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
        if (!std::isfinite(y.value())) throw NumericError("grad_check: f(x) is not finite");
        if (y.requires_grad()) {
            backward(y);
            analytic = probe.grad();
        } else {
            Tape::instance().clear();
        }
    }

    NoGradGuard no_grad;
    double max_rel = 0.0;
    Tensor shifted = x.detached(false);
    std::vector<double>& vals = shifted.raw_data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        vals[i] = orig + eps;
        const double fp = f(shifted).value();
        vals[i] = orig - eps;
        const double fm = f(shifted).value();
        vals[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("grad_check: perturbed evaluation is not finite");
        }
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

}  // namespace rcdet
