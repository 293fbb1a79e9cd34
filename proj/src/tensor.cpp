#include "gelenet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gelenet {

std::string Shape::str() const
{
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorData>())
{
    impl_->shape = shape;
    impl_->values.assign(shape.size(), fill);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorData>())
{
    if (values.size() != shape.size())
        throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                         shape.str());
    impl_->shape = shape;
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

detail::TensorData& Tensor::impl()
{
    if (!impl_)
        throw std::logic_error("access to an undefined tensor");
    return *impl_;
}

const detail::TensorData& Tensor::impl() const
{
    if (!impl_)
        throw std::logic_error("access to an undefined tensor");
    return *impl_;
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
{
    const Shape& s = shape();
    return impl().values[((n * s.c + c) * s.h + h) * s.w + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const
{
    const Shape& s = shape();
    return impl().values[((n * s.c + c) * s.h + h) * s.w + w];
}

double Tensor::item() const
{
    if (size() != 1)
        throw ShapeError("item() on a tensor of shape " + shape().str());
    return impl().values[0];
}

std::span<double> Tensor::ensure_grad() const
{
    // Gradient buffers belong to the shared storage, not to the handle.
    auto& d = const_cast<detail::TensorData&>(impl());
    if (d.grad.empty())
        d.grad.assign(d.values.size(), 0.0);
    return d.grad;
}

Tensor Tensor::clone() const
{
    return Tensor(shape(), impl().values, false);
}

namespace {
thread_local Tape* g_active_tape = nullptr;

struct BackwardFault {
    std::string op;
    double factor = 1.0;
};
BackwardFault g_fault;
} // namespace

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape)
{
    g_active_tape = &tape;
}

Tape::Scope::~Scope()
{
    g_active_tape = previous_;
}

Tape* Tape::active() noexcept
{
    return g_active_tape;
}

void Tape::record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward)
{
    output.set_requires_grad(true);
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(Tensor loss)
{
    if (nodes_.empty())
        throw AutodiffError("backward() on an empty tape; run a forward pass first");
    if (!loss.defined() || loss.size() != 1)
        throw AutodiffError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? loss.shape().str() : std::string("undefined")));
    const bool on_tape = std::any_of(nodes_.begin(), nodes_.end(),
                                     [&](const Node& n) { return n.output.same_storage(loss); });
    if (!on_tape)
        throw AutodiffError("backward(): loss was not produced by an operation on this tape");

    loss.ensure_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->output.has_grad())
            continue;
        if (!g_fault.op.empty() && g_fault.op == it->op) {
            for (double& g : it->output.grad())
                g *= g_fault.factor;
        }
        it->backward(it->output);
    }
    nodes_.clear();
}

void backward(Tensor loss)
{
    Tape* tape = Tape::active();
    if (tape == nullptr)
        throw AutodiffError("backward() called with no active tape");
    tape->backward(std::move(loss));
}

bool should_record(std::initializer_list<const Tensor*> inputs)
{
    if (g_active_tape == nullptr)
        return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t != nullptr && t->defined() && t->requires_grad(); });
}

namespace testing {
void set_backward_fault(std::string op, double factor)
{
    g_fault.op = std::move(op);
    g_fault.factor = factor;
}
} // namespace testing

} // namespace gelenet
