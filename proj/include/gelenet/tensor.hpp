#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gelenet {

/// Rank-4 shape in (batch, channel, height, width) order.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t size() const noexcept { return n * c * h * w; }
    std::size_t plane() const noexcept { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {
struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until a gradient is first accumulated
    bool requires_grad = false;
};
} // namespace detail

/**
 * Dense row-major (n,c,h,w) array of doubles.
 *
 * Tensor is a handle: copies share storage, which is what lets the tape refer
 * back to forward values and gradient buffers. Use clone() for a deep copy.
 */
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
    static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const { return impl().shape; }
    std::size_t size() const { return impl().shape.size(); }

    std::span<double> data() { return impl().values; }
    std::span<const double> data() const { return impl().values; }
    double* ptr() { return impl().values.data(); }
    const double* ptr() const { return impl().values.data(); }

    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
    double item() const;

    bool requires_grad() const { return impl().requires_grad; }
    void set_requires_grad(bool flag) { impl().requires_grad = flag; }

    bool has_grad() const { return !impl().grad.empty(); }
    std::span<double> grad() { return impl().grad; }
    std::span<const double> grad() const { return impl().grad; }
    /// Allocates a zero gradient buffer if none exists and returns it.
    std::span<double> ensure_grad() const;
    void clear_grad() { std::vector<double>().swap(impl().grad); }

    /// Deep copy of the values; the copy carries no gradient and no tape history.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

private:
    detail::TensorData& impl();
    const detail::TensorData& impl() const;

    std::shared_ptr<detail::TensorData> impl_;
};

/**
 * Ordered record of differentiable operations.
 *
 * Operations record onto the tape made active by a Tape::Scope on the calling
 * thread. With no active tape, or when no input requires a gradient, nothing
 * is recorded and the forward pass runs as plain inference.
 */
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor& output)>;

    struct Node {
        std::string op;
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() noexcept;

    void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

    /// Seeds d(loss)/d(loss) = 1, replays the tape in reverse and clears it.
    void backward(Tensor loss);

    void clear() { nodes_.clear(); }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

private:
    std::vector<Node> nodes_;
};

/// Runs backward on the tape active on this thread.
void backward(Tensor loss);

/// True when an active tape exists and at least one input requires a gradient.
bool should_record(std::initializer_list<const Tensor*> inputs);

namespace testing {
/// Scales the incoming gradient of every node named `op` by `factor` during
/// backward. Used as a negative control for gradient checking. Empty op disables.
void set_backward_fault(std::string op, double factor);
} // namespace testing

} // namespace gelenet
