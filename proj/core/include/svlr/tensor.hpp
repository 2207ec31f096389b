#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "svlr/error.hpp"

namespace svlr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation
    std::vector<double> flow;  // scratch used inside one backward sweep
};

}  // namespace detail

// Dense tensor of doubles, row-major, with optional gradient tracking.
// Copies share storage; the trainer owns the only mutation points.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rows() const { return impl_->shape.at(0); }
    std::size_t cols() const { return impl_->shape.at(1); }
    bool is_scalar() const { return numel() == 1; }

    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& mutable_data() { return impl_->data; }
    double value() const;           // numel-1 tensors only
    double at(std::size_t i) const { return impl_->data[i]; }
    double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { impl_->grad.clear(); }

    std::shared_ptr<detail::TensorData> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorData> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorData> impl_;

    friend class Tape;
    friend Tensor make_op_output(Shape, std::vector<double>, bool, const char*);
};

// One executed primitive: inputs, output, and the rule that routes the
// output's flow back to the inputs.
struct Node {
    std::vector<std::shared_ptr<detail::TensorData>> inputs;
    std::shared_ptr<detail::TensorData> output;
    std::function<void(Node&)> pull;
};

// Per-step record of executed primitives. Rebuilt for every training
// step; backward replays the record once, in reverse execution order.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(Node node) { nodes_.push_back(std::move(node)); }
    std::size_t node_count() const { return nodes_.size(); }

    // Seeds the scalar root with 1 and sweeps the record backwards.
    // Leaf and intermediate grads accumulate across repeated calls.
    void backward(const Tensor& root);

private:
    std::vector<Node> nodes_;
    Tape* previous_ = nullptr;
};

// Raises NumericError if any entry is NaN or Inf.
void check_finite(const char* op, const std::vector<double>& values);

}  // namespace svlr
