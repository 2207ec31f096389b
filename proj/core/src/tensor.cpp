#include "svlr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace svlr {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
    out << "]";
    return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<detail::TensorData>();
    impl->data.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (data.size() != shape_numel(shape)) {
        throw DimError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorData>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    if (rows.empty()) throw DimError("from_rows: no rows");
    const std::size_t cols = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimError("from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(data), requires_grad);
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value() requires a scalar tensor, got " + shape_str(shape()));
    }
    return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) {
        static const std::vector<double> empty;
        return empty;
    }
    return impl_->grad;
}

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value in output");
        }
    }
}

Tape::Tape() {
    previous_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

namespace {

void ensure_flow(const std::shared_ptr<detail::TensorData>& t,
                 std::vector<detail::TensorData*>& touched) {
    if (t->flow.empty()) {
        t->flow.assign(t->data.size(), 0.0);
        touched.push_back(t.get());
    }
}

}  // namespace

void Tape::backward(const Tensor& root) {
    if (!root.defined() || !root.is_scalar()) {
        throw ContractError("backward: root must be a scalar tensor");
    }
    std::vector<detail::TensorData*> touched;
    ensure_flow(root.impl(), touched);
    root.impl()->flow[0] = 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& node = *it;
        if (node.output->flow.empty()) continue;  // nothing flowed here
        for (auto& in : node.inputs) ensure_flow(in, touched);
        node.pull(node);
    }

    for (detail::TensorData* t : touched) {
        if (t->requires_grad) {
            if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
            for (std::size_t i = 0; i < t->flow.size(); ++i) t->grad[i] += t->flow[i];
        }
        t->flow.clear();
    }
}

}  // namespace svlr
