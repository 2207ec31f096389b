#pragma once

#include <cstdint>
#include <vector>

#include "svlr/tensor.hpp"

namespace svlr {

enum class NetMode { kTrain, kEval };

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

// Non-trainable per-layer normalization state. Train-mode calls fold the
// batch moments in with momentum kBnMomentum; eval-mode calls read them.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;

    static BatchNormState init(std::size_t dim) {
        return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
    }
};

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Broadcasts.
Tensor add_row(const Tensor& x, const Tensor& r);       // [B×D] + [D]
Tensor add_scalar(const Tensor& x, const Tensor& s);    // x + scalar tensor
Tensor add_const(const Tensor& x, double c);
Tensor scale(const Tensor& x, double c);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);        // [m×k]·[k×n]
Tensor transpose(const Tensor& x);                      // [m×n] -> [n×m]
Tensor matvec(const Tensor& a, const Tensor& x);        // [m×n]·[n] -> [m]
Tensor dot(const Tensor& a, const Tensor& b);           // [n]·[n] -> scalar

// Structure.
Tensor row(const Tensor& x, std::size_t i);             // [B×D] -> [D]
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);  // [B×D] -> [count×D]
Tensor element(const Tensor& x, std::size_t i);         // flat index -> scalar
Tensor concat(const std::vector<Tensor>& parts);        // 1-D parts -> 1-D
Tensor stack_rows(const std::vector<Tensor>& rows);     // n×[D] -> [n×D]

// Nonlinearities. relu's subgradient at 0 is 0.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);                    // stable log(sigma(x))
Tensor softmax(const Tensor& x);                        // 1-D, max-subtracted

// Reductions. Max gradients route to the single argmax element; ties
// break to the lowest index.
Tensor max_elem(const Tensor& x);                       // 1-D -> scalar
Tensor rowwise_max(const Tensor& x);                    // [B×D] -> [B]
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Train mode normalizes [B×D] by batch moments (B >= 2) and updates
// state; eval mode normalizes by the running moments.
Tensor batch_norm(const Tensor& x, const Tensor& bn_scale, const Tensor& bn_offset,
                  BatchNormState& state, NetMode mode);

// Observations from relu / max / batch-norm primitives while a monitor
// scope is active: distances to the nearest gradient kink, the thinnest
// train-mode batch-norm column, and a hash of the active branches (relu
// signs and argmax picks). Two forward passes that share a signature lie
// in the same smooth region, so a central difference across them is
// valid; the harness uses this to exclude kink-straddling coordinates.
struct KinkStats {
    double relu_margin = 1e300;
    double max_gap = 1e300;
    double bn_min_std = 1e300;
    std::uint64_t branch_signature = 1469598103934665603ull;

    double nearest() const { return relu_margin < max_gap ? relu_margin : max_gap; }
};

class KinkMonitorScope {
public:
    explicit KinkMonitorScope(KinkStats& stats);
    ~KinkMonitorScope();
    KinkMonitorScope(const KinkMonitorScope&) = delete;
    KinkMonitorScope& operator=(const KinkMonitorScope&) = delete;

    static KinkStats* active();

private:
    KinkStats* previous_;
};

}  // namespace svlr
