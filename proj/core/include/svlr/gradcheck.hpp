#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svlr/ops.hpp"
#include "svlr/rng.hpp"
#include "svlr/tensor.hpp"

namespace svlr {

struct GradCheckOptions {
    double step = 1e-4;
    double rtol = 1e-4;
    double atol = 1e-7;
    // Instances whose relu/max inputs sit closer than this to a kink are
    // redrawn outright; per-coordinate crossings are handled by matching
    // branch signatures on both sides of the difference.
    double kink_guard = 1e-3;
    // Train-mode batch-norm columns thinner than this get redrawn too.
    double bn_std_floor = 0.0;
    int max_resamples = 8;
};

struct GradCheckReport {
    std::string name;
    bool pass = false;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;  // finite difference straddled a kink
    int resamples = 0;
    std::string note;
};

// One randomly drawn check instance: a scalar forward pass over `inputs`.
// The forward closure is re-evaluated many times with perturbed input
// values and must be pure given those values (copy any BN state inside).
struct GradInstance {
    std::function<Tensor()> forward;
    std::vector<Tensor> inputs;
};

// Compares reverse-mode gradients against central finite differences for
// every coordinate of every input. The comparison only ever uses forward
// evaluations of `instance.forward`, never the backward pass under test.
GradCheckReport check_gradient(const std::string& name,
                               const std::function<GradInstance(Rng&)>& make_instance,
                               Rng& rng, const GradCheckOptions& opts = {});

// Full suite over all primitives, the embedding networks, the three
// losses, and the triplet scorer; `rounds` random draws per entry.
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, int rounds = 20);

}  // namespace svlr
