#include "svlr/gradcheck.hpp"

#include <cmath>

namespace svlr {

namespace {

struct Probe {
    double value = 0.0;
    std::uint64_t signature = 0;
};

Probe probe_forward(const std::function<Tensor()>& forward) {
    KinkStats stats;
    Probe p;
    {
        KinkMonitorScope scope(stats);
        p.value = forward().value();
    }
    p.signature = stats.branch_signature;
    return p;
}

}  // namespace

GradCheckReport check_gradient(const std::string& name,
                               const std::function<GradInstance(Rng&)>& make_instance,
                               Rng& rng, const GradCheckOptions& opts) {
    GradCheckReport report;
    report.name = name;

    for (int attempt = 0; attempt <= opts.max_resamples; ++attempt) {
        GradInstance inst = make_instance(rng);

        // keep instances whose activations sit right on a kink out of the
        // comparison entirely
        KinkStats stats;
        {
            KinkMonitorScope scope(stats);
            (void)inst.forward().value();
        }
        if (stats.nearest() < opts.kink_guard || stats.bn_min_std < opts.bn_std_floor) {
            report.resamples = attempt + 1;
            continue;
        }

        for (auto& t : inst.inputs) t.zero_grad();
        {
            Tape tape;
            Tensor y = inst.forward();
            tape.backward(y);
        }

        bool ok = true;
        for (auto& t : inst.inputs) {
            std::vector<double> analytic = t.has_grad()
                ? t.grad() : std::vector<double>(t.numel(), 0.0);
            auto& data = t.mutable_data();
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double orig = data[i];
                const double a = analytic[i];
                // shrink the step until both sides share one smooth branch
                // (else the difference straddles a kink) and until any
                // curvature-dominated truncation error has died away
                bool fd_valid = false;
                bool coord_ok = false;
                double coord_rel = 0.0;
                double step = opts.step;
                for (int shrink = 0; shrink < 4; ++shrink, step /= 4.0) {
                    data[i] = orig + step;
                    const Probe plus = probe_forward(inst.forward);
                    data[i] = orig - step;
                    const Probe minus = probe_forward(inst.forward);
                    data[i] = orig;
                    if (plus.signature != minus.signature) continue;
                    const double fd = (plus.value - minus.value) / (2.0 * step);
                    fd_valid = true;
                    const double diff = std::fabs(a - fd);
                    const double scale = std::max(std::fabs(a), std::fabs(fd));
                    coord_rel = diff / (scale + opts.atol);
                    if (diff <= opts.atol + opts.rtol * scale) {
                        coord_ok = true;
                        break;
                    }
                }
                if (!fd_valid) {
                    report.coords_skipped++;
                    continue;
                }
                report.coords_checked++;
                if (coord_rel > report.max_rel_err) report.max_rel_err = coord_rel;
                if (!coord_ok) ok = false;
            }
        }
        report.pass = ok;
        if (!ok) report.note = "gradient mismatch";
        return report;
    }

    report.pass = false;
    report.note = "could not draw an instance away from gradient kinks";
    return report;
}

}  // namespace svlr
