#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tfno/ndtensor/autodiff.hpp"

namespace tfno::ad {

/// Builds a scalar graph on `tape` from the parameter leaves `params`.
using ScalarGraph = std::function<NodeId(Tape& tape, std::span<const NodeId> params)>;

struct GradCheckOptions {
    /// Floor in the denominator of the relative error:
    /// |g_ad - g_fd| / max(|g_ad|, |g_fd|, epsilon).
    double epsilon = 1e-6;
    /// Coordinates probed per parameter block; 0 probes every coordinate.
    std::size_t max_coords_per_block = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    std::vector<double> max_rel_error; ///< one entry per parameter block
    std::vector<std::size_t> coords_checked;
    double step = 0.0;
    double epsilon = 0.0;

    double worst() const;
    bool passed(double tolerance) const { return worst() < tolerance; }
};

/// Compares reverse-mode gradients of `f` with central differences of step `h`.
/// Throws std::domain_error when f is non-finite at any probe point.
GradCheckReport grad_check(const ScalarGraph& f, const std::vector<Tensor>& params, double h,
                           const GradCheckOptions& opts = {});

/// Single-tensor convenience overload.
GradCheckReport grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& theta, double h,
                           const GradCheckOptions& opts = {});

} // namespace tfno::ad
