#include "tfno/ndtensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tfno::ad {

double GradCheckReport::worst() const
{
    double w = 0.0;
    for (double e : max_rel_error) w = std::max(w, e);
    return w;
}

namespace {

double evaluate(const ScalarGraph& f, const std::vector<Tensor>& params)
{
    Tape tape;
    std::vector<NodeId> ids;
    for (const auto& p : params) ids.push_back(tape.parameter(p));
    const double v = tape.value(f(tape, ids)).item();
    if (!std::isfinite(v)) throw std::domain_error("grad_check: objective is non-finite");
    return v;
}

} // namespace

GradCheckReport grad_check(const ScalarGraph& f, const std::vector<Tensor>& params, double h,
                           const GradCheckOptions& opts)
{
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    Tape tape;
    std::vector<NodeId> ids;
    for (const auto& p : params) ids.push_back(tape.parameter(p));
    const NodeId loss = f(tape, ids);
    if (!std::isfinite(tape.value(loss).item())) throw std::domain_error("grad_check: objective is non-finite");
    const Gradients grads = tape.backprop(loss);

    GradCheckReport report;
    report.step = h;
    report.epsilon = opts.epsilon;

    std::mt19937_64 rng(opts.seed);
    std::vector<Tensor> probe = params;
    for (std::size_t b = 0; b < params.size(); ++b) {
        const Tensor& g = grads[ids[b]];
        std::vector<std::size_t> coords(params[b].size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (opts.max_coords_per_block > 0 && coords.size() > opts.max_coords_per_block) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.max_coords_per_block);
            std::sort(coords.begin(), coords.end());
        }
        double worst = 0.0;
        for (std::size_t c : coords) {
            const double original = probe[b][c];
            probe[b][c] = original + h;
            const double up = evaluate(f, probe);
            probe[b][c] = original - h;
            const double down = evaluate(f, probe);
            probe[b][c] = original;
            const double fd = (up - down) / (2.0 * h);
            const double ad = g[c];
            const double denom = std::max({std::abs(ad), std::abs(fd), opts.epsilon});
            worst = std::max(worst, std::abs(ad - fd) / denom);
        }
        report.max_rel_error.push_back(worst);
        report.coords_checked.push_back(coords.size());
    }
    return report;
}

GradCheckReport grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& theta, double h,
                           const GradCheckOptions& opts)
{
    ScalarGraph wrapped = [&f](Tape& tape, std::span<const NodeId> ids) { return f(tape, ids[0]); };
    return grad_check(wrapped, std::vector<Tensor>{theta}, h, opts);
}

} // namespace tfno::ad
