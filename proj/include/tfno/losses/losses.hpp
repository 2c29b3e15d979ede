#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tfno/ndtensor/autodiff.hpp"
#include "tfno/operator/operator.hpp"

namespace tfno::loss {

struct SobolevConfig {
    int order = 1;       ///< k: 0 (plain relative L^p) or 1
    double p = 2.0;      ///< norm order
    double eps_den = 1e-12;

    void validate() const;
};

struct LossWeights {
    double lambda = 1.0; ///< approximation term
    double gamma = 0.5;  ///< reconstruction term, 0 disables it

    void validate() const;
};

/// First derivative along `axis` on a unit-spaced grid: central differences
/// inside, first-order one-sided at both ends. Needs extent >= 3.
Tensor fd_derivative(const Tensor& y, std::size_t axis);
/// Transpose of fd_derivative as a linear map.
Tensor fd_derivative_adjoint(const Tensor& g, std::size_t axis);

/// Axes that enter the derivative term of a [B, C, ...] field: every axis
/// after the channel axis with extent >= 3.
std::vector<std::size_t> derivative_axes(const Shape& shape);

/// Relative Sobolev loss of each batch entry:
/// ( sum_i ||D^i yh - D^i y||_p^p / (||D^i y||_p^p + eps_den) )^(1/p),
/// where the i = 1 term sums over all derivative axes.
std::vector<double> sobolev_h1_relative_per_sample(const Tensor& y_hat, const Tensor& y, const SobolevConfig& cfg);

/// Batch mean of the per-sample loss.
double sobolev_h1_relative(const Tensor& y_hat, const Tensor& y, const SobolevConfig& cfg);

/// Taped batch-mean loss; `y` is a fixed target.
ad::NodeId sobolev_h1_relative(ad::Tape& tape, ad::NodeId y_hat, const Tensor& y, const SobolevConfig& cfg);

/// lambda * L(model(a), u) + gamma * L(Q(P(a)), u0).
ad::NodeId total_loss(ad::Tape& tape, const op::NeuralOperator& model, const op::BoundParams& params,
                      const Tensor& a, const Tensor& u, const Tensor& u0, const LossWeights& w,
                      const SobolevConfig& cfg);

/// Eager total_loss.
double total_loss(const op::NeuralOperator& model, const Tensor& a, const Tensor& u, const Tensor& u0,
                  const LossWeights& w, const SobolevConfig& cfg);

/// Pooled coefficient of determination 1 - SS_res / SS_tot.
/// Throws std::invalid_argument on fewer than two values or zero variance.
double r_squared(std::span<const double> y_hat, std::span<const double> y);

struct LandscapeGrid {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<double> values; ///< values[i * betas.size() + j] = f(alphas[i], betas[j])
    std::vector<Tensor> d1, d2; ///< one tensor per parameter block

    double at(std::size_t i, std::size_t j) const { return values[i * betas.size() + j]; }
};

/// Evaluates test_loss(theta* + alpha d1 + beta d2) on an n x n grid over
/// [-range, range]^2. Directions are i.i.d. normal, then each parameter block
/// is rescaled to the norm of the matching block of theta*. The model is not
/// modified; n odd puts (0, 0) exactly on the grid.
LandscapeGrid loss_landscape(const op::NeuralOperator& model,
                             const std::function<double(const op::NeuralOperator&)>& test_loss, std::size_t n,
                             double range, std::uint64_t seed);

} // namespace tfno::loss
