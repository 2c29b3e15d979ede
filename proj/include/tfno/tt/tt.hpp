#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tfno/ndtensor/autodiff.hpp"
#include "tfno/ndtensor/tensor.hpp"

// Tensor-Train factorization: a d-mode tensor A(i_1..i_d) stored as a chain
// of order-3 cores G_k with extents (r_{k-1}, n_k, r_k), r_0 = r_d = 1.
namespace tfno::tt {

struct TTSpec {
    Shape shape;                    ///< dense extents n_1..n_d, d >= 2
    std::vector<std::size_t> ranks; ///< interior ranks r_1..r_{d-1}
    double init_scale = 1.0;

    void validate() const;
    /// Boundary-padded ranks r_0..r_d.
    std::vector<std::size_t> chain() const;
};

class TTCores {
public:
    TTCores() = default;
    explicit TTCores(std::vector<Tensor> cores);

    const std::vector<Tensor>& cores() const { return cores_; }
    std::vector<Tensor>& cores() { return cores_; }
    std::size_t order() const { return cores_.size(); }
    Shape dense_shape() const;
    std::vector<std::size_t> ranks() const; ///< interior ranks
    std::size_t param_count() const;

    /// Throws if the rank chain is broken or boundary ranks are not 1.
    void validate() const;

private:
    std::vector<Tensor> cores_;
};

/// Entries i.i.d. normal with std init_scale / sqrt(r_{k-1} r_k); the
/// contracted tensor then has entry variance init_scale^(2d) / prod(r_k).
TTCores tt_random_init(const TTSpec& spec, std::uint64_t seed);

/// init_scale giving contracted entries the requested variance.
double init_scale_for_variance(double target_variance, std::span<const std::size_t> ranks, std::size_t order);

/// Dense reconstruction by sequential mode-unfolding products.
Tensor tt_contract(const TTCores& cores);

/// Sequential truncated-SVD decomposition. Singular values below
/// rel_tol * s_max are discarded even when max_ranks allow more.
TTCores tt_svd(const Tensor& dense, std::span<const std::size_t> max_ranks, double rel_tol = 1e-12);

std::size_t tt_param_count(const TTSpec& spec);
std::size_t dense_param_count(const Shape& shape);

/// Taped contraction: one parameter node per core, output is the dense tensor.
ad::NodeId tt_contract(ad::Tape& tape, std::span<const ad::NodeId> cores);

} // namespace tfno::tt
