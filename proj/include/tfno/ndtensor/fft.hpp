#pragma once

#include <cstddef>
#include <span>

#include "tfno/ndtensor/tensor.hpp"

// Radix-2 transforms. Convention: forward transforms are unnormalized,
// inverse transforms carry the 1/N factor. Only power-of-two extents are
// accepted; callers pad.
namespace tfno::fft {

bool is_power_of_two(std::size_t n);
void require_power_of_two(std::size_t n, const char* what);

/// In-place complex transform of one contiguous line. `inverse` uses the
/// conjugate twiddles and does NOT scale; scaling is the caller's choice.
void transform_line(std::span<Complex> line, bool inverse);

/// Real-input forward transform of n points into n/2+1 bins (packed n/2-point
/// complex transform plus split step).
void rfft_line(std::span<const double> in, std::span<Complex> out);

/// Inverse of rfft_line including the 1/n factor. The imaginary parts of bin 0
/// and bin n/2 are ignored.
void irfft_line(std::span<const Complex> in, std::span<double> out);

/// Unnormalized complex transform along `axis` of a row-major array.
void transform_axis(std::span<Complex> data, const Shape& shape, std::size_t axis, bool inverse);

/// Forward real-input transform over `axes` (strictly increasing). The last
/// listed axis holds the half spectrum (n/2+1 bins).
ComplexTensor rfftn(const Tensor& v, std::span<const std::size_t> axes);

/// Inverse of rfftn. `out_extents` are the real-space extents of `axes`.
Tensor irfftn(const ComplexTensor& spectrum, std::span<const std::size_t> axes,
              std::span<const std::size_t> out_extents);

/// Adjoint of rfftn as a real-linear map (R^N -> C^M viewed as R^2M).
Tensor rfftn_adjoint(const ComplexTensor& grad, std::span<const std::size_t> axes,
                     std::span<const std::size_t> out_extents);

/// Adjoint of irfftn as a real-linear map.
ComplexTensor irfftn_adjoint(const Tensor& grad, std::span<const std::size_t> axes);

} // namespace tfno::fft
