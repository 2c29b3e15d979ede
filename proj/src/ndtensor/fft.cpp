#include "tfno/ndtensor/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tfno::fft {

namespace {

// Twiddles w[k] = exp(-2 pi i k / n), k < n/2, plus the bit-reversal table.
struct Plan {
    std::vector<Complex> twiddle;
    std::vector<std::size_t> bitrev;
};

const Plan& plan_for(std::size_t n)
{
    thread_local std::unordered_map<std::size_t, Plan> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    Plan plan;
    plan.twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        plan.twiddle[k] = Complex(std::cos(angle), std::sin(angle));
    }
    plan.bitrev.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) {
            if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        }
        plan.bitrev[i] = r;
    }
    return cache.emplace(n, std::move(plan)).first->second;
}

void require_axes(std::span<const std::size_t> axes, std::size_t rank)
{
    if (axes.empty()) throw std::invalid_argument("fft: no axes given");
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= rank) throw std::invalid_argument("fft: axis out of range");
        if (i > 0 && axes[i] <= axes[i - 1]) throw std::invalid_argument("fft: axes must be strictly increasing");
    }
}

std::size_t stride_of(const Shape& shape, std::size_t axis)
{
    std::size_t s = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s *= shape[i];
    return s;
}

void scale_all(std::span<Complex> data, double s)
{
    for (auto& z : data) z *= s;
}

// Applies `line_op(in_line, out_line)` to every line along `axis`, where the
// input and output arrays may have different extents on that axis.
template <class In, class Out, class Op>
void for_each_line(std::span<const In> in, const Shape& in_shape, std::span<Out> out, const Shape& out_shape,
                   std::size_t axis, Op&& line_op)
{
    const std::size_t n_in = in_shape[axis];
    const std::size_t n_out = out_shape[axis];
    const std::size_t stride = stride_of(in_shape, axis);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= in_shape[i];

    std::vector<In> in_line(n_in);
    std::vector<Out> out_line(n_out);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t s = 0; s < stride; ++s) {
            const std::size_t in_base = o * n_in * stride + s;
            const std::size_t out_base = o * n_out * stride + s;
            for (std::size_t k = 0; k < n_in; ++k) in_line[k] = in[in_base + k * stride];
            line_op(std::span<const In>(in_line), std::span<Out>(out_line));
            for (std::size_t k = 0; k < n_out; ++k) out[out_base + k * stride] = out_line[k];
        }
    }
}

} // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void require_power_of_two(std::size_t n, const char* what)
{
    if (!is_power_of_two(n)) {
        throw std::invalid_argument(std::string(what) + ": extent " + std::to_string(n) +
                                    " is not a power of two; pad the input to the next power of two");
    }
}

void transform_line(std::span<Complex> line, bool inverse)
{
    const std::size_t n = line.size();
    require_power_of_two(n, "fft");
    if (n == 1) return;
    const Plan& plan = plan_for(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = plan.bitrev[i];
        if (i < j) std::swap(line[i], line[j]);
    }
    double* d = reinterpret_cast<double*>(line.data());
    const double sign = inverse ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const double wr = plan.twiddle[k * step].real();
                const double wi = sign * plan.twiddle[k * step].imag();
                double* a = d + 2 * (start + k);
                double* b = d + 2 * (start + k + half);
                const double tr = wr * b[0] - wi * b[1];
                const double ti = wr * b[1] + wi * b[0];
                b[0] = a[0] - tr;
                b[1] = a[1] - ti;
                a[0] += tr;
                a[1] += ti;
            }
        }
    }
}

void rfft_line(std::span<const double> in, std::span<Complex> out)
{
    const std::size_t n = in.size();
    require_power_of_two(n, "rfft");
    if (out.size() != n / 2 + 1) throw std::invalid_argument("rfft: output must hold n/2+1 bins");
    if (n == 1) {
        out[0] = Complex(in[0], 0.0);
        return;
    }
    const std::size_t h = n / 2;
    thread_local std::vector<Complex> z;
    z.resize(h);
    for (std::size_t j = 0; j < h; ++j) z[j] = Complex(in[2 * j], in[2 * j + 1]);
    transform_line(z, false);

    const Plan& plan = plan_for(n);
    const Complex half_i(0.0, 0.5);
    for (std::size_t k = 0; k <= h; ++k) {
        const Complex zk = z[k % h];
        const Complex zc = std::conj(z[(h - k) % h]);
        const Complex w = k < h ? plan.twiddle[k] : Complex(-1.0, 0.0);
        out[k] = 0.5 * (zk + zc) - half_i * w * (zk - zc);
    }
}

void irfft_line(std::span<const Complex> in, std::span<double> out)
{
    const std::size_t n = out.size();
    require_power_of_two(n, "irfft");
    if (in.size() != n / 2 + 1) throw std::invalid_argument("irfft: input must hold n/2+1 bins");
    if (n == 1) {
        out[0] = in[0].real();
        return;
    }
    const std::size_t h = n / 2;
    const Plan& plan = plan_for(n);
    thread_local std::vector<Complex> z;
    z.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
        const Complex xk = k == 0 ? Complex(in[0].real(), 0.0) : in[k];
        const Complex xh = k == 0 ? Complex(in[h].real(), 0.0) : std::conj(in[h - k]);
        const Complex even = 0.5 * (xk + xh);
        const Complex odd = 0.5 * (xk - xh) * std::conj(plan.twiddle[k]);
        z[k] = even + Complex(0.0, 1.0) * odd;
    }
    transform_line(z, true);
    const double inv_h = 1.0 / static_cast<double>(h);
    for (std::size_t j = 0; j < h; ++j) {
        out[2 * j] = z[j].real() * inv_h;
        out[2 * j + 1] = z[j].imag() * inv_h;
    }
}

void transform_axis(std::span<Complex> data, const Shape& shape, std::size_t axis, bool inverse)
{
    const std::size_t n = shape.at(axis);
    require_power_of_two(n, "fft");
    if (n == 1) return;
    const std::size_t stride = stride_of(shape, axis);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];

    if (stride == 1) {
        for (std::size_t o = 0; o < outer; ++o) transform_line(data.subspan(o * n, n), inverse);
        return;
    }
    // Strided axis: run the butterflies on whole rows of `stride` contiguous
    // columns at once instead of gathering each line.
    const Plan& plan = plan_for(n);
    const double sign = inverse ? -1.0 : 1.0;
    const std::size_t row = 2 * stride; // doubles per row
    for (std::size_t o = 0; o < outer; ++o) {
        double* block = reinterpret_cast<double*>(data.data() + o * n * stride);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = plan.bitrev[i];
            if (i < j) std::swap_ranges(block + i * row, block + (i + 1) * row, block + j * row);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t step = n / len;
            for (std::size_t start = 0; start < n; start += len) {
                for (std::size_t k = 0; k < half; ++k) {
                    const double wr = plan.twiddle[k * step].real();
                    const double wi = sign * plan.twiddle[k * step].imag();
                    double* __restrict a = block + (start + k) * row;
                    double* __restrict b = block + (start + k + half) * row;
                    for (std::size_t c = 0; c < row; c += 2) {
                        const double tr = wr * b[c] - wi * b[c + 1];
                        const double ti = wr * b[c + 1] + wi * b[c];
                        b[c] = a[c] - tr;
                        b[c + 1] = a[c + 1] - ti;
                        a[c] += tr;
                        a[c + 1] += ti;
                    }
                }
            }
        }
    }
}

ComplexTensor rfftn(const Tensor& v, std::span<const std::size_t> axes)
{
    require_axes(axes, v.rank());
    for (auto a : axes) require_power_of_two(v.extent(a), "rfftn");
    const std::size_t last = axes.back();
    Shape out_shape = v.shape();
    out_shape[last] = v.extent(last) / 2 + 1;

    ComplexTensor out(out_shape);
    for_each_line<double, Complex>(v.data(), v.shape(), out.data(), out_shape, last,
                                   [](std::span<const double> in, std::span<Complex> o) { rfft_line(in, o); });
    for (std::size_t i = 0; i + 1 < axes.size(); ++i) transform_axis(out.data(), out_shape, axes[i], false);
    out.mark_half_spectrum(v.extent(last));
    return out;
}

namespace {
Shape real_shape_for(const ComplexTensor& spectrum, std::span<const std::size_t> axes,
                     std::span<const std::size_t> out_extents)
{
    require_axes(axes, spectrum.rank());
    if (out_extents.size() != axes.size()) throw std::invalid_argument("irfftn: one output extent per axis required");
    Shape shape = spectrum.shape();
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const std::size_t n = out_extents[i];
        require_power_of_two(n, "irfftn");
        const bool is_last = i + 1 == axes.size();
        const std::size_t expected = is_last ? n / 2 + 1 : n;
        if (spectrum.extent(axes[i]) != expected) {
            throw std::invalid_argument("irfftn: spectrum extent " + std::to_string(spectrum.extent(axes[i])) +
                                        " on axis " + std::to_string(axes[i]) + " inconsistent with output extent " +
                                        std::to_string(n));
        }
        shape[axes[i]] = n;
    }
    if (spectrum.half_spectrum() && spectrum.full_extent() != out_extents.back()) {
        throw std::invalid_argument("irfftn: half-spectrum tensor was produced from extent " +
                                    std::to_string(spectrum.full_extent()) + ", not " +
                                    std::to_string(out_extents.back()));
    }
    return shape;
}
} // namespace

Tensor irfftn(const ComplexTensor& spectrum, std::span<const std::size_t> axes,
              std::span<const std::size_t> out_extents)
{
    const Shape out_shape = real_shape_for(spectrum, axes, out_extents);
    std::vector<Complex> work(spectrum.data().begin(), spectrum.data().end());
    for (std::size_t i = 0; i + 1 < axes.size(); ++i) {
        transform_axis(work, spectrum.shape(), axes[i], true);
        scale_all(work, 1.0 / static_cast<double>(spectrum.extent(axes[i])));
    }
    std::vector<double> out(shape_product(out_shape));
    for_each_line<Complex, double>(std::span<const Complex>(work), spectrum.shape(), std::span<double>(out), out_shape,
                                   axes.back(),
                                   [](std::span<const Complex> in, std::span<double> o) { irfft_line(in, o); });
    return Tensor(out_shape, std::move(out));
}

Tensor rfftn_adjoint(const ComplexTensor& grad, std::span<const std::size_t> axes,
                     std::span<const std::size_t> out_extents)
{
    const Shape out_shape = real_shape_for(grad, axes, out_extents);
    std::vector<Complex> work(grad.data().begin(), grad.data().end());
    for (std::size_t i = 0; i + 1 < axes.size(); ++i) transform_axis(work, grad.shape(), axes[i], true);

    // Transpose of the half-spectrum real transform: n * irfft with the
    // interior bins halved (irfft doubles them when extending Hermitian).
    const std::size_t n = out_extents.back();
    std::vector<double> out(shape_product(out_shape));
    for_each_line<Complex, double>(std::span<const Complex>(work), grad.shape(), std::span<double>(out), out_shape,
                                   axes.back(), [n](std::span<const Complex> in, std::span<double> o) {
                                       thread_local std::vector<Complex> g;
                                       g.assign(in.begin(), in.end());
                                       for (std::size_t k = 1; k < n / 2; ++k) g[k] *= 0.5;
                                       irfft_line(g, o);
                                       for (auto& x : o) x *= static_cast<double>(n);
                                   });
    return Tensor(out_shape, std::move(out));
}

ComplexTensor irfftn_adjoint(const Tensor& grad, std::span<const std::size_t> axes)
{
    require_axes(axes, grad.rank());
    for (auto a : axes) require_power_of_two(grad.extent(a), "irfftn_adjoint");
    const std::size_t last = axes.back();
    const std::size_t n = grad.extent(last);
    Shape spec_shape = grad.shape();
    spec_shape[last] = n / 2 + 1;

    ComplexTensor out(spec_shape);
    for_each_line<double, Complex>(grad.data(), grad.shape(), out.data(), spec_shape, last,
                                   [n](std::span<const double> in, std::span<Complex> o) {
                                       rfft_line(in, o);
                                       const double inv_n = 1.0 / static_cast<double>(n);
                                       for (std::size_t k = 0; k < o.size(); ++k) {
                                           const bool edge = k == 0 || 2 * k == n;
                                           o[k] = edge ? Complex(o[k].real() * inv_n, 0.0) : o[k] * (2.0 * inv_n);
                                       }
                                   });
    for (std::size_t i = 0; i + 1 < axes.size(); ++i) {
        transform_axis(out.data(), spec_shape, axes[i], false);
        scale_all(out.data(), 1.0 / static_cast<double>(spec_shape[axes[i]]));
    }
    out.mark_half_spectrum(n);
    return out;
}

} // namespace tfno::fft
