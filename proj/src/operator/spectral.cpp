#include <algorithm>
#include <memory>
#include <string>

#include "tfno/errors.hpp"
#include "tfno/operator/operator.hpp"

namespace tfno::op {

namespace {

const char* axis_name(std::size_t axis) { return axis == 0 ? "x" : axis == 1 ? "y" : "t"; }

// Retained-mode geometry of one spectrum [B, C, X, Y, Th].
struct ModeGeometry {
    std::size_t batch = 0, channels = 0, nx = 0, ny = 0, nt = 0, th = 0;
    std::vector<std::size_t> offset;  // flat (x, y, t) offset of each retained mode
    std::vector<std::size_t> partner; // slot of the conjugate mode, or npos off the self-conjugate planes

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    ModeGeometry(const ComplexTensor& spec, const ModeSet& modes)
    {
        if (spec.rank() != 5 || !spec.half_spectrum()) {
            throw std::invalid_argument("spectral_mix: expected a [B, C, X, Y, T/2+1] half spectrum, got " +
                                        shape_to_string(spec.shape()));
        }
        batch = spec.extent(0);
        channels = spec.extent(1);
        nx = spec.extent(2);
        ny = spec.extent(3);
        th = spec.extent(4);
        nt = spec.full_extent();
        modes.validate({nx, ny, nt});

        const auto [mx, my, mt] = modes.kept;
        std::vector<std::size_t> slot_of_x(nx, npos), slot_of_y(ny, npos);
        for (std::size_t i = 0; i < mx; ++i) slot_of_x[modes.frequency(0, i, nx)] = i;
        for (std::size_t j = 0; j < my; ++j) slot_of_y[modes.frequency(1, j, ny)] = j;

        offset.resize(modes.count());
        partner.assign(modes.count(), npos);
        for (std::size_t i = 0; i < mx; ++i) {
            const std::size_t fx = modes.frequency(0, i, nx);
            for (std::size_t j = 0; j < my; ++j) {
                const std::size_t fy = modes.frequency(1, j, ny);
                for (std::size_t k = 0; k < mt; ++k) {
                    const std::size_t slot = (i * my + j) * mt + k;
                    offset[slot] = (fx * ny + fy) * th + k;
                    const bool self_conjugate = k == 0 || 2 * k == nt;
                    if (self_conjugate) {
                        const std::size_t pi = slot_of_x[(nx - fx) % nx];
                        const std::size_t pj = slot_of_y[(ny - fy) % ny];
                        partner[slot] = (pi * my + pj) * mt + k;
                    }
                }
            }
        }
    }

    std::size_t channel_stride() const { return nx * ny * th; }
};

using MatrixSet = std::vector<Complex>; // modes * width * width, [mode][o][i]

// Effective complex matrices from the real weight tensor.
MatrixSet effective_matrices(const Tensor& weight, const ModeGeometry& geo, std::size_t width)
{
    const std::size_t modes = geo.offset.size();
    const std::size_t per_mode = 2 * width * width;
    MatrixSet raw(modes * width * width);
    for (std::size_t m = 0; m < modes; ++m)
        for (std::size_t i = 0; i < width; ++i)
            for (std::size_t o = 0; o < width; ++o) {
                const std::size_t base = m * per_mode + (2 * i) * width + o;
                raw[(m * width + o) * width + i] = Complex(weight[base], weight[base + width]);
            }
    MatrixSet eff = raw;
    for (std::size_t m = 0; m < modes; ++m) {
        const std::size_t p = geo.partner[m];
        if (p == ModeGeometry::npos) continue;
        for (std::size_t e = 0; e < width * width; ++e) {
            eff[m * width * width + e] = 0.5 * (raw[m * width * width + e] + std::conj(raw[p * width * width + e]));
        }
    }
    return eff;
}

// Gradient w.r.t. the effective matrices back to the real weight tensor.
Tensor weight_gradient(const MatrixSet& g_eff, const ModeGeometry& geo, std::size_t width, const Shape& shape)
{
    const std::size_t modes = geo.offset.size();
    const std::size_t ww = width * width;
    MatrixSet g_raw = g_eff;
    for (std::size_t m = 0; m < modes; ++m) {
        const std::size_t p = geo.partner[m];
        if (p == ModeGeometry::npos) continue;
        for (std::size_t e = 0; e < ww; ++e) g_raw[m * ww + e] = 0.5 * (g_eff[m * ww + e] + std::conj(g_eff[p * ww + e]));
    }
    Tensor out(shape);
    const std::size_t per_mode = 2 * ww;
    for (std::size_t m = 0; m < modes; ++m)
        for (std::size_t i = 0; i < width; ++i)
            for (std::size_t o = 0; o < width; ++o) {
                const std::size_t base = m * per_mode + (2 * i) * width + o;
                const Complex g = g_raw[(m * width + o) * width + i];
                out[base] = g.real();
                out[base + width] = g.imag();
            }
    return out;
}

void matvec(const Complex* m, const Complex* x, Complex* y, std::size_t n)
{
    for (std::size_t o = 0; o < n; ++o) {
        Complex acc = 0.0;
        const Complex* row = m + o * n;
        for (std::size_t i = 0; i < n; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// y = M^H x
void matvec_adjoint(const Complex* m, const Complex* x, Complex* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) y[i] = 0.0;
    for (std::size_t o = 0; o < n; ++o) {
        const Complex* row = m + o * n;
        const Complex xo = x[o];
        for (std::size_t i = 0; i < n; ++i) y[i] += std::conj(row[i]) * xo;
    }
}

} // namespace

void ModeSet::validate(const std::array<std::size_t, 3>& extents) const
{
    for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t n = extents[a];
        const std::size_t m = kept[a];
        const std::size_t limit = a == 2 ? n / 2 + 1 : n;
        if (m == 0 || m > limit) {
            throw ConfigError(std::string("modes on axis ") + axis_name(a) + ": " + std::to_string(m) +
                              " outside [1, " + std::to_string(limit) + "] for extent " + std::to_string(n));
        }
        if (a < 2 && m != n && m % 2 == 0) {
            throw ConfigError(std::string("modes on axis ") + axis_name(a) + ": " + std::to_string(m) +
                              " must be odd (symmetric band) or equal the extent " + std::to_string(n));
        }
    }
}

std::size_t ModeSet::frequency(std::size_t axis, std::size_t slot, std::size_t extent) const
{
    if (axis == 2) return slot;
    const std::size_t m = kept[axis];
    const std::size_t positive = (m + 1) / 2;
    return slot < positive ? slot : extent - (m - slot);
}

Shape spectral_weight_shape(const ModeSet& modes, std::size_t width)
{
    return {modes.kept[0], modes.kept[1], modes.kept[2], 2 * width, width};
}

ad::NodeId spectral_mix(ad::Tape& tape, ad::NodeId spectrum, ad::NodeId weight, const ModeSet& modes,
                        std::size_t power)
{
    if (power == 0) throw std::invalid_argument("spectral_mix: power must be >= 1");
    const ComplexTensor& z = tape.complex_value(spectrum);
    auto geo = std::make_shared<const ModeGeometry>(z, modes);
    const std::size_t width = geo->channels;
    const Tensor& w = tape.value(weight);
    if (w.shape() != spectral_weight_shape(modes, width)) {
        throw std::invalid_argument("spectral_mix: weight shape " + shape_to_string(w.shape()) + ", expected " +
                                    shape_to_string(spectral_weight_shape(modes, width)));
    }
    auto mats = std::make_shared<const MatrixSet>(effective_matrices(w, *geo, width));

    // states[((b * modes + m) * (power + 1) + j) * width + c] = (M^j z)_c
    const std::size_t n_modes = geo->offset.size();
    const std::size_t span = (power + 1) * width;
    auto states = std::make_shared<std::vector<Complex>>(geo->batch * n_modes * span);
    ComplexTensor out(z.shape());
    out.mark_half_spectrum(z.full_extent());
    const std::size_t cs = geo->channel_stride();
    // Gather channel by channel so reads walk each channel plane in order.
    for (std::size_t b = 0; b < geo->batch; ++b)
        for (std::size_t c = 0; c < width; ++c) {
            const Complex* plane = z.data().data() + (b * width + c) * cs;
            Complex* dst = states->data() + b * n_modes * span + c;
            for (std::size_t m = 0; m < n_modes; ++m) dst[m * span] = plane[geo->offset[m]];
        }
    for (std::size_t b = 0; b < geo->batch; ++b)
        for (std::size_t m = 0; m < n_modes; ++m) {
            Complex* s = states->data() + (b * n_modes + m) * span;
            const Complex* mat = mats->data() + m * width * width;
            for (std::size_t j = 1; j <= power; ++j) matvec(mat, s + (j - 1) * width, s + j * width, width);
        }
    for (std::size_t b = 0; b < geo->batch; ++b)
        for (std::size_t c = 0; c < width; ++c) {
            Complex* plane = out.data().data() + (b * width + c) * cs;
            const Complex* src = states->data() + b * n_modes * span + power * width + c;
            for (std::size_t m = 0; m < n_modes; ++m) plane[geo->offset[m]] = src[m * span];
        }

    const Shape in_shape = z.shape();
    const std::size_t full = z.full_extent();
    const Shape w_shape = w.shape();
    return tape.record(std::move(out), {spectrum, weight},
                       [geo, mats, states, power, width, in_shape, full, w_shape](
                           const ad::Value& g, std::vector<ad::Value>& gi, const std::vector<bool>& needs) {
                           const auto& gout = std::get<ComplexTensor>(g);
                           const std::size_t n_modes = geo->offset.size();
                           const std::size_t cs = geo->channel_stride();
                           ComplexTensor gz;
                           if (needs[0]) {
                               gz = ComplexTensor(in_shape);
                               gz.mark_half_spectrum(full);
                           }
                           MatrixSet gm(needs[1] ? n_modes * width * width : 0);
                           const std::size_t span = (power + 1) * width;
                           // Adjoint seeds and results, laid out [b][m][c].
                           std::vector<Complex> seed(geo->batch * n_modes * width);
                           for (std::size_t b = 0; b < geo->batch; ++b)
                               for (std::size_t c = 0; c < width; ++c) {
                                   const Complex* plane = gout.data().data() + (b * width + c) * cs;
                                   for (std::size_t m = 0; m < n_modes; ++m)
                                       seed[(b * n_modes + m) * width + c] = plane[geo->offset[m]];
                               }
                           std::vector<Complex> next(width);
                           for (std::size_t b = 0; b < geo->batch; ++b) {
                               for (std::size_t m = 0; m < n_modes; ++m) {
                                   const Complex* s = states->data() + (b * n_modes + m) * span;
                                   const Complex* mat = mats->data() + m * width * width;
                                   Complex* cur = seed.data() + (b * n_modes + m) * width;
                                   for (std::size_t j = power; j >= 1; --j) {
                                       const Complex* prev = s + (j - 1) * width;
                                       if (needs[1]) {
                                           Complex* gmat = gm.data() + m * width * width;
                                           for (std::size_t o = 0; o < width; ++o)
                                               for (std::size_t i = 0; i < width; ++i)
                                                   gmat[o * width + i] += cur[o] * std::conj(prev[i]);
                                       }
                                       matvec_adjoint(mat, cur, next.data(), width);
                                       std::copy(next.begin(), next.end(), cur);
                                   }
                               }
                           }
                           if (needs[0]) {
                               for (std::size_t b = 0; b < geo->batch; ++b)
                                   for (std::size_t c = 0; c < width; ++c) {
                                       Complex* plane = gz.data().data() + (b * width + c) * cs;
                                       for (std::size_t m = 0; m < n_modes; ++m)
                                           plane[geo->offset[m]] = seed[(b * n_modes + m) * width + c];
                                   }
                           }
                           if (needs[0]) gi[0] = std::move(gz);
                           if (needs[1]) gi[1] = weight_gradient(gm, *geo, width, w_shape);
                       });
}

ad::NodeId spectral_conv(ad::Tape& tape, ad::NodeId v, ad::NodeId weight, const ModeSet& modes, std::size_t power)
{
    const Tensor& x = tape.value(v);
    if (x.rank() != 5) {
        throw std::invalid_argument("spectral_conv: expected [B, C, X, Y, T], got " + shape_to_string(x.shape()));
    }
    const std::vector<std::size_t> axes{2, 3, 4};
    const std::vector<std::size_t> extents{x.extent(2), x.extent(3), x.extent(4)};
    ad::NodeId spec = ad::rfftn(tape, v, axes);
    ad::NodeId mixed = spectral_mix(tape, spec, weight, modes, power);
    return ad::irfftn(tape, mixed, axes, extents);
}

Tensor spectral_conv_value(const Tensor& v, const Tensor& weight, const ModeSet& modes, std::size_t power)
{
    ad::Tape tape;
    ad::NodeId out = spectral_conv(tape, tape.constant(v), tape.constant(weight), modes, power);
    return tape.value(out);
}

} // namespace tfno::op
