#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfno/ndtensor/autodiff.hpp"
#include "tfno/ndtensor/tensor.hpp"

// Fourier neural operator over fields shaped [batch, channel, x, y, t].
namespace tfno::op {

/// Retained Fourier modes per transformed axis (x, y, t). The t axis is the
/// half-spectrum axis of the real transform.
///
/// On x and y the retained band is symmetric about zero frequency so that the
/// mixed spectrum of a real field stays Hermitian: an odd count m keeps the
/// signed frequencies -(m-1)/2 .. (m-1)/2, and m == extent keeps everything.
/// On t the first m bins are kept.
struct ModeSet {
    std::array<std::size_t, 3> kept{1, 1, 1};

    std::size_t count() const { return kept[0] * kept[1] * kept[2]; }
    /// Throws ConfigError if the modes do not fit grid extents (x, y, t).
    void validate(const std::array<std::size_t, 3>& extents) const;
    /// Spectrum index along axis `axis` (0..2) of retained slot `slot`.
    std::size_t frequency(std::size_t axis, std::size_t slot, std::size_t extent) const;
};

/// Shape of a dense spectral weight: (mx, my, mt, 2*width, width).
/// Entry [.., 2*i + c, o] is the real (c = 0) or imaginary (c = 1) part of
/// the complex matrix element R(k)[o][i].
Shape spectral_weight_shape(const ModeSet& modes, std::size_t width);

/// Per-mode complex linear map applied `power` times:
/// out(k) = R(k)^power z(k) on retained modes, zero elsewhere. On the
/// self-conjugate t planes R is replaced by its Hermitian-consistent part
/// (R(k) + conj R(-k)) / 2, which keeps the output a real-field spectrum.
ad::NodeId spectral_mix(ad::Tape& tape, ad::NodeId spectrum, ad::NodeId weight, const ModeSet& modes,
                        std::size_t power);

/// K^r v = irfftn(R^r rfftn(v)) over axes (2, 3, 4).
ad::NodeId spectral_conv(ad::Tape& tape, ad::NodeId v, ad::NodeId weight, const ModeSet& modes, std::size_t power);

/// Eager spectral_conv.
Tensor spectral_conv_value(const Tensor& v, const Tensor& weight, const ModeSet& modes, std::size_t power);

enum class Factorization { dense, tt };

struct OperatorConfig {
    std::size_t layers = 4;
    ModeSet modes{{15, 15, 8}};
    std::size_t width = 24;        ///< hidden channels d_v
    std::size_t in_channels = 6;   ///< data channels d_a (grid channels are appended internally)
    std::size_t out_channels = 1;  ///< d_u
    std::size_t power = 4;         ///< operator power r
    Factorization factorization = Factorization::tt;
    std::vector<std::size_t> tt_ranks{8, 8, 8, 8};
    std::string activation = "gelu"; ///< gelu, relu or identity
    std::size_t lift_width = 32;
    std::size_t projection_width = 32;

    /// Throws ConfigError on inconsistent values. Grid-dependent checks are
    /// done at forward time.
    void validate() const;
};

/// Number of channels appended to the input: normalized x and y cell centres.
inline constexpr std::size_t grid_channels = 2;

struct ParamBlock {
    std::string name;
    Tensor value;
};

struct ParamCount {
    std::size_t total = 0;
    std::size_t spectral = 0;
    /// Spectral parameters the same config would need with dense weights.
    std::size_t dense_spectral = 0;
    /// Total parameters of the dense-weight equivalent.
    std::size_t dense_equivalent = 0;
};

/// Parameter leaves of one model bound to a tape, in block order.
using BoundParams = std::vector<ad::NodeId>;

class NeuralOperator {
public:
    NeuralOperator() = default;
    NeuralOperator(OperatorConfig config, std::vector<ParamBlock> params);

    /// Random initialization, deterministic per seed.
    static NeuralOperator init(const OperatorConfig& config, std::uint64_t seed);

    const OperatorConfig& config() const { return config_; }
    const std::vector<ParamBlock>& params() const { return params_; }
    std::vector<ParamBlock>& params() { return params_; }
    /// Index of the named block; throws std::out_of_range if absent.
    std::size_t block_index(const std::string& name) const;

    ParamCount param_count() const;

    BoundParams bind(ad::Tape& tape) const;
    /// Same as bind, but as constants (inference without gradients).
    BoundParams bind_constant(ad::Tape& tape) const;

    /// Appends grid channels to a[B, d_a, X, Y, T] and records it as a constant.
    ad::NodeId input(ad::Tape& tape, const Tensor& a) const;

    ad::NodeId lift(ad::Tape& tape, const BoundParams& p, ad::NodeId a_with_grid) const;
    ad::NodeId project(ad::Tape& tape, const BoundParams& p, ad::NodeId v) const;
    ad::NodeId spectral_weight(ad::Tape& tape, const BoundParams& p, std::size_t layer) const;
    ad::NodeId layer_forward(ad::Tape& tape, const BoundParams& p, ad::NodeId v, std::size_t layer) const;

    /// Q(L_L(...L_1(P(a)))), shape [B, d_u, X, Y, T].
    ad::NodeId forward(ad::Tape& tape, const BoundParams& p, const Tensor& a) const;
    /// Q(P(a)) on the t = 0 slice, shape [B, d_u, X, Y, 1].
    ad::NodeId reconstruct_initial(ad::Tape& tape, const BoundParams& p, const Tensor& a) const;

    Tensor predict(const Tensor& a) const;
    Tensor predict_initial(const Tensor& a) const;

private:
    void check_input(const Tensor& a) const;
    ad::NodeId activate(ad::Tape& tape, ad::NodeId v) const;

    OperatorConfig config_;
    std::vector<ParamBlock> params_;
    std::vector<std::size_t> spectral_blocks_; // first block index of each layer's R
};

/// Expected block names and shapes for a config, in storage order.
std::vector<std::pair<std::string, Shape>> param_layout(const OperatorConfig& config);

/// Slice t = 0 of a [B, C, X, Y, T] tensor, kept as extent 1.
Tensor initial_slice(const Tensor& field);

/// Appends normalized cell-centre coordinates as two extra channels.
Tensor with_grid_channels(const Tensor& a);

} // namespace tfno::op
