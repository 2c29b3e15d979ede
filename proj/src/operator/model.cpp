#include <cmath>
#include <random>
#include <stdexcept>

#include "tfno/errors.hpp"
#include "tfno/operator/operator.hpp"
#include "tfno/seed.hpp"
#include "tfno/tt/tt.hpp"

namespace tfno::op {

namespace {

constexpr std::size_t tt_order = 5;

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

// Per-entry variance of the real and imaginary parts of R(k). With
// width * 2 * v = 1 one application of R(k) keeps E|z|^2 unchanged, so R^r
// neither explodes nor vanishes at initialization.
double spectral_init_variance(std::size_t width) { return 1.0 / (2.0 * static_cast<double>(width)); }

Tensor normal_tensor(Shape shape, double std_dev, std::uint64_t seed)
{
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

} // namespace

void OperatorConfig::validate() const
{
    if (layers == 0) throw ConfigError("operator: layers must be >= 1");
    if (power == 0 || power > 8) throw ConfigError("operator: power must be in [1, 8]");
    if (width == 0 || in_channels == 0 || out_channels == 0 || lift_width == 0 || projection_width == 0) {
        throw ConfigError("operator: channel counts must be positive");
    }
    for (auto m : modes.kept) {
        if (m == 0) throw ConfigError("operator: modes must be positive");
    }
    if (activation != "gelu" && activation != "relu" && activation != "identity") {
        throw ConfigError("operator: unknown activation '" + activation + "'");
    }
    if (factorization == Factorization::tt) {
        if (tt_ranks.size() != tt_order - 1) {
            throw ConfigError("operator: tt factorization needs " + std::to_string(tt_order - 1) + " ranks, got " +
                              std::to_string(tt_ranks.size()));
        }
        for (auto r : tt_ranks) {
            if (r == 0) throw ConfigError("operator: tt ranks must be >= 1");
        }
    }
}

std::vector<std::pair<std::string, Shape>> param_layout(const OperatorConfig& c)
{
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("P.W1", Shape{c.lift_width, c.in_channels + grid_channels});
    out.emplace_back("P.b1", Shape{c.lift_width});
    out.emplace_back("P.W2", Shape{c.width, c.lift_width});
    out.emplace_back("P.b2", Shape{c.width});
    const Shape r_shape = spectral_weight_shape(c.modes, c.width);
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string p = layer_prefix(l);
        out.emplace_back(p + ".W", Shape{c.width, c.width});
        if (c.factorization == Factorization::dense) {
            out.emplace_back(p + ".R", r_shape);
        } else {
            std::vector<std::size_t> chain{1};
            chain.insert(chain.end(), c.tt_ranks.begin(), c.tt_ranks.end());
            chain.push_back(1);
            for (std::size_t k = 0; k < tt_order; ++k) {
                out.emplace_back(p + ".R.core" + std::to_string(k), Shape{chain[k], r_shape[k], chain[k + 1]});
            }
        }
    }
    out.emplace_back("Q.W1", Shape{c.projection_width, c.width});
    out.emplace_back("Q.b1", Shape{c.projection_width});
    out.emplace_back("Q.W2", Shape{c.out_channels, c.projection_width});
    out.emplace_back("Q.b2", Shape{c.out_channels});
    return out;
}

NeuralOperator::NeuralOperator(OperatorConfig config, std::vector<ParamBlock> params)
    : config_(std::move(config)), params_(std::move(params))
{
    config_.validate();
    const auto layout = param_layout(config_);
    if (layout.size() != params_.size()) {
        throw IncompatibleArtifact("operator: expected " + std::to_string(layout.size()) + " parameter blocks, got " +
                                   std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].first != params_[i].name || layout[i].second != params_[i].value.shape()) {
            throw IncompatibleArtifact("operator: block " + std::to_string(i) + " is " + params_[i].name + " " +
                                       shape_to_string(params_[i].value.shape()) + ", expected " + layout[i].first +
                                       " " + shape_to_string(layout[i].second));
        }
    }
    for (std::size_t l = 0; l < config_.layers; ++l) {
        spectral_blocks_.push_back(block_index(layer_prefix(l) + (config_.factorization == Factorization::dense
                                                                       ? ".R"
                                                                       : ".R.core0")));
    }
}

NeuralOperator NeuralOperator::init(const OperatorConfig& config, std::uint64_t seed)
{
    config.validate();
    const auto layout = param_layout(config);
    std::vector<ParamBlock> params;
    const double r_var = spectral_init_variance(config.width);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& [name, shape] = layout[i];
        const std::uint64_t s = derive_seed(seed, i);
        Tensor value;
        if (name.ends_with(".R")) {
            value = normal_tensor(shape, std::sqrt(r_var), s);
        } else if (name.ends_with(".R.core0")) {
            // All cores of a layer come from one TT draw, stored block by block.
            const Shape dense = spectral_weight_shape(config.modes, config.width);
            tt::TTSpec spec{dense, config.tt_ranks, tt::init_scale_for_variance(r_var, config.tt_ranks, tt_order)};
            tt::TTCores cores = tt::tt_random_init(spec, s);
            for (std::size_t k = 0; k < tt_order; ++k) params.push_back({layout[i + k].first, cores.cores()[k]});
            i += tt_order - 1;
            continue;
        } else if (name.find(".b") != std::string::npos) {
            value = Tensor(shape);
        } else {
            value = normal_tensor(shape, 1.0 / std::sqrt(static_cast<double>(shape[1])), s);
        }
        params.push_back({name, std::move(value)});
    }
    return NeuralOperator(config, std::move(params));
}

std::size_t NeuralOperator::block_index(const std::string& name) const
{
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    throw std::out_of_range("operator: no parameter block named " + name);
}

ParamCount NeuralOperator::param_count() const
{
    ParamCount c;
    for (const auto& p : params_) {
        c.total += p.value.size();
        if (p.name.find(".R") != std::string::npos) c.spectral += p.value.size();
    }
    c.dense_spectral = config_.layers * shape_product(spectral_weight_shape(config_.modes, config_.width));
    c.dense_equivalent = c.total - c.spectral + c.dense_spectral;
    return c;
}

BoundParams NeuralOperator::bind(ad::Tape& tape) const
{
    BoundParams ids;
    for (const auto& p : params_) ids.push_back(tape.parameter(p.value));
    return ids;
}

BoundParams NeuralOperator::bind_constant(ad::Tape& tape) const
{
    BoundParams ids;
    for (const auto& p : params_) ids.push_back(tape.constant(p.value));
    return ids;
}

void NeuralOperator::check_input(const Tensor& a) const
{
    if (a.rank() != 5 || a.extent(1) != config_.in_channels) {
        throw std::invalid_argument("operator: input must be [B, " + std::to_string(config_.in_channels) +
                                    ", X, Y, T], got " + shape_to_string(a.shape()));
    }
}

ad::NodeId NeuralOperator::input(ad::Tape& tape, const Tensor& a) const
{
    check_input(a);
    return tape.constant(with_grid_channels(a));
}

ad::NodeId NeuralOperator::activate(ad::Tape& tape, ad::NodeId v) const
{
    if (config_.activation == "gelu") return ad::gelu(tape, v);
    if (config_.activation == "relu") return ad::relu(tape, v);
    return ad::identity(tape, v);
}

ad::NodeId NeuralOperator::lift(ad::Tape& tape, const BoundParams& p, ad::NodeId x) const
{
    ad::NodeId h = ad::add_channel_bias(tape, ad::channel_matmul(tape, x, p[0]), p[1]);
    h = activate(tape, h);
    return ad::add_channel_bias(tape, ad::channel_matmul(tape, h, p[2]), p[3]);
}

ad::NodeId NeuralOperator::project(ad::Tape& tape, const BoundParams& p, ad::NodeId v) const
{
    const std::size_t q = params_.size() - 4;
    ad::NodeId h = ad::add_channel_bias(tape, ad::channel_matmul(tape, v, p[q]), p[q + 1]);
    h = activate(tape, h);
    return ad::add_channel_bias(tape, ad::channel_matmul(tape, h, p[q + 2]), p[q + 3]);
}

ad::NodeId NeuralOperator::spectral_weight(ad::Tape& tape, const BoundParams& p, std::size_t layer) const
{
    const std::size_t first = spectral_blocks_.at(layer);
    if (config_.factorization == Factorization::dense) return p[first];
    std::vector<ad::NodeId> cores(p.begin() + static_cast<std::ptrdiff_t>(first),
                                  p.begin() + static_cast<std::ptrdiff_t>(first + tt_order));
    return tt::tt_contract(tape, cores);
}

ad::NodeId NeuralOperator::layer_forward(ad::Tape& tape, const BoundParams& p, ad::NodeId v, std::size_t layer) const
{
    const std::size_t w = spectral_blocks_.at(layer) - 1;
    ad::NodeId bypass = ad::channel_matmul(tape, v, p[w]);
    ad::NodeId kernel = spectral_conv(tape, v, spectral_weight(tape, p, layer), config_.modes, config_.power);
    return activate(tape, ad::add(tape, bypass, kernel));
}

ad::NodeId NeuralOperator::forward(ad::Tape& tape, const BoundParams& p, const Tensor& a) const
{
    ad::NodeId v = lift(tape, p, input(tape, a));
    for (std::size_t l = 0; l < config_.layers; ++l) v = layer_forward(tape, p, v, l);
    return project(tape, p, v);
}

ad::NodeId NeuralOperator::reconstruct_initial(ad::Tape& tape, const BoundParams& p, const Tensor& a) const
{
    check_input(a);
    return project(tape, p, lift(tape, p, input(tape, initial_slice(a))));
}

Tensor NeuralOperator::predict(const Tensor& a) const
{
    ad::Tape tape;
    return tape.value(forward(tape, bind_constant(tape), a));
}

Tensor NeuralOperator::predict_initial(const Tensor& a) const
{
    ad::Tape tape;
    return tape.value(reconstruct_initial(tape, bind_constant(tape), a));
}

Tensor initial_slice(const Tensor& field)
{
    if (field.rank() != 5) throw std::invalid_argument("initial_slice: expected rank 5, got " + shape_to_string(field.shape()));
    const std::size_t nt = field.extent(4);
    const std::size_t lines = field.size() / nt;
    Shape shape = field.shape();
    shape[4] = 1;
    Tensor out(shape);
    for (std::size_t i = 0; i < lines; ++i) out[i] = field[i * nt];
    return out;
}

Tensor with_grid_channels(const Tensor& a)
{
    if (a.rank() != 5) throw std::invalid_argument("with_grid_channels: expected rank 5, got " + shape_to_string(a.shape()));
    const std::size_t batch = a.extent(0), ch = a.extent(1), nx = a.extent(2), ny = a.extent(3), nt = a.extent(4);
    const std::size_t plane = nx * ny * nt;
    Tensor out({batch, ch + grid_channels, nx, ny, nt});
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(b * ch * plane), ch * plane,
                    out.data().begin() + static_cast<std::ptrdiff_t>(b * (ch + grid_channels) * plane));
        double* gx = out.data().data() + (b * (ch + grid_channels) + ch) * plane;
        double* gy = gx + plane;
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j)
                for (std::size_t t = 0; t < nt; ++t) {
                    const std::size_t idx = (i * ny + j) * nt + t;
                    gx[idx] = (static_cast<double>(i) + 0.5) / static_cast<double>(nx);
                    gy[idx] = (static_cast<double>(j) + 0.5) / static_cast<double>(ny);
                }
    }
    return out;
}

} // namespace tfno::op
