#include "tfno/losses/losses.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

#include "tfno/errors.hpp"
#include "tfno/seed.hpp"

namespace tfno::loss {

namespace {

struct AxisGeometry {
    std::size_t n = 0, stride = 0, outer = 0;
};

AxisGeometry axis_geometry(const Shape& shape, std::size_t axis)
{
    if (axis >= shape.size()) throw std::invalid_argument("fd_derivative: axis out of range");
    AxisGeometry g;
    g.n = shape[axis];
    g.stride = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) g.stride *= shape[i];
    g.outer = 1;
    for (std::size_t i = 0; i < axis; ++i) g.outer *= shape[i];
    if (g.n < 3) {
        throw std::invalid_argument("fd_derivative: axis " + std::to_string(axis) + " has extent " +
                                    std::to_string(g.n) + ", need >= 3");
    }
    return g;
}

double pow_abs(double x, double p) { return p == 2.0 ? x * x : std::pow(std::abs(x), p); }

// d/dx |x|^p
double pow_abs_slope(double x, double p)
{
    if (p == 2.0) return 2.0 * x;
    if (x == 0.0) return 0.0;
    return p * std::pow(std::abs(x), p - 1.0) * (x > 0.0 ? 1.0 : -1.0);
}

// Sum of |v|^p over each batch entry (contiguous blocks of size/batch).
std::vector<double> per_sample_power_sum(const Tensor& v, std::size_t batch, double p)
{
    const std::size_t per = v.size() / batch;
    std::vector<double> out(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) acc += pow_abs(v[b * per + i], p);
        out[b] = acc;
    }
    return out;
}

// Fields entering the loss: order 0 is the field itself, order 1 the
// derivatives along each derivative axis.
struct SobolevTerms {
    std::vector<std::size_t> axes;
    Tensor err;
    std::vector<Tensor> derr;      // per axis
    std::vector<double> num0, den0; // per sample
    std::vector<double> num1, den1;
    std::vector<double> s;         // per sample inner sum
    bool has_first = false;
};

SobolevTerms sobolev_terms(const Tensor& y_hat, const Tensor& y, const SobolevConfig& cfg)
{
    cfg.validate();
    require_same_shape(y_hat, y, "sobolev_h1_relative");
    if (y.rank() < 2 || y.extent(0) == 0) {
        throw std::invalid_argument("sobolev_h1_relative: expected [B, C, ...], got " + shape_to_string(y.shape()));
    }
    const std::size_t batch = y.extent(0);
    SobolevTerms t;
    t.err = sub(y_hat, y);
    t.num0 = per_sample_power_sum(t.err, batch, cfg.p);
    t.den0 = per_sample_power_sum(y, batch, cfg.p);
    t.s.assign(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        t.den0[b] += cfg.eps_den;
        t.s[b] = t.num0[b] / t.den0[b];
    }
    if (cfg.order >= 1) {
        t.axes = derivative_axes(y.shape());
        t.has_first = !t.axes.empty();
    }
    if (t.has_first) {
        t.num1.assign(batch, 0.0);
        t.den1.assign(batch, cfg.eps_den);
        for (auto axis : t.axes) {
            Tensor de = fd_derivative(t.err, axis);
            const auto n = per_sample_power_sum(de, batch, cfg.p);
            const auto d = per_sample_power_sum(fd_derivative(y, axis), batch, cfg.p);
            for (std::size_t b = 0; b < batch; ++b) {
                t.num1[b] += n[b];
                t.den1[b] += d[b];
            }
            t.derr.push_back(std::move(de));
        }
        for (std::size_t b = 0; b < batch; ++b) t.s[b] += t.num1[b] / t.den1[b];
    }
    return t;
}

} // namespace

void SobolevConfig::validate() const
{
    if (order != 0 && order != 1) throw ConfigError("sobolev: order must be 0 or 1");
    if (!(p >= 1.0) || !std::isfinite(p)) throw ConfigError("sobolev: p must be >= 1");
    if (!(eps_den > 0.0)) throw ConfigError("sobolev: eps_den must be > 0");
}

void LossWeights::validate() const
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("loss weights: lambda must be > 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("loss weights: gamma must be >= 0");
}

Tensor fd_derivative(const Tensor& y, std::size_t axis)
{
    const auto g = axis_geometry(y.shape(), axis);
    Tensor out(y.shape());
    const double* src = y.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < g.outer; ++o) {
        const std::size_t base = o * g.n * g.stride;
        for (std::size_t s = 0; s < g.stride; ++s) {
            const double* in = src + base + s;
            double* d = dst + base + s;
            const std::size_t st = g.stride;
            d[0] = in[st] - in[0];
            for (std::size_t i = 1; i + 1 < g.n; ++i) d[i * st] = 0.5 * (in[(i + 1) * st] - in[(i - 1) * st]);
            d[(g.n - 1) * st] = in[(g.n - 1) * st] - in[(g.n - 2) * st];
        }
    }
    return out;
}

Tensor fd_derivative_adjoint(const Tensor& gin, std::size_t axis)
{
    const auto g = axis_geometry(gin.shape(), axis);
    Tensor out(gin.shape());
    const double* src = gin.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < g.outer; ++o) {
        const std::size_t base = o * g.n * g.stride;
        for (std::size_t s = 0; s < g.stride; ++s) {
            const double* gr = src + base + s;
            double* d = dst + base + s;
            const std::size_t st = g.stride;
            d[0] -= gr[0];
            d[st] += gr[0];
            for (std::size_t i = 1; i + 1 < g.n; ++i) {
                d[(i + 1) * st] += 0.5 * gr[i * st];
                d[(i - 1) * st] -= 0.5 * gr[i * st];
            }
            d[(g.n - 1) * st] += gr[(g.n - 1) * st];
            d[(g.n - 2) * st] -= gr[(g.n - 1) * st];
        }
    }
    return out;
}

std::vector<std::size_t> derivative_axes(const Shape& shape)
{
    std::vector<std::size_t> axes;
    for (std::size_t a = 2; a < shape.size(); ++a) {
        if (shape[a] >= 3) axes.push_back(a);
    }
    return axes;
}

std::vector<double> sobolev_h1_relative_per_sample(const Tensor& y_hat, const Tensor& y, const SobolevConfig& cfg)
{
    const auto t = sobolev_terms(y_hat, y, cfg);
    std::vector<double> out(t.s.size());
    for (std::size_t b = 0; b < out.size(); ++b) out[b] = std::pow(t.s[b], 1.0 / cfg.p);
    return out;
}

double sobolev_h1_relative(const Tensor& y_hat, const Tensor& y, const SobolevConfig& cfg)
{
    const auto per = sobolev_h1_relative_per_sample(y_hat, y, cfg);
    double acc = 0.0;
    for (double v : per) acc += v;
    return acc / static_cast<double>(per.size());
}

ad::NodeId sobolev_h1_relative(ad::Tape& tape, ad::NodeId y_hat, const Tensor& y, const SobolevConfig& cfg)
{
    auto terms = std::make_shared<SobolevTerms>(sobolev_terms(tape.value(y_hat), y, cfg));
    const std::size_t batch = terms->s.size();
    double loss = 0.0;
    for (double s : terms->s) loss += std::pow(s, 1.0 / cfg.p);
    loss /= static_cast<double>(batch);

    const double p = cfg.p;
    return tape.record(Tensor::scalar(loss), {y_hat},
                       [terms, p, batch](const ad::Value& g, std::vector<ad::Value>& gi, const std::vector<bool>&) {
                           const double seed = std::get<Tensor>(g).item() / static_cast<double>(batch);
                           const SobolevTerms& t = *terms;
                           const std::size_t per = t.err.size() / batch;
                           // dL_b/dS_b, zero at S_b = 0 where the root is not differentiable.
                           std::vector<double> c(batch, 0.0);
                           for (std::size_t b = 0; b < batch; ++b) {
                               if (t.s[b] > 0.0) c[b] = seed * std::pow(t.s[b], 1.0 / p - 1.0) / p;
                           }
                           Tensor grad(t.err.shape());
                           for (std::size_t b = 0; b < batch; ++b) {
                               const double w0 = c[b] / t.den0[b];
                               for (std::size_t i = b * per; i < (b + 1) * per; ++i)
                                   grad[i] = w0 * pow_abs_slope(t.err[i], p);
                           }
                           for (std::size_t k = 0; k < t.axes.size(); ++k) {
                               const Tensor& de = t.derr[k];
                               Tensor w(de.shape());
                               for (std::size_t b = 0; b < batch; ++b) {
                                   const double w1 = c[b] / t.den1[b];
                                   for (std::size_t i = b * per; i < (b + 1) * per; ++i)
                                       w[i] = w1 * pow_abs_slope(de[i], p);
                               }
                               const Tensor back = fd_derivative_adjoint(w, t.axes[k]);
                               for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += back[i];
                           }
                           gi[0] = std::move(grad);
                       });
}

ad::NodeId total_loss(ad::Tape& tape, const op::NeuralOperator& model, const op::BoundParams& params,
                      const Tensor& a, const Tensor& u, const Tensor& u0, const LossWeights& w,
                      const SobolevConfig& cfg)
{
    w.validate();
    ad::NodeId approx = ad::scale(tape, sobolev_h1_relative(tape, model.forward(tape, params, a), u, cfg), w.lambda);
    if (w.gamma == 0.0) return approx;
    ad::NodeId recon = sobolev_h1_relative(tape, model.reconstruct_initial(tape, params, a), u0, cfg);
    return ad::add(tape, approx, ad::scale(tape, recon, w.gamma));
}

double total_loss(const op::NeuralOperator& model, const Tensor& a, const Tensor& u, const Tensor& u0,
                  const LossWeights& w, const SobolevConfig& cfg)
{
    ad::Tape tape;
    return tape.value(total_loss(tape, model, model.bind_constant(tape), a, u, u0, w, cfg)).item();
}

double r_squared(std::span<const double> y_hat, std::span<const double> y)
{
    if (y_hat.size() != y.size()) throw std::invalid_argument("r_squared: size mismatch");
    if (y.size() < 2) throw std::invalid_argument("r_squared: need at least two values");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r_squared: target has zero variance, R^2 undefined");
    return 1.0 - ss_res / ss_tot;
}

LandscapeGrid loss_landscape(const op::NeuralOperator& model,
                             const std::function<double(const op::NeuralOperator&)>& test_loss, std::size_t n,
                             double range, std::uint64_t seed)
{
    if (n == 0) throw std::invalid_argument("loss_landscape: grid size must be >= 1");
    if (!(range >= 0.0) || !std::isfinite(range)) throw std::invalid_argument("loss_landscape: bad range");

    const auto& theta = model.params();
    auto direction = [&](std::uint64_t stream) {
        std::mt19937_64 rng(derive_seed(seed, stream));
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<Tensor> d;
        for (const auto& block : theta) {
            Tensor t(block.value.shape());
            for (auto& v : t.data()) v = dist(rng);
            const double dn = l2_norm(t);
            const double tn = l2_norm(block.value);
            d.push_back(dn > 0.0 ? scaled(t, tn / dn) : t);
        }
        return d;
    };

    LandscapeGrid grid;
    grid.d1 = direction(1);
    grid.d2 = direction(2);
    for (std::size_t i = 0; i < n; ++i) {
        // Integer numerator keeps the centre exactly zero for odd n.
        const double c = n == 1 ? 0.0
                                : range * (2.0 * static_cast<double>(i) - static_cast<double>(n - 1)) /
                                      static_cast<double>(n - 1);
        grid.alphas.push_back(c);
        grid.betas.push_back(c);
    }
    grid.values.resize(n * n);
    op::NeuralOperator probe = model;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const auto& base = theta[k].value;
                auto& dst = probe.params()[k].value;
                for (std::size_t e = 0; e < base.size(); ++e) {
                    dst[e] = base[e] + grid.alphas[i] * grid.d1[k][e] + grid.betas[j] * grid.d2[k][e];
                }
            }
            grid.values[i * n + j] = test_loss(probe);
        }
    }
    return grid;
}

} // namespace tfno::loss
