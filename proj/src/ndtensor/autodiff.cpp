#include "tfno/ndtensor/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

#include "tfno/ndtensor/fft.hpp"

namespace tfno::ad {

namespace {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }
} // namespace

bool is_empty(const Value& v)
{
    return std::visit([](const auto& t) { return t.size() == 0; }, v);
}

namespace {

void accumulate(std::optional<Value>& slot, Value&& contribution)
{
    if (!slot) {
        slot = std::move(contribution);
        return;
    }
    if (slot->index() != contribution.index()) throw std::logic_error("backprop: real/complex gradient mixup");
    if (auto* t = std::get_if<Tensor>(&*slot)) {
        auto& c = std::get<Tensor>(contribution);
        require_same_shape(*t, c, "gradient accumulation");
        auto dst = t->data();
        auto src = c.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else {
        auto& z = std::get<ComplexTensor>(*slot);
        auto& c = std::get<ComplexTensor>(contribution);
        if (z.shape() != c.shape()) throw std::logic_error("backprop: complex gradient shape mismatch");
        auto dst = z.data();
        auto src = c.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

std::size_t inner_size(const Shape& shape)
{
    std::size_t s = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) s *= shape[i];
    return s;
}

} // namespace

const Tensor& Gradients::operator[](NodeId id) const
{
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i] == id) return grads_[i];
    }
    throw std::out_of_range("no gradient recorded for node " + std::to_string(id));
}

bool Gradients::contains(NodeId id) const
{
    for (auto i : ids_) {
        if (i == id) return true;
    }
    return false;
}

const Tape::Node& Tape::node(NodeId id) const
{
    if (id >= nodes_.size()) throw std::out_of_range("tape: unknown node id " + std::to_string(id));
    return nodes_[id];
}

NodeId Tape::parameter(Tensor value)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.is_parameter = true;
    nodes_.push_back(std::move(n));
    parameters_.push_back(nodes_.size() - 1);
    return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value)
{
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Tape::record(Value value, std::vector<NodeId> inputs, Backward backward)
{
    Node n;
    n.value = std::move(value);
    for (auto in : inputs) {
        if (in >= nodes_.size()) throw std::logic_error("tape: input node " + std::to_string(in) + " not yet produced");
        n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    }
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

const Tensor& Tape::value(NodeId id) const
{
    const auto* t = std::get_if<Tensor>(&node(id).value);
    if (!t) throw std::logic_error("tape: node " + std::to_string(id) + " is complex");
    return *t;
}

const ComplexTensor& Tape::complex_value(NodeId id) const
{
    const auto* t = std::get_if<ComplexTensor>(&node(id).value);
    if (!t) throw std::logic_error("tape: node " + std::to_string(id) + " is real");
    return *t;
}

bool Tape::is_complex(NodeId id) const { return std::holds_alternative<ComplexTensor>(node(id).value); }
bool Tape::requires_grad(NodeId id) const { return node(id).requires_grad; }

Gradients Tape::backprop(NodeId loss) const
{
    const Node& seed_node = node(loss);
    const auto* seed_value = std::get_if<Tensor>(&seed_node.value);
    if (!seed_value || seed_value->size() != 1) {
        throw std::invalid_argument("backprop: loss node must be a real scalar");
    }

    std::vector<std::optional<Value>> grads(loss + 1);
    grads[loss] = Tensor::full(seed_value->shape(), 1.0);

    for (NodeId id = loss + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!grads[id] || !n.backward || n.inputs.empty()) continue;
        std::vector<bool> needs(n.inputs.size());
        for (std::size_t j = 0; j < n.inputs.size(); ++j) needs[j] = nodes_[n.inputs[j]].requires_grad;
        std::vector<Value> grad_in(n.inputs.size());
        n.backward(*grads[id], grad_in, needs);
        for (std::size_t j = 0; j < n.inputs.size(); ++j) {
            if (!needs[j] || is_empty(grad_in[j])) continue;
            accumulate(grads[n.inputs[j]], std::move(grad_in[j]));
        }
        if (!n.is_parameter) grads[id].reset();
    }

    Gradients out;
    for (NodeId p : parameters_) {
        out.ids_.push_back(p);
        if (p <= loss && grads[p]) {
            out.grads_.push_back(std::get<Tensor>(std::move(*grads[p])));
        } else {
            out.grads_.push_back(Tensor::zeros(std::get<Tensor>(nodes_[p].value).shape()));
        }
    }
    return out;
}

double gelu_value(double x) { return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 * 0.5); }

double gelu_derivative(double x)
{
    const double cdf = 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5);
    const double pdf = std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

NodeId add(Tape& tape, NodeId a, NodeId b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    return tape.record(tfno::add(va, vb), {a, b}, [](const Value& g, std::vector<Value>& gi, const std::vector<bool>& needs) {
        const auto& gt = std::get<Tensor>(g);
        if (needs[0]) gi[0] = gt;
        if (needs[1]) gi[1] = gt;
    });
}

NodeId sub(Tape& tape, NodeId a, NodeId b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    return tape.record(tfno::sub(va, vb), {a, b}, [](const Value& g, std::vector<Value>& gi, const std::vector<bool>& needs) {
        const auto& gt = std::get<Tensor>(g);
        if (needs[0]) gi[0] = gt;
        if (needs[1]) gi[1] = scaled(gt, -1.0);
    });
}

NodeId mul(Tape& tape, NodeId a, NodeId b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    require_same_shape(va, vb, "mul");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    const Tape* tp = &tape;
    return tape.record(std::move(out), {a, b},
                       [tp, a, b](const Value& g, std::vector<Value>& gi, const std::vector<bool>& needs) {
                           const auto& gt = std::get<Tensor>(g);
                           const Tensor& xa = tp->value(a);
                           const Tensor& xb = tp->value(b);
                           if (needs[0]) {
                               Tensor d(gt.shape());
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] = gt[i] * xb[i];
                               gi[0] = std::move(d);
                           }
                           if (needs[1]) {
                               Tensor d(gt.shape());
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] = gt[i] * xa[i];
                               gi[1] = std::move(d);
                           }
                       });
}

NodeId scale(Tape& tape, NodeId a, double factor)
{
    return tape.record(scaled(tape.value(a), factor), {a},
                       [factor](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
                           gi[0] = scaled(std::get<Tensor>(g), factor);
                       });
}

NodeId identity(Tape& tape, NodeId a)
{
    return tape.record(tape.value(a), {a}, [](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
        gi[0] = std::get<Tensor>(g);
    });
}

NodeId gelu(Tape& tape, NodeId a)
{
    const Tensor& x = tape.value(a);
    Tensor out(x.shape());
    constexpr double half_sqrt2 = std::numbers::sqrt2 * 0.5;
    // The normal CDF is kept for the backward pass only when one will run.
    auto cdf = std::make_shared<std::vector<double>>(tape.requires_grad(a) ? x.size() : 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = 0.5 * std::erfc(-x[i] * half_sqrt2);
        out[i] = x[i] * c;
        if (!cdf->empty()) (*cdf)[i] = c;
    }
    const Tape* tp = &tape;
    return tape.record(std::move(out), {a}, [tp, a, cdf](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
        constexpr double pdf_scale = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        const auto& gt = std::get<Tensor>(g);
        const Tensor& xv = tp->value(a);
        Tensor d(gt.shape());
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double xi = xv[i];
            d[i] = gt[i] * ((*cdf)[i] + xi * std::exp(-0.5 * xi * xi) * pdf_scale);
        }
        gi[0] = std::move(d);
    });
}

NodeId relu(Tape& tape, NodeId a)
{
    const Tensor& x = tape.value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    const Tape* tp = &tape;
    return tape.record(std::move(out), {a}, [tp, a](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
        const auto& gt = std::get<Tensor>(g);
        const Tensor& xv = tp->value(a);
        Tensor d(gt.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] > 0.0 ? gt[i] : 0.0;
        gi[0] = std::move(d);
    });
}

NodeId elementwise(Tape& tape, ElementwiseOp op, NodeId a, std::optional<NodeId> b, double factor)
{
    auto need_b = [&]() {
        if (!b) throw std::invalid_argument("elementwise: binary op requires a second operand");
        return *b;
    };
    switch (op) {
    case ElementwiseOp::add: return add(tape, a, need_b());
    case ElementwiseOp::sub: return sub(tape, a, need_b());
    case ElementwiseOp::mul: return mul(tape, a, need_b());
    case ElementwiseOp::scale: return scale(tape, a, factor);
    case ElementwiseOp::gelu: return gelu(tape, a);
    case ElementwiseOp::relu: return relu(tape, a);
    }
    throw std::invalid_argument("elementwise: unknown op");
}

NodeId sum(Tape& tape, NodeId a)
{
    const Tensor& x = tape.value(a);
    double s = 0.0;
    for (double v : x.data()) s += v;
    Shape shape = x.shape();
    return tape.record(Tensor::scalar(s), {a},
                       [shape](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
                           gi[0] = Tensor::full(shape, std::get<Tensor>(g).item());
                       });
}

Tensor channel_matmul_value(const Tensor& v, const Tensor& w)
{
    if (v.rank() < 2 || w.rank() != 2) {
        throw std::invalid_argument("channel_matmul: expected v[batch, ch, ...] and W[ch_out, ch_in], got " +
                                    shape_to_string(v.shape()) + " and " + shape_to_string(w.shape()));
    }
    const std::size_t batch = v.extent(0);
    const std::size_t cin = v.extent(1);
    const std::size_t cout = w.extent(0);
    if (w.extent(1) != cin) {
        throw std::invalid_argument("channel_matmul: W " + shape_to_string(w.shape()) + " does not accept " +
                                    std::to_string(cin) + " input channels of v " + shape_to_string(v.shape()));
    }
    const std::size_t s = inner_size(v.shape());
    Shape out_shape = v.shape();
    out_shape[1] = cout;
    Tensor out(out_shape);
    ConstMatrixMap wm(w.data().data(), idx(cout), idx(cin));
    for (std::size_t b = 0; b < batch; ++b) {
        ConstMatrixMap vb(v.data().data() + b * cin * s, idx(cin), idx(s));
        MatrixMap ob(out.data().data() + b * cout * s, idx(cout), idx(s));
        ob.noalias() = wm * vb;
    }
    return out;
}

NodeId channel_matmul(Tape& tape, NodeId v, NodeId weight)
{
    Tensor out = channel_matmul_value(tape.value(v), tape.value(weight));
    const Tape* tp = &tape;
    return tape.record(std::move(out), {v, weight},
                       [tp, v, weight](const Value& g, std::vector<Value>& gi, const std::vector<bool>& needs) {
                           const auto& gt = std::get<Tensor>(g);
                           const Tensor& x = tp->value(v);
                           const Tensor& w = tp->value(weight);
                           const std::size_t batch = x.extent(0);
                           const std::size_t cin = x.extent(1);
                           const std::size_t cout = w.extent(0);
                           const std::size_t s = inner_size(x.shape());
                           ConstMatrixMap wm(w.data().data(), idx(cout), idx(cin));
                           if (needs[0]) {
                               Tensor dx(x.shape());
                               for (std::size_t b = 0; b < batch; ++b) {
                                   ConstMatrixMap gb(gt.data().data() + b * cout * s, idx(cout), idx(s));
                                   MatrixMap db(dx.data().data() + b * cin * s, idx(cin), idx(s));
                                   db.noalias() = wm.transpose() * gb;
                               }
                               gi[0] = std::move(dx);
                           }
                           if (needs[1]) {
                               Tensor dw(w.shape());
                               MatrixMap dwm(dw.data().data(), idx(cout), idx(cin));
                               for (std::size_t b = 0; b < batch; ++b) {
                                   ConstMatrixMap gb(gt.data().data() + b * cout * s, idx(cout), idx(s));
                                   ConstMatrixMap xb(x.data().data() + b * cin * s, idx(cin), idx(s));
                                   dwm.noalias() += gb * xb.transpose();
                               }
                               gi[1] = std::move(dw);
                           }
                       });
}

NodeId add_channel_bias(Tape& tape, NodeId v, NodeId bias)
{
    const Tensor& x = tape.value(v);
    const Tensor& b = tape.value(bias);
    if (x.rank() < 2 || b.rank() != 1 || b.extent(0) != x.extent(1)) {
        throw std::invalid_argument("add_channel_bias: bias " + shape_to_string(b.shape()) + " does not match " +
                                    shape_to_string(x.shape()));
    }
    const std::size_t batch = x.extent(0);
    const std::size_t ch = x.extent(1);
    const std::size_t s = inner_size(x.shape());
    Tensor out = x;
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < ch; ++c) {
            double* dst = out.data().data() + (n * ch + c) * s;
            for (std::size_t k = 0; k < s; ++k) dst[k] += b[c];
        }
    }
    return tape.record(std::move(out), {v, bias},
                       [batch, ch, s](const Value& g, std::vector<Value>& gi, const std::vector<bool>& needs) {
                           const auto& gt = std::get<Tensor>(g);
                           if (needs[0]) gi[0] = gt;
                           if (needs[1]) {
                               Tensor db({ch});
                               for (std::size_t n = 0; n < batch; ++n) {
                                   for (std::size_t c = 0; c < ch; ++c) {
                                       const double* src = gt.data().data() + (n * ch + c) * s;
                                       double acc = 0.0;
                                       for (std::size_t k = 0; k < s; ++k) acc += src[k];
                                       db[c] += acc;
                                   }
                               }
                               gi[1] = std::move(db);
                           }
                       });
}

NodeId rfftn(Tape& tape, NodeId v, std::vector<std::size_t> axes)
{
    const Tensor& x = tape.value(v);
    ComplexTensor out = fft::rfftn(x, axes);
    std::vector<std::size_t> extents;
    for (auto a : axes) extents.push_back(x.extent(a));
    return tape.record(std::move(out), {v},
                       [axes, extents](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
                           gi[0] = fft::rfftn_adjoint(std::get<ComplexTensor>(g), axes, extents);
                       });
}

NodeId irfftn(Tape& tape, NodeId spectrum, std::vector<std::size_t> axes, std::vector<std::size_t> out_extents)
{
    Tensor out = fft::irfftn(tape.complex_value(spectrum), axes, out_extents);
    return tape.record(std::move(out), {spectrum},
                       [axes](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
                           gi[0] = fft::irfftn_adjoint(std::get<Tensor>(g), axes);
                       });
}

} // namespace tfno::ad
