#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tfno/ndtensor/tensor.hpp"

namespace tfno::ad {

using NodeId = std::size_t;
using Value = std::variant<Tensor, ComplexTensor>;

bool is_empty(const Value& v);

/// Gradient buffers for the parameter leaves of one backward pass. Leaves the
/// loss does not depend on hold zeros of the leaf's shape.
class Gradients {
public:
    const Tensor& operator[](NodeId id) const;
    bool contains(NodeId id) const;
    const std::vector<NodeId>& ids() const { return ids_; }

private:
    friend class Tape;
    std::vector<NodeId> ids_;
    std::vector<Tensor> grads_;
};

/// Append-only record of a computation. Node ids are issued in creation order,
/// so reverse creation order is a valid (and fixed) reverse topological order.
/// Single-threaded; use one tape per worker.
class Tape {
public:
    /// Fills grad_in[j] with the contribution to input j (left empty when
    /// needs[j] is false or the input gets no gradient).
    using Backward = std::function<void(const Value& grad_out, std::vector<Value>& grad_in,
                                        const std::vector<bool>& needs)>;

    Tape() = default;
    // Backward closures hold a pointer to the tape, so it stays put.
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId parameter(Tensor value);
    NodeId constant(Tensor value);

    NodeId record(Value value, std::vector<NodeId> inputs, Backward backward);

    const Tensor& value(NodeId id) const;
    const ComplexTensor& complex_value(NodeId id) const;
    bool is_complex(NodeId id) const;
    bool requires_grad(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeId>& parameters() const { return parameters_; }

    /// Reverse sweep from a scalar node.
    Gradients backprop(NodeId loss) const;

private:
    struct Node {
        Value value;
        std::vector<NodeId> inputs;
        Backward backward;
        bool requires_grad = false;
        bool is_parameter = false;
    };
    const Node& node(NodeId id) const;

    std::deque<Node> nodes_; // deque keeps value references stable as the tape grows
    std::vector<NodeId> parameters_;
};

enum class ElementwiseOp { add, sub, mul, scale, gelu, relu };

/// Dispatcher over the elementwise set; `b` is required for add/sub/mul,
/// `factor` is used by scale.
NodeId elementwise(Tape& tape, ElementwiseOp op, NodeId a, std::optional<NodeId> b = std::nullopt,
                   double factor = 1.0);

NodeId add(Tape& tape, NodeId a, NodeId b);
NodeId sub(Tape& tape, NodeId a, NodeId b);
NodeId mul(Tape& tape, NodeId a, NodeId b);
NodeId scale(Tape& tape, NodeId a, double factor);
NodeId gelu(Tape& tape, NodeId a);
NodeId relu(Tape& tape, NodeId a);
NodeId identity(Tape& tape, NodeId a);

/// Sum of all entries, as a scalar node.
NodeId sum(Tape& tape, NodeId a);

/// Per-grid-point linear map: v[batch, ch_in, spatial...], W[ch_out, ch_in].
NodeId channel_matmul(Tape& tape, NodeId v, NodeId weight);

/// Adds b[c] to every grid point of channel c.
NodeId add_channel_bias(Tape& tape, NodeId v, NodeId bias);

/// Taped real-input forward transform (see fft::rfftn).
NodeId rfftn(Tape& tape, NodeId v, std::vector<std::size_t> axes);

/// Taped inverse transform (see fft::irfftn).
NodeId irfftn(Tape& tape, NodeId spectrum, std::vector<std::size_t> axes, std::vector<std::size_t> out_extents);

// Scalar kernels shared with tests.
double gelu_value(double x);
double gelu_derivative(double x);

/// Eager forward of channel_matmul without a tape.
Tensor channel_matmul_value(const Tensor& v, const Tensor& weight);

} // namespace tfno::ad
