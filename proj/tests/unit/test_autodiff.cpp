#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "test_util.hpp"
#include "tfno/ndtensor/autodiff.hpp"
#include "tfno/ndtensor/grad_check.hpp"

using namespace tfno;
using namespace tfno::ad;
using tfno::testing::random_complex;
using tfno::testing::random_tensor;

namespace {

// Weighted sum against a fixed tensor, so gradients are not uniform.
NodeId weighted_sum(Tape& tape, NodeId x, std::uint64_t seed)
{
    NodeId w = tape.constant(random_tensor(tape.value(x).shape(), seed));
    return sum(tape, mul(tape, x, w));
}

// Test-only complex op: multiply a spectrum by fixed complex weights.
NodeId complex_weight(Tape& tape, NodeId spec, const ComplexTensor& weights)
{
    const ComplexTensor& z = tape.complex_value(spec);
    ComplexTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * weights[i];
    return tape.record(std::move(out), {spec}, [weights](const Value& g, std::vector<Value>& gi, const std::vector<bool>&) {
        const auto& gz = std::get<ComplexTensor>(g);
        ComplexTensor d(gz.shape());
        for (std::size_t i = 0; i < gz.size(); ++i) d[i] = gz[i] * std::conj(weights[i]);
        gi[0] = std::move(d);
    });
}

} // namespace

TEST(Elementwise, AdditiveIdentity)
{
    Tape tape;
    Tensor x = random_tensor({2, 2}, 1);
    NodeId z = tape.constant(Tensor::zeros({2, 2}));
    NodeId xi = tape.constant(x);
    EXPECT_EQ(max_abs_diff(tape.value(elementwise(tape, ElementwiseOp::add, z, xi)), x), 0.0);
}

TEST(Elementwise, GeluAtZeroIsExactlyZero)
{
    EXPECT_EQ(gelu_value(0.0), 0.0);
    Tape tape;
    NodeId x = tape.constant(Tensor::zeros({3}));
    for (double v : tape.value(gelu(tape, x)).data()) EXPECT_EQ(v, 0.0);
}

TEST(Elementwise, ProductRuleAdjoint)
{
    Tape tape;
    NodeId a = tape.parameter(Tensor::scalar(2.0));
    NodeId b = tape.parameter(Tensor::scalar(3.0));
    Gradients g = tape.backprop(mul(tape, a, b));
    EXPECT_DOUBLE_EQ(g[a].item(), 3.0);
    EXPECT_DOUBLE_EQ(g[b].item(), 2.0);
}

TEST(Elementwise, ShapeMismatchNamesBothShapes)
{
    Tape tape;
    NodeId a = tape.constant(Tensor({2, 3}));
    NodeId b = tape.constant(Tensor({3, 2}));
    try {
        sub(tape, a, b);
        FAIL();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
        EXPECT_NE(msg.find("(3, 2)"), std::string::npos);
    }
    EXPECT_THROW(elementwise(tape, ElementwiseOp::mul, a), std::invalid_argument);
}

TEST(ChannelMatmul, IdentityAndZero)
{
    Tensor v = random_tensor({2, 3, 4, 2}, 3);
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    EXPECT_EQ(max_abs_diff(channel_matmul_value(v, eye), v), 0.0);
    EXPECT_EQ(max_abs(channel_matmul_value(v, Tensor({5, 3}))), 0.0);
    EXPECT_THROW(channel_matmul_value(v, Tensor({3, 4})), std::invalid_argument);
}

TEST(ChannelMatmul, MatchesTripleLoop)
{
    Tensor v = random_tensor({1, 3, 4}, 4);
    Tensor w = random_tensor({2, 3}, 5);
    Tensor out = channel_matmul_value(v, w);
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t p = 0; p < 4; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < 3; ++i) acc += w[o * 3 + i] * v[i * 4 + p];
            EXPECT_NEAR(out[o * 4 + p], acc, 1e-13);
        }
}

TEST(Backprop, SumOfSquares)
{
    Tape tape;
    NodeId t = tape.parameter(Tensor({2}, {1.0, 2.0}));
    Gradients g = tape.backprop(sum(tape, mul(tape, t, t)));
    EXPECT_DOUBLE_EQ(g[t][0], 2.0);
    EXPECT_DOUBLE_EQ(g[t][1], 4.0);
}

TEST(Backprop, DuplicatedUseAccumulates)
{
    Tape tape;
    NodeId t = tape.parameter(Tensor::scalar(3.0));
    EXPECT_DOUBLE_EQ(tape.backprop(mul(tape, t, t))[t].item(), 6.0);
}

TEST(Backprop, NonScalarSeedRejectedAndDisconnectedIsZero)
{
    Tape tape;
    NodeId a = tape.parameter(Tensor({2}, {1.0, 2.0}));
    NodeId unused = tape.parameter(Tensor({3}, {1.0, 1.0, 1.0}));
    EXPECT_THROW(tape.backprop(a), std::invalid_argument);
    Gradients g = tape.backprop(sum(tape, a));
    EXPECT_EQ(g[unused].shape(), (Shape{3}));
    EXPECT_EQ(max_abs(g[unused]), 0.0);
}

TEST(Backprop, CompositeGeluOfLinearMap)
{
    Tensor x = random_tensor({1, 3, 8}, 6);
    ScalarGraph f = [&x](Tape& tape, std::span<const NodeId> p) {
        NodeId xin = tape.constant(x);
        NodeId h = gelu(tape, channel_matmul(tape, xin, p[0]));
        return weighted_sum(tape, h, 99);
    };
    GradCheckReport r = grad_check(f, {random_tensor({4, 3}, 7)}, 1e-5);
    EXPECT_LT(r.worst(), 1e-6);
}

TEST(Backprop, DeterministicAcrossRuns)
{
    auto run = [] {
        Tape tape;
        NodeId x = tape.constant(random_tensor({2, 4, 8, 4}, 1));
        NodeId w = tape.parameter(random_tensor({4, 4}, 2));
        NodeId h = gelu(tape, channel_matmul(tape, x, w));
        NodeId s = irfftn(tape, rfftn(tape, h, {2, 3}), {2, 3}, {8, 4});
        return tape.backprop(weighted_sum(tape, s, 3))[w];
    };
    Tensor g1 = run();
    Tensor g2 = run();
    EXPECT_EQ(std::memcmp(g1.data().data(), g2.data().data(), g1.size() * sizeof(double)), 0);
}

// Every primitive's reverse rule against central differences.
TEST(PrimitiveGradients, MatchFiniteDifferences)
{
    const double h = 1e-5;
    const double tol = 1e-6;
    const Shape shape{2, 3, 4};
    const Tensor a0 = random_tensor(shape, 10);
    const Tensor b0 = random_tensor(shape, 11);

    auto binary = [&](auto op) {
        ScalarGraph f = [op](Tape& tape, std::span<const NodeId> p) { return weighted_sum(tape, op(tape, p[0], p[1]), 5); };
        return grad_check(f, {a0, b0}, h).worst();
    };
    EXPECT_LT(binary([](Tape& t, NodeId x, NodeId y) { return add(t, x, y); }), tol);
    EXPECT_LT(binary([](Tape& t, NodeId x, NodeId y) { return sub(t, x, y); }), tol);
    EXPECT_LT(binary([](Tape& t, NodeId x, NodeId y) { return mul(t, x, y); }), tol);

    auto unary = [&](auto op, const Tensor& at) {
        std::function<NodeId(Tape&, NodeId)> f = [op](Tape& tape, NodeId x) { return weighted_sum(tape, op(tape, x), 6); };
        return grad_check(f, at, h).worst();
    };
    EXPECT_LT(unary([](Tape& t, NodeId x) { return scale(t, x, -2.5); }, a0), tol);
    EXPECT_LT(unary([](Tape& t, NodeId x) { return gelu(t, x); }, a0), tol);
    // Keep relu probes away from the kink.
    Tensor shifted = a0;
    for (auto& v : shifted.data()) v += v >= 0 ? 0.1 : -0.1;
    EXPECT_LT(unary([](Tape& t, NodeId x) { return relu(t, x); }, shifted), tol);
    EXPECT_LT(unary([](Tape& t, NodeId x) { return identity(t, x); }, a0), tol);

    ScalarGraph mm = [](Tape& tape, std::span<const NodeId> p) { return weighted_sum(tape, channel_matmul(tape, p[0], p[1]), 7); };
    EXPECT_LT(grad_check(mm, {random_tensor({2, 3, 5}, 12), random_tensor({4, 3}, 13)}, h).worst(), tol);

    ScalarGraph bias = [](Tape& tape, std::span<const NodeId> p) { return weighted_sum(tape, add_channel_bias(tape, p[0], p[1]), 8); };
    EXPECT_LT(grad_check(bias, {random_tensor({2, 3, 5}, 14), random_tensor({3}, 15)}, h).worst(), tol);

    const ComplexTensor weights = random_complex({2, 8, 3}, 16);
    std::function<NodeId(Tape&, NodeId)> spectral = [&weights](Tape& tape, NodeId x) {
        NodeId spec = rfftn(tape, x, {1, 2});
        NodeId mixed = complex_weight(tape, spec, weights);
        return weighted_sum(tape, irfftn(tape, mixed, {1, 2}, {8, 4}), 9);
    };
    EXPECT_LT(grad_check(spectral, random_tensor({2, 8, 4}, 17), h).worst(), tol);
}

TEST(GradCheck, QuadraticAndConstant)
{
    std::function<NodeId(Tape&, NodeId)> quad = [](Tape& tape, NodeId x) { return sum(tape, mul(tape, x, x)); };
    EXPECT_LT(grad_check(quad, random_tensor({6}, 1), 1e-5).worst(), 1e-8);

    std::function<NodeId(Tape&, NodeId)> constant = [](Tape& tape, NodeId) { return tape.constant(Tensor::scalar(4.0)); };
    GradCheckReport r = grad_check(constant, random_tensor({3}, 2), 1e-5);
    EXPECT_EQ(r.worst(), 0.0);
    EXPECT_TRUE(r.passed(1e-12));
    EXPECT_EQ(r.step, 1e-5);
}

TEST(GradCheck, NonFiniteObjectiveThrows)
{
    std::function<NodeId(Tape&, NodeId)> bad = [](Tape& tape, NodeId) {
        CheckedModeGuard off(false);
        return tape.constant(Tensor::scalar(std::nan("")));
    };
    EXPECT_THROW(grad_check(bad, Tensor::scalar(1.0), 1e-5), std::domain_error);
}
