#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <numbers>

#include "test_util.hpp"
#include "tfno/errors.hpp"
#include "tfno/losses/losses.hpp"
#include "tfno/ndtensor/grad_check.hpp"

using namespace tfno;
using namespace tfno::loss;
using tfno::testing::random_tensor;

namespace {

// Direct rank-5 re-implementation written from the formula, one sample at a time.
double direct_sobolev(const Tensor& yh, const Tensor& y, int k, double p, double eps)
{
    const auto& s = y.shape();
    const std::array<std::size_t, 5> n{s[0], s[1], s[2], s[3], s[4]};
    auto at = [&](const Tensor& f, std::size_t b, std::size_t c, std::size_t i, std::size_t j, std::size_t t) {
        return f[(((b * n[1] + c) * n[2] + i) * n[3] + j) * n[4] + t];
    };
    auto deriv = [&](const Tensor& f, std::array<std::size_t, 5> ix, std::size_t axis) {
        auto val = [&](std::size_t pos) {
            auto q = ix;
            q[axis] = pos;
            return at(f, q[0], q[1], q[2], q[3], q[4]);
        };
        const std::size_t m = n[axis], i = ix[axis];
        if (i == 0) return val(1) - val(0);
        if (i == m - 1) return val(m - 1) - val(m - 2);
        return (val(i + 1) - val(i - 1)) / 2.0;
    };
    double total = 0.0;
    for (std::size_t b = 0; b < n[0]; ++b) {
        double num0 = 0, den0 = 0, num1 = 0, den1 = 0;
        for (std::size_t c = 0; c < n[1]; ++c)
            for (std::size_t i = 0; i < n[2]; ++i)
                for (std::size_t j = 0; j < n[3]; ++j)
                    for (std::size_t t = 0; t < n[4]; ++t) {
                        num0 += std::pow(std::abs(at(yh, b, c, i, j, t) - at(y, b, c, i, j, t)), p);
                        den0 += std::pow(std::abs(at(y, b, c, i, j, t)), p);
                        for (std::size_t axis = 2; axis < 5; ++axis) {
                            if (n[axis] < 3) continue;
                            const std::array<std::size_t, 5> ix{b, c, i, j, t};
                            num1 += std::pow(std::abs(deriv(yh, ix, axis) - deriv(y, ix, axis)), p);
                            den1 += std::pow(std::abs(deriv(y, ix, axis)), p);
                        }
                    }
        double inner = num0 / (den0 + eps);
        if (k == 1) inner += num1 / (den1 + eps);
        total += std::pow(inner, 1.0 / p);
    }
    return total / static_cast<double>(n[0]);
}

op::OperatorConfig small_config()
{
    op::OperatorConfig c;
    c.layers = 2;
    c.modes = op::ModeSet{{3, 3, 2}};
    c.width = 3;
    c.in_channels = 2;
    c.out_channels = 1;
    c.power = 2;
    c.factorization = op::Factorization::tt;
    c.tt_ranks = {2, 2, 2, 2};
    c.lift_width = 4;
    c.projection_width = 4;
    return c;
}

} // namespace

TEST(FdDerivative, LinearRampAndConstant)
{
    Tensor ramp({1, 1, 5, 1, 1});
    for (std::size_t i = 0; i < 5; ++i) ramp[i] = static_cast<double>(i);
    const Tensor d = fd_derivative(ramp, 2);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(d[i], 1.0);

    const Tensor c = Tensor::full({2, 1, 4, 3, 5}, 3.25);
    for (std::size_t axis : {2u, 3u, 4u}) EXPECT_EQ(max_abs(fd_derivative(c, axis)), 0.0);
}

TEST(FdDerivative, RejectsShortAxis)
{
    EXPECT_THROW(fd_derivative(Tensor({1, 1, 2, 4, 4}), 2), std::invalid_argument);
    EXPECT_THROW(fd_derivative(Tensor({1, 1, 4}), 3), std::invalid_argument);
}

TEST(FdDerivative, SineInteriorErrorIsSecondOrder)
{
    // Grid spacing 1, f(i) = sin(2 pi i / n), f'(i) = (2 pi / n) cos(2 pi i / n).
    auto interior_error = [](std::size_t n) {
        Tensor f({1, 1, 1, 1, n});
        for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(2.0 * std::numbers::pi * i / n);
        const Tensor d = fd_derivative(f, 4);
        double err = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double exact = 2.0 * std::numbers::pi / n * std::cos(2.0 * std::numbers::pi * i / n);
            err = std::max(err, std::abs(d[i] - exact));
        }
        return err;
    };
    // Central difference error is (h^2/6) |f'''| = (2 pi / n)^3 / 6 at most.
    for (std::size_t n : {16u, 32u, 64u, 128u}) {
        const double bound = std::pow(2.0 * std::numbers::pi / n, 3) / 6.0;
        EXPECT_LE(interior_error(n), bound * 1.0001);
    }
    const double order = std::log2(interior_error(64) / interior_error(128));
    EXPECT_NEAR(order, 3.0, 0.05); // O(1/n^2) in the derivative of a unit-period field is n^-3 per unit spacing
}

TEST(FdDerivative, AdjointMatchesTranspose)
{
    const Tensor x = random_tensor({2, 2, 5, 3, 4}, 1);
    const Tensor g = random_tensor({2, 2, 5, 3, 4}, 2);
    for (std::size_t axis : {2u, 3u, 4u}) {
        EXPECT_NEAR(dot(fd_derivative(x, axis), g), dot(x, fd_derivative_adjoint(g, axis)), 1e-12);
    }
}

TEST(Sobolev, ExactMatchIsZero)
{
    const Tensor y = random_tensor({2, 1, 8, 8, 4}, 3);
    EXPECT_EQ(sobolev_h1_relative(y, y, {}), 0.0);
}

TEST(Sobolev, RelativeL2Example)
{
    Tensor y({1, 2}, {3.0, 4.0});
    Tensor yh({1, 2});
    SobolevConfig cfg;
    cfg.order = 0;
    const double v = sobolev_h1_relative(yh, y, cfg);
    EXPECT_NEAR(v, std::sqrt(25.0 / (25.0 + 1e-12)), 1e-15);
    EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Sobolev, MatchesDirectImplementation)
{
    const Tensor y = random_tensor({1, 1, 8, 8, 4}, 4);
    const Tensor yh = random_tensor({1, 1, 8, 8, 4}, 5);
    for (int k : {0, 1}) {
        for (double p : {1.0, 2.0, 3.0}) {
            SobolevConfig cfg;
            cfg.order = k;
            cfg.p = p;
            EXPECT_NEAR(sobolev_h1_relative(yh, y, cfg), direct_sobolev(yh, y, k, p, cfg.eps_den), 1e-12)
                << "k=" << k << " p=" << p;
        }
    }
    // Batched, multi-channel, short t axis skipped in the derivative term.
    const Tensor yb = random_tensor({3, 2, 5, 4, 2}, 6);
    const Tensor yhb = random_tensor({3, 2, 5, 4, 2}, 7);
    EXPECT_NEAR(sobolev_h1_relative(yhb, yb, {}), direct_sobolev(yhb, yb, 1, 2.0, 1e-12), 1e-12);
}

TEST(Sobolev, NonNegativeAndZeroOnlyAtEquality)
{
    const Tensor y = random_tensor({2, 1, 6, 6, 4}, 8);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Tensor d = random_tensor(y.shape(), 100 + s, 1e-6);
        const double v = sobolev_h1_relative(add(y, d), y, {});
        EXPECT_GT(v, 0.0);
    }
}

TEST(Sobolev, ShapeMismatchThrows)
{
    EXPECT_THROW(sobolev_h1_relative(Tensor({1, 1, 4, 4, 4}), Tensor({1, 1, 4, 4, 3}), {}), std::exception);
    SobolevConfig bad;
    bad.order = 2;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = {};
    bad.p = 0.5;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Sobolev, TapedGradientMatchesFiniteDifferences)
{
    const Tensor y = random_tensor({2, 1, 5, 4, 4}, 9);
    for (double p : {2.0, 3.0}) {
        SobolevConfig cfg;
        cfg.p = p;
        auto f = [&](ad::Tape& tape, ad::NodeId x) { return sobolev_h1_relative(tape, x, y, cfg); };
        const auto report = ad::grad_check(f, random_tensor(y.shape(), 10), 1e-5);
        EXPECT_LT(report.worst(), 1e-5) << "p=" << p;
    }
}

TEST(TotalLoss, GammaZeroIsApproximationOnly)
{
    const auto model = op::NeuralOperator::init(small_config(), 11);
    const Tensor a = random_tensor({1, 2, 4, 4, 4}, 12);
    const Tensor u = random_tensor({1, 1, 4, 4, 4}, 13);
    const Tensor u0 = random_tensor({1, 1, 4, 4, 1}, 14);
    LossWeights w;
    w.gamma = 0.0;
    EXPECT_EQ(total_loss(model, a, u, u0, w, {}), sobolev_h1_relative(model.predict(a), u, {}));
}

TEST(TotalLoss, PerfectModelGivesZero)
{
    const auto model = op::NeuralOperator::init(small_config(), 15);
    const Tensor a = random_tensor({2, 2, 4, 4, 4}, 16);
    EXPECT_EQ(total_loss(model, a, model.predict(a), model.predict_initial(a), {}, {}), 0.0);
}

TEST(TotalLoss, EqualsSeparatelyComputedTerms)
{
    const auto model = op::NeuralOperator::init(small_config(), 17);
    const Tensor a = random_tensor({2, 2, 4, 4, 4}, 18);
    const Tensor u = random_tensor({2, 1, 4, 4, 4}, 19);
    const Tensor u0 = random_tensor({2, 1, 4, 4, 1}, 20);
    LossWeights w;
    w.lambda = 1.0;
    w.gamma = 1.0;
    const double expected =
        sobolev_h1_relative(model.predict(a), u, {}) + sobolev_h1_relative(model.predict_initial(a), u0, {});
    EXPECT_NEAR(total_loss(model, a, u, u0, w, {}), expected, 1e-14);
}

TEST(TotalLoss, GradientCheckOnFullObjective)
{
    const auto cfg = small_config();
    const auto model = op::NeuralOperator::init(cfg, 21);
    const Tensor a = random_tensor({1, 2, 4, 4, 4}, 22);
    const Tensor u = random_tensor({1, 1, 4, 4, 4}, 23);
    const Tensor u0 = random_tensor({1, 1, 4, 4, 1}, 24);
    std::vector<Tensor> theta;
    for (const auto& b : model.params()) theta.push_back(b.value);
    auto f = [&](ad::Tape& tape, std::span<const ad::NodeId> ids) {
        op::BoundParams p(ids.begin(), ids.end());
        return total_loss(tape, model, p, a, u, u0, {}, {});
    };
    ad::GradCheckOptions opts;
    opts.max_coords_per_block = 12;
    const auto report = ad::grad_check(f, theta, 1e-6, opts);
    EXPECT_LT(report.worst(), 1e-4);
}

TEST(RSquared, Examples)
{
    const std::vector<double> y{1, 2, 3};
    EXPECT_DOUBLE_EQ(r_squared(y, y), 1.0);
    EXPECT_DOUBLE_EQ(r_squared(std::vector<double>{2, 2, 2}, y), 0.0);
    EXPECT_DOUBLE_EQ(r_squared(std::vector<double>{1, 2, 4}, y), 0.5);
}

TEST(RSquared, Errors)
{
    EXPECT_THROW(r_squared(std::vector<double>{1, 2}, std::vector<double>{5, 5}), std::invalid_argument);
    EXPECT_THROW(r_squared(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
    EXPECT_THROW(r_squared(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(RSquared, InvariantUnderCommonAffineMap)
{
    const Tensor y = random_tensor({200}, 25);
    const Tensor yh = add(y, random_tensor({200}, 26, 0.3));
    const double base = r_squared(yh.data(), y.data());
    for (auto [shift, scale] : {std::pair{3.0, 2.0}, std::pair{-1e3, 0.01}, std::pair{0.5, -7.0}}) {
        std::vector<double> ys, yhs;
        for (std::size_t i = 0; i < 200; ++i) {
            ys.push_back(shift + scale * y[i]);
            yhs.push_back(shift + scale * yh[i]);
        }
        EXPECT_NEAR(r_squared(yhs, ys), base, 1e-12);
    }
}

TEST(Landscape, CentreIsTestLossAndProbeIsPure)
{
    const auto model = op::NeuralOperator::init(small_config(), 27);
    const Tensor a = random_tensor({2, 2, 4, 4, 4}, 28);
    const Tensor u = random_tensor({2, 1, 4, 4, 4}, 29);
    auto test_loss = [&](const op::NeuralOperator& m) { return sobolev_h1_relative(m.predict(a), u, {}); };

    std::vector<std::vector<double>> before;
    for (const auto& b : model.params()) before.emplace_back(b.value.data().begin(), b.value.data().end());

    const auto grid = loss_landscape(model, test_loss, 5, 1.0, 30);
    EXPECT_EQ(grid.alphas[2], 0.0);
    EXPECT_EQ(grid.betas[2], 0.0);
    EXPECT_EQ(grid.at(2, 2), test_loss(model));
    for (double v : grid.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_DOUBLE_EQ(grid.alphas.front(), -1.0);
    EXPECT_DOUBLE_EQ(grid.alphas.back(), 1.0);

    for (std::size_t k = 0; k < before.size(); ++k) {
        const auto& now = model.params()[k].value.data();
        ASSERT_EQ(now.size(), before[k].size());
        EXPECT_EQ(std::memcmp(now.data(), before[k].data(), now.size() * sizeof(double)), 0);
    }
}

TEST(Landscape, DirectionsAreFilterNormalizedAndDistinct)
{
    auto model = op::NeuralOperator::init(small_config(), 31);
    for (auto& b : model.params()) b.value = random_tensor(b.value.shape(), 32); // non-zero biases
    auto test_loss = [](const op::NeuralOperator&) { return 0.0; };
    const auto grid = loss_landscape(model, test_loss, 1, 0.0, 33);
    ASSERT_EQ(grid.d1.size(), model.params().size());
    bool distinct = false;
    for (std::size_t k = 0; k < grid.d1.size(); ++k) {
        const double tn = l2_norm(model.params()[k].value);
        EXPECT_NEAR(l2_norm(grid.d1[k]), tn, 1e-12 * tn);
        EXPECT_NEAR(l2_norm(grid.d2[k]), tn, 1e-12 * tn);
        distinct = distinct || max_abs_diff(grid.d1[k], grid.d2[k]) > 0.0;
    }
    EXPECT_TRUE(distinct);
}

TEST(Landscape, SameSeedSameGrid)
{
    const auto model = op::NeuralOperator::init(small_config(), 34);
    const Tensor a = random_tensor({1, 2, 4, 4, 4}, 35);
    const Tensor u = random_tensor({1, 1, 4, 4, 4}, 36);
    auto test_loss = [&](const op::NeuralOperator& m) { return sobolev_h1_relative(m.predict(a), u, {}); };
    const auto g1 = loss_landscape(model, test_loss, 3, 0.5, 37);
    const auto g2 = loss_landscape(model, test_loss, 3, 0.5, 37);
    const auto g3 = loss_landscape(model, test_loss, 3, 0.5, 38);
    EXPECT_EQ(g1.values, g2.values);
    EXPECT_NE(g1.values, g3.values);
}
