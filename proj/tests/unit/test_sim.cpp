#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tfno/errors.hpp"
#include "tfno/sim/dataset.hpp"
#include "tfno/sim/reservoir.hpp"

using namespace tfno;
using namespace tfno::sim;

namespace {

Reservoir uniform_reservoir(std::size_t nx, std::size_t ny, double dx, double k, double phi)
{
    Reservoir r;
    r.grid.nx = nx;
    r.grid.ny = ny;
    r.grid.dx = dx;
    r.grid.dy = dx;
    r.rock.kx.assign(nx * ny, k);
    r.rock.ky.assign(nx * ny, k);
    r.rock.phi.assign(nx * ny, phi);
    return r;
}

// Smooth analytic rock and initial state on a fixed 3.2 km square, sampled at any resolution.
Scenario smooth_scenario(std::size_t n, std::size_t steps)
{
    const double L = 3200.0;
    Scenario s;
    s.res = uniform_reservoir(n, n, L / static_cast<double>(n), 1.0, 0.2);
    s.p0.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double x = (i + 0.5) / n, y = (j + 0.5) / n;
            const std::size_t c = i * n + j;
            s.res.rock.kx[c] = s.res.rock.ky[c] =
                100.0 * std::exp(0.5 * std::sin(2 * std::numbers::pi * x) * std::cos(2 * std::numbers::pi * y));
            s.res.rock.phi[c] = 0.2 + 0.03 * std::cos(std::numbers::pi * x) * std::sin(std::numbers::pi * y);
            s.p0[c] = 15.0e6 + 0.3e6 * std::cos(std::numbers::pi * x);
        }
    Well w;
    w.cx = 0.3 * n;
    w.cy = 0.6 * n;
    w.eps = 150.0 / s.res.grid.dx;
    w.rates.assign(steps, -3.0e5);
    s.wells = {w};
    s.steps = steps;
    return s;
}

SamplerConfig small_sampler(std::size_t n = 16)
{
    SamplerConfig c;
    c.grid.nx = c.grid.ny = n;
    c.grid.dx = c.grid.dy = 3200.0 / static_cast<double>(n);
    c.steps = 4;
    c.wells_min = 2;
    c.wells_max = 4;
    c.corr_len = 2.0;
    return c;
}

std::string read_bytes(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("tfno_test_" + name)).string();
}

} // namespace

TEST(WellSource, SmoothedDeltaIntegratesToOne)
{
    GridGeometry g;
    for (double eps : {0.4, 1.0, 2.5}) {
        for (auto [cx, cy] : {std::pair{16.0, 16.0}, std::pair{0.3, 31.9}, std::pair{7.25, 3.5}}) {
            const auto eta = smoothed_delta(cx, cy, eps, g);
            double s = 0.0;
            for (double v : eta) s += v;
            EXPECT_NEAR(s * g.cell_area(), 1.0, 1e-12);
        }
    }
    EXPECT_THROW(smoothed_delta(-0.5, 3.0, 1.0, g), ConfigError);
    EXPECT_THROW(smoothed_delta(3.0, 33.0, 1.0, g), ConfigError);
}

TEST(WellSource, SingleWellSumsToRateAndWellsAreLinear)
{
    GridGeometry g;
    Well a{10.2, 11.7, {-100.0e3, -50.0e3, 0.0}, 1.0};
    Well b{25.0, 20.0, {30.0e3, -70.0e3, 5.0e3}, 1.5};
    const Tensor fa = well_source_field({a}, g, 3);
    for (std::size_t t = 0; t < 3; ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < g.cells(); ++c) s += fa[c * 3 + t];
        EXPECT_NEAR(s, a.rates[t], 1e-9 * 100.0e3);
    }
    const Tensor fb = well_source_field({b}, g, 3);
    const Tensor fab = well_source_field({a, b}, g, 3);
    EXPECT_LE(max_abs_diff(fab, add(fa, fb)), 1e-12 * 100.0e3);
}

TEST(WellSource, RejectsOverlapAndWrongScheduleLength)
{
    GridGeometry g;
    Well a{10.0, 10.0, {1.0}, 1.0};
    Well b{12.0, 10.0, {1.0}, 1.0};
    EXPECT_THROW(well_source_field({a, b}, g, 1), ConfigError);
    EXPECT_THROW(well_source_field({a}, g, 2), ConfigError);
}

TEST(StepImplicit, UniformStateWithoutWellsIsSteady)
{
    const Reservoir r = uniform_reservoir(8, 8, 100.0, 50.0, 0.2);
    const std::vector<double> p(64, 12.0e6);
    const auto next = step_implicit(r, p, std::vector<double>(64, 0.0), 864000.0);
    for (double v : next) EXPECT_NEAR(v, 12.0e6, 1.0);
}

TEST(StepImplicit, ConservesMassWithoutWells)
{
    Scenario s = smooth_scenario(16, 1);
    std::vector<double> p = s.p0;
    const std::vector<double> zero(p.size(), 0.0);
    for (int n = 0; n < 5; ++n) {
        const double before = s.res.gas_in_place(p);
        p = step_implicit(s.res, p, zero, 864000.0);
        const double after = s.res.gas_in_place(p);
        EXPECT_LT(std::abs(after - before) / before, 1e-8) << "step " << n;
    }
}

TEST(StepImplicit, MassBalanceClosesWithWells)
{
    Scenario s = smooth_scenario(16, 4);
    s.wells.push_back(Well{12.0, 4.0, {2.0e5, 4.0e5, -1.0e5, 1.0e5}, 1.0});
    const Tensor q = well_source_field(s.wells, s.res.grid, 4);
    std::vector<double> p = s.p0;
    for (std::size_t n = 0; n < 4; ++n) {
        std::vector<double> src(p.size());
        double total = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) total += src[c] = q[c * 4 + n];
        const double before = s.res.gas_in_place(p);
        p = step_implicit(s.res, p, src, s.dt);
        const double change = s.res.gas_in_place(p) - before;
        const double expected = total * s.dt / seconds_per_day;
        EXPECT_NEAR(change, expected, 1e-6 * std::abs(expected)) << "step " << n;
    }
}

TEST(StepImplicit, CosineModeDecaysAtTheLinearDiffusionRate)
{
    // Z = 1 and constant mu: phi p_t = (k / mu) div(p grad p); a small cosine
    // perturbation of a uniform state decays like exp(-D (pi / L)^2 t), D = k p / (mu phi).
    const double L = 1000.0, k = 100.0, phi = 0.2, pbar = 10.0e6, amp = 1.0e4;
    FluidModel fl;
    fl.c_z = 0.0;
    const double D = k * millidarcy * pbar / (fl.mu * phi);
    const double lambda = D * std::numbers::pi * std::numbers::pi / (L * L);
    const double horizon = 1.0 / lambda;

    auto measured = [&](std::size_t n, std::size_t steps) {
        Reservoir r = uniform_reservoir(n, 1, L / static_cast<double>(n), k, phi);
        r.grid.dy = 100.0;
        r.fluid = fl;
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = pbar + amp * std::cos(std::numbers::pi * (i + 0.5) / n);
        const std::vector<double> zero(n, 0.0);
        SolverOptions opts;
        opts.tol_picard = 1e-3;
        for (std::size_t s = 0; s < steps; ++s) p = step_implicit(r, p, zero, horizon / static_cast<double>(steps), opts);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = std::cos(std::numbers::pi * (i + 0.5) / n);
            num += (p[i] - pbar) * c;
            den += c * c;
        }
        return num / den / amp;
    };
    // dt ~ dx^2 so space and time errors shrink together by 4x per level.
    const double coarse = measured(32, 16);
    const double fine = measured(64, 64);
    const double extrapolated = (4.0 * fine - coarse) / 3.0;
    const double exact = std::exp(-1.0);
    EXPECT_LT(std::abs(extrapolated - exact) / exact, 0.02);
    EXPECT_LT(std::abs(fine - exact), std::abs(coarse - exact));
}

TEST(StepImplicit, RefinementConvergesMonotonically)
{
    const std::size_t ref_n = 128, steps = 3;
    const Trajectory ref = simulate(smooth_scenario(ref_n, steps));
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {8u, 16u, 32u}) {
        const Trajectory tr = simulate(smooth_scenario(n, steps));
        const std::size_t f = ref_n / n;
        double err = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double avg = 0.0;
                for (std::size_t a = 0; a < f; ++a)
                    for (std::size_t b = 0; b < f; ++b) avg += ref.p[steps][(i * f + a) * ref_n + j * f + b];
                avg /= static_cast<double>(f * f);
                const double d = tr.p[steps][i * n + j] - avg;
                err += d * d;
                norm += (avg - 15.0e6) * (avg - 15.0e6);
            }
        const double rel = std::sqrt(err / norm);
        EXPECT_LT(rel, prev) << "n=" << n;
        prev = rel;
    }
}

TEST(StepImplicit, ErrorsCarryDiagnostics)
{
    const Reservoir r = uniform_reservoir(4, 4, 100.0, 50.0, 0.2);
    std::vector<double> p(16, 12.0e6);
    p[5] = 0.5e6;
    try {
        step_implicit(r, p, std::vector<double>(16, 0.0), 864000.0);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_NE(std::string(e.what()).find("cell (1, 1)"), std::string::npos) << e.what();
    }

    Scenario s = smooth_scenario(16, 1);
    SolverOptions one;
    one.max_picard = 1;
    const Tensor q = well_source_field(s.wells, s.res.grid, 1);
    try {
        step_implicit(s.res, s.p0, std::vector<double>(q.data().begin(), q.data().end()), s.dt, one);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos) << e.what();
    }
}

TEST(Simulate, ZeroRatesGiveConstantTrajectory)
{
    Scenario s = smooth_scenario(8, 3);
    s.wells.clear();
    for (auto& v : s.p0) v = 14.0e6;
    const Trajectory tr = simulate(s);
    ASSERT_EQ(tr.p.size(), 4u);
    for (const auto& snap : tr.p)
        for (double v : snap) EXPECT_NEAR(v, 14.0e6, 1.0);
}

TEST(Simulate, WithdrawalAveragePressureIsNonIncreasing)
{
    const auto cfg = small_sampler();
    for (std::uint64_t i = 0; i < 3; ++i) {
        const Scenario s = sample_scenario(5, i, Family::withdrawal, cfg);
        const Trajectory tr = simulate(s);
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& snap : tr.p) {
            double avg = 0.0;
            for (double v : snap) avg += v;
            avg /= static_cast<double>(snap.size());
            EXPECT_LE(avg, prev + 1e-6);
            prev = avg;
        }
    }
}

TEST(Simulate, HalvingTheStepChangesLittle)
{
    Scenario s = sample_scenario(6, 0, Family::withdrawal, small_sampler());
    const Trajectory coarse = simulate(s);
    Scenario half = s;
    half.steps = 2 * s.steps;
    half.dt = s.dt / 2.0;
    for (auto& w : half.wells) {
        std::vector<double> r;
        for (double v : w.rates) r.insert(r.end(), {v, v});
        w.rates = r;
    }
    const Trajectory fine = simulate(half);
    double worst = 0.0;
    for (std::size_t n = 1; n <= s.steps; ++n)
        for (std::size_t c = 0; c < s.p0.size(); ++c)
            worst = std::max(worst, std::abs(coarse.p[n][c] - fine.p[2 * n][c]) / fine.p[2 * n][c]);
    RecordProperty("max_relative_difference", std::to_string(worst));
    EXPECT_LT(worst, 0.02);
    EXPECT_GT(worst, 0.0);
}

TEST(Sampler, DeterministicAndFamilyConsistent)
{
    const auto cfg = small_sampler();
    const Scenario a = sample_scenario(11, 3, Family::withdrawal, cfg);
    const Scenario b = sample_scenario(11, 3, Family::withdrawal, cfg);
    EXPECT_EQ(a.p0, b.p0);
    EXPECT_EQ(a.res.rock.kx, b.res.rock.kx);
    ASSERT_EQ(a.wells.size(), b.wells.size());
    for (std::size_t m = 0; m < a.wells.size(); ++m) EXPECT_EQ(a.wells[m].rates, b.wells[m].rates);
    EXPECT_NE(sample_scenario(11, 4, Family::withdrawal, cfg).p0, a.p0);

    for (std::uint64_t i = 0; i < 10; ++i) {
        for (Family f : {Family::withdrawal, Family::injection}) {
            const Scenario s = sample_scenario(12, i, f, cfg);
            EXPECT_GE(s.wells.size(), cfg.wells_min);
            EXPECT_LE(s.wells.size(), cfg.wells_max);
            for (const auto& w : s.wells)
                for (double r : w.rates) {
                    if (f == Family::withdrawal) EXPECT_LE(r, 0.0);
                    else EXPECT_GE(r, 0.0);
                }
            for (double k : s.res.rock.kx) EXPECT_GT(k, 0.0);
            EXPECT_NO_THROW(s.res.validate());
            EXPECT_NO_THROW(validate_wells(s.wells, s.res.grid));
        }
    }
    const auto batch = sample_scenarios(3, Family::injection, 12, cfg, 2);
    EXPECT_EQ(batch[1].p0, sample_scenario(12, 3, Family::injection, cfg).p0);
}

TEST(Sampler, ShippedFamiliesStayWithinBounds)
{
    SamplerConfig cfg; // shipped 32 x 32, 16 decades
    for (std::uint64_t i = 0; i < 6; ++i) {
        for (Family f : {Family::withdrawal, Family::injection}) {
            const Trajectory tr = simulate(sample_scenario(2024, i, f, cfg)); // throws on bound violation
            for (const auto& snap : tr.p)
                for (double v : snap) {
                    EXPECT_GT(v, 2.0 * cfg.fluid.p_min);
                    EXPECT_LT(v, 0.9 * cfg.fluid.p_max);
                }
        }
    }
}

class DatasetTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        const auto cfg = small_sampler();
        for (std::uint64_t i = 0; i < 4; ++i) {
            scenarios.push_back(sample_scenario(7, i, i % 2 ? Family::injection : Family::withdrawal, cfg));
            trajectories.push_back(simulate(scenarios.back()));
        }
    }
    std::vector<Scenario> scenarios;
    std::vector<Trajectory> trajectories;
};

TEST_F(DatasetTest, SchemaAndRanges)
{
    const Dataset ds = build_dataset(scenarios, trajectories, 7);
    EXPECT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.in_channels, 6u);
    EXPECT_EQ(ds.out_channels, 1u);
    EXPECT_EQ(std::string(input_channel_names[0]), "p0");
    EXPECT_EQ(std::string(input_channel_names[3]), "well_rate");
    const Tensor a = ds.inputs_of({0, 1, 2, 3});
    EXPECT_EQ(a.shape(), (Shape{4, 6, 16, 16, 4}));
    for (float v : ds.targets) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ds.families[i], scenarios[i].family);

    // Pressure round trip through 32-bit storage.
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t c = 0; c < 256; c += 17)
            for (std::size_t t = 0; t < 4; ++t) {
                const double p = trajectories[s].p[t + 1][c];
                const double back = ds.norm.denormalize_pressure(ds.targets[s * ds.target_stride() + c * 4 + t]);
                EXPECT_NEAR(back / p, 1.0, 1e-6);
            }
    // The p0 channel is the reconstruction target.
    const Tensor u0 = ds.initial_of({2});
    for (std::size_t c = 0; c < 256; c += 31)
        EXPECT_NEAR(ds.norm.denormalize_pressure(u0[c]) / scenarios[2].p0[c], 1.0, 1e-6);
    // Rate channel sums back to the well rates.
    double total = 0.0, expected = 0.0;
    for (std::size_t c = 0; c < 256; ++c) total += a[(2 * 6 + 3) * 256 * 4 + c * 4 + 1] * ds.norm.q_scale;
    for (const auto& w : scenarios[2].wells) expected += w.rates[1];
    EXPECT_NEAR(total, expected, 1e-5 * std::abs(expected));
}

TEST_F(DatasetTest, SaveLoadRoundTripAndDeterminism)
{
    const Dataset ds = build_dataset(scenarios, trajectories, 7);
    const std::string p1 = temp_path("ds1.bin"), p2 = temp_path("ds2.bin");
    save_dataset(p1, ds, R"({"note": "unit"})");
    save_dataset(p2, build_dataset(scenarios, trajectories, 7), R"({"note": "unit"})");
    EXPECT_EQ(read_bytes(p1), read_bytes(p2));
    EXPECT_EQ(read_bytes(manifest_path(p1)), read_bytes(manifest_path(p2)));

    const std::string bytes = read_bytes(p1);
    EXPECT_EQ(bytes.substr(0, 4), "TFNO");
    EXPECT_EQ(static_cast<int>(bytes[4]), 1);
    EXPECT_EQ(bytes.size(), 5 + 6 * 4 + 7 * 8 + 4 * (6 + 1) * 256 * 4 * 4);

    const Dataset back = load_dataset(p1);
    EXPECT_EQ(back.inputs, ds.inputs);
    EXPECT_EQ(back.targets, ds.targets);
    EXPECT_EQ(back.families, ds.families);
    EXPECT_EQ(back.seed, 7u);
    EXPECT_EQ(back.norm.p_lo, ds.norm.p_lo);
    EXPECT_EQ(back.norm.q_scale, ds.norm.q_scale);

    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(p2, std::ios::binary | std::ios::trunc) << bad;
    EXPECT_THROW(load_dataset(p2), IncompatibleArtifact);
    std::ofstream(p2, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 3);
    EXPECT_THROW(load_dataset(p2), IncompatibleArtifact);
    for (const auto& p : {p1, p2}) {
        std::remove(p.c_str());
        std::remove(manifest_path(p).c_str());
    }
}

TEST_F(DatasetTest, RejectsNonFiniteValues)
{
    trajectories[1].p[2][5] = std::nan("");
    EXPECT_THROW(build_dataset(scenarios, trajectories), std::domain_error);
}
