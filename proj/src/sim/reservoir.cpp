#include "tfno/sim/reservoir.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "tfno/errors.hpp"

namespace tfno::sim {

namespace {

bool power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

std::string cell_name(const GridGeometry& g, std::size_t c)
{
    return "(" + std::to_string(c / g.ny) + ", " + std::to_string(c % g.ny) + ")";
}

} // namespace

void GridGeometry::validate() const
{
    if (!power_of_two(nx) || !power_of_two(ny)) {
        throw ConfigError("grid: nx and ny must be powers of two, got " + std::to_string(nx) + "x" +
                          std::to_string(ny));
    }
    if (!(dx > 0.0) || !(dy > 0.0) || !(h > 0.0)) throw ConfigError("grid: cell sizes must be positive");
}

void RockProps::validate(const GridGeometry& grid) const
{
    const std::size_t n = grid.cells();
    if (kx.size() != n || ky.size() != n || phi.size() != n) throw ConfigError("rock: field sizes do not match grid");
    for (std::size_t c = 0; c < n; ++c) {
        if (!(kx[c] > 0.0) || !(ky[c] > 0.0) || !std::isfinite(kx[c]) || !std::isfinite(ky[c]))
            throw ConfigError("rock: permeability must be positive at cell " + cell_name(grid, c));
        if (!(phi[c] > 0.0 && phi[c] < 1.0)) throw ConfigError("rock: porosity outside (0, 1) at cell " + cell_name(grid, c));
    }
}

void FluidModel::validate() const
{
    if (!(T_res > 0.0) || !(T_sc > 0.0) || !(p_sc > 0.0)) throw ConfigError("fluid: temperatures and p_sc must be > 0");
    if (!(mu > 0.0)) throw ConfigError("fluid: viscosity must be > 0");
    if (!(p_min > 0.0) || !(p_max > p_min)) throw ConfigError("fluid: need 0 < p_min < p_max");
    // c_z >= 0 keeps Z in (0, 1] and p/Z = p (1 + c_z p) strictly increasing.
    if (!(c_z >= 0.0)) throw ConfigError("fluid: c_z must be >= 0");
}

void Reservoir::validate() const
{
    grid.validate();
    rock.validate(grid);
    fluid.validate();
}

double Reservoir::gas_in_place(const std::vector<double>& p) const
{
    double g = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) g += grid.cell_volume() * rock.phi[c] * fluid.gas_content(p[c]);
    return g;
}

std::vector<double> smoothed_delta(double cx, double cy, double eps, const GridGeometry& grid)
{
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("well: eps must be > 0");
    if (!(cx >= 0.0 && cx <= static_cast<double>(grid.nx) && cy >= 0.0 && cy <= static_cast<double>(grid.ny))) {
        std::ostringstream os;
        os << "well: centre (" << cx << ", " << cy << ") outside the " << grid.nx << "x" << grid.ny << " domain";
        throw ConfigError(os.str());
    }
    const double radius = well_support_radius * eps;
    std::vector<double> eta(grid.cells(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < grid.nx; ++i) {
        for (std::size_t j = 0; j < grid.ny; ++j) {
            const double rx = static_cast<double>(i) + 0.5 - cx;
            const double ry = static_cast<double>(j) + 0.5 - cy;
            const double r2 = rx * rx + ry * ry;
            if (r2 > radius * radius) continue;
            const double w = std::exp(-r2 / (2.0 * eps * eps));
            eta[i * grid.ny + j] = w;
            total += w;
        }
    }
    if (total == 0.0) throw ConfigError("well: support contains no cell centre, increase eps");
    const double norm = 1.0 / (total * grid.cell_area());
    for (auto& v : eta) v *= norm;
    return eta;
}

void validate_wells(const std::vector<Well>& wells, const GridGeometry& grid)
{
    for (std::size_t m = 0; m < wells.size(); ++m) {
        smoothed_delta(wells[m].cx, wells[m].cy, wells[m].eps, grid);
        for (std::size_t n = 0; n < m; ++n) {
            const double d = std::hypot(wells[m].cx - wells[n].cx, wells[m].cy - wells[n].cy);
            if (d <= well_support_radius * (wells[m].eps + wells[n].eps)) {
                throw ConfigError("wells " + std::to_string(n) + " and " + std::to_string(m) + " have overlapping supports");
            }
        }
    }
}

Tensor well_source_field(const std::vector<Well>& wells, const GridGeometry& grid, std::size_t periods)
{
    grid.validate();
    validate_wells(wells, grid);
    Tensor field({grid.nx, grid.ny, periods});
    for (const auto& w : wells) {
        if (w.rates.size() != periods) {
            throw ConfigError("well: " + std::to_string(w.rates.size()) + " rates for " + std::to_string(periods) +
                              " periods");
        }
        const auto eta = smoothed_delta(w.cx, w.cy, w.eps, grid);
        for (std::size_t c = 0; c < grid.cells(); ++c) {
            if (eta[c] == 0.0) continue;
            const double share = eta[c] * grid.cell_area();
            for (std::size_t t = 0; t < periods; ++t) field[c * periods + t] += w.rates[t] * share;
        }
    }
    return field;
}

std::vector<double> step_implicit(const Reservoir& res, const std::vector<double>& p_n,
                                  const std::vector<double>& sources, double dt, const SolverOptions& opts,
                                  StepReport* report)
{
    const GridGeometry& g = res.grid;
    const FluidModel& fl = res.fluid;
    const std::size_t n = g.cells();
    if (p_n.size() != n || sources.size() != n) throw ConfigError("step_implicit: field sizes do not match grid");
    if (!(dt > 0.0)) throw ConfigError("step_implicit: dt must be > 0");
    for (std::size_t c = 0; c < n; ++c) {
        if (!(p_n[c] > fl.p_min && p_n[c] < fl.p_max)) {
            throw SolverError("step_implicit: initial pressure " + std::to_string(p_n[c]) + " Pa out of bounds at cell " +
                              cell_name(g, c));
        }
    }

    const double vb = g.cell_volume();
    std::vector<double> acc_n(n), q(n);
    for (std::size_t c = 0; c < n; ++c) {
        acc_n[c] = vb * res.rock.phi[c] * fl.gas_content(p_n[c]);
        q[c] = sources[c] / seconds_per_day;
    }
    // Geometric part A k_h / dx of each face; the 1 / (mu B_g) factor is refreshed per Picard iterate.
    std::vector<double> gx(n, 0.0), gy(n, 0.0); // face to the +x / +y neighbour
    for (std::size_t i = 0; i < g.nx; ++i) {
        for (std::size_t j = 0; j < g.ny; ++j) {
            const std::size_t c = i * g.ny + j;
            if (i + 1 < g.nx)
                gx[c] = g.area_x() * harmonic(res.rock.kx[c], res.rock.kx[c + g.ny]) * millidarcy / g.dx;
            if (j + 1 < g.ny) gy[c] = g.area_y() * harmonic(res.rock.ky[c], res.rock.ky[c + 1]) * millidarcy / g.dy;
        }
    }

    std::vector<double> p = p_n;
    std::vector<double> tx(n), ty(n);
    Eigen::VectorXd rhs(n);
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * n);
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opts.tol_linear);
    cg.setMaxIterations(opts.max_linear);

    StepReport local;
    StepReport& rep = report ? *report : local;
    rep = {};
    for (int it = 0; it < opts.max_picard; ++it) {
        for (std::size_t c = 0; c < n; ++c) {
            tx[c] = gx[c] == 0.0 ? 0.0 : gx[c] / (fl.mu * fl.bg(0.5 * (p[c] + p[c + g.ny])));
            ty[c] = gy[c] == 0.0 ? 0.0 : gy[c] / (fl.mu * fl.bg(0.5 * (p[c] + p[c + 1])));
        }
        trip.clear();
        for (std::size_t c = 0; c < n; ++c) {
            const double acc = vb * res.rock.phi[c] * fl.gas_content(p[c]);
            const double dacc = vb * res.rock.phi[c] * fl.gas_content_derivative(p[c]) / dt;
            double diag = dacc;
            // residual of the discrete balance at the current iterate
            double r = (acc - acc_n[c]) / dt - q[c];
            const std::size_t i = c / g.ny, j = c % g.ny;
            auto link = [&](std::size_t nb, double t) {
                diag += t;
                r -= t * (p[nb] - p[c]);
                trip.emplace_back(static_cast<int>(c), static_cast<int>(nb), -t);
            };
            if (i + 1 < g.nx) link(c + g.ny, tx[c]);
            if (i > 0) link(c - g.ny, tx[c - g.ny]);
            if (j + 1 < g.ny) link(c + 1, ty[c]);
            if (j > 0) link(c - 1, ty[c - 1]);
            trip.emplace_back(static_cast<int>(c), static_cast<int>(c), diag);
            rhs[static_cast<Eigen::Index>(c)] = -r;
        }
        a.setFromTriplets(trip.begin(), trip.end());
        cg.compute(a);
        const Eigen::VectorXd dp = cg.solve(rhs);
        if (cg.info() != Eigen::Success) {
            throw SolverError("step_implicit: linear solver did not reach tolerance (residual " +
                              std::to_string(cg.error()) + ")");
        }
        rep.linear_iterations += static_cast<int>(cg.iterations());
        double max_update = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            p[c] += dp[static_cast<Eigen::Index>(c)];
            max_update = std::max(max_update, std::abs(dp[static_cast<Eigen::Index>(c)]));
        }
        rep.update_history.push_back(max_update);
        rep.picard_iterations = it + 1;
        if (!std::isfinite(max_update)) break;
        if (max_update < opts.tol_picard) {
            for (std::size_t c = 0; c < n; ++c) {
                if (!(p[c] > fl.p_min && p[c] < fl.p_max)) {
                    throw SolverError("step_implicit: pressure " + std::to_string(p[c]) + " Pa leaves [p_min, p_max] at cell " +
                                      cell_name(g, c));
                }
            }
            return p;
        }
    }
    std::ostringstream os;
    os << "step_implicit: Picard iteration did not converge in " << rep.picard_iterations << " iterations; max |dp| history:";
    for (double v : rep.update_history) os << ' ' << v;
    throw SolverError(os.str());
}

} // namespace tfno::sim
