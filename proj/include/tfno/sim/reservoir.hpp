#pragma once

#include <cstddef>
#include <vector>

#include "tfno/ndtensor/tensor.hpp"

namespace tfno::sim {

/// 2-D areal grid, one layer of thickness h. Cell (i, j) has flat index i * ny + j.
struct GridGeometry {
    std::size_t nx = 32, ny = 32;
    double dx = 100.0, dy = 100.0; ///< m
    double h = 10.0;               ///< m

    std::size_t cells() const { return nx * ny; }
    double cell_volume() const { return dx * dy * h; }
    double cell_area() const { return dx * dy; }
    double area_x() const { return dy * h; } ///< face normal to x
    double area_y() const { return dx * h; }
    void validate() const;
};

struct RockProps {
    std::vector<double> kx, ky; ///< mD
    std::vector<double> phi;

    void validate(const GridGeometry& grid) const;
};

inline constexpr double millidarcy = 9.869233e-16; ///< m^2
inline constexpr double seconds_per_day = 86400.0;

/// Z(p) = 1 / (1 + c_z p), constant viscosity.
struct FluidModel {
    double T_res = 320.0;  ///< K
    double T_sc = 293.15;  ///< K
    double p_sc = 101325.0; ///< Pa
    double mu = 1.5e-5;    ///< Pa s
    double p_min = 1.0e6;  ///< Pa
    double p_max = 30.0e6; ///< Pa
    double c_z = 0.25 / 30.0e6; ///< 1/Pa, gives Z in [0.8, 1] up to p_max

    double z(double p) const { return 1.0 / (1.0 + c_z * p); }
    double bg(double p) const { return p_sc * T_res * z(p) / (T_sc * p); }
    /// Standard volume of gas per unit pore volume, T_sc / (p_sc T_res) * p / Z.
    double gas_content(double p) const { return T_sc / (p_sc * T_res) * p * (1.0 + c_z * p); }
    double gas_content_derivative(double p) const { return T_sc / (p_sc * T_res) * (1.0 + 2.0 * c_z * p); }
    void validate() const;
};

struct Reservoir {
    GridGeometry grid;
    RockProps rock;
    FluidModel fluid;

    void validate() const;
    /// Total gas in place, sm^3.
    double gas_in_place(const std::vector<double>& p) const;
};

/// A vertical well with one perforation zone (2-D areal model).
struct Well {
    double cx = 0.0, cy = 0.0;  ///< centre in cell coordinates; cell i spans [i, i + 1)
    std::vector<double> rates;  ///< sm^3/day per period, negative = withdrawal
    double eps = 1.0;           ///< Gaussian width in cells
};

/// Support radius of the truncated Gaussian, in units of eps.
inline constexpr double well_support_radius = 3.0;

/// Smoothed delta eta_eps centred at (cx, cy), per m^2, renormalized so that
/// sum(eta) * cell_area == 1.
std::vector<double> smoothed_delta(double cx, double cy, double eps, const GridGeometry& grid);

/// Throws ConfigError for a centre outside the domain, bad eps or overlapping supports.
void validate_wells(const std::vector<Well>& wells, const GridGeometry& grid);

/// Per-cell source rates in sm^3/day, shape [nx, ny, periods]:
/// sum over wells of q_m(period) * eta_eps * cell_area.
Tensor well_source_field(const std::vector<Well>& wells, const GridGeometry& grid, std::size_t periods);

struct SolverOptions {
    double tol_picard = 1.0;   ///< Pa, max-norm of the Picard update
    int max_picard = 50;
    double tol_linear = 1e-10; ///< relative residual
    int max_linear = 20000;
};

struct StepReport {
    int picard_iterations = 0;
    std::vector<double> update_history; ///< max |dp| per Picard iteration
    int linear_iterations = 0;          ///< summed over Picard iterations
};

/// One backward-Euler step of length dt seconds. `sources` holds per-cell rates
/// in sm^3/day. Throws SolverError on Picard non-convergence or bound violation.
std::vector<double> step_implicit(const Reservoir& res, const std::vector<double>& p_n,
                                  const std::vector<double>& sources, double dt, const SolverOptions& opts = {},
                                  StepReport* report = nullptr);

} // namespace tfno::sim
