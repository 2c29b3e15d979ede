#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tfno/ndtensor/tensor.hpp"
#include "tfno/sim/reservoir.hpp"

namespace tfno::sim {

enum class Family { withdrawal, injection };

const char* family_name(Family f);
Family parse_family(const std::string& s);

struct Scenario {
    Reservoir res;
    std::vector<double> p0; ///< Pa
    std::vector<Well> wells;
    std::size_t steps = 16;
    double dt = 10.0 * seconds_per_day;
    Family family = Family::withdrawal;
};

/// Snapshots p(t_n), n = 0..steps.
struct Trajectory {
    std::vector<std::vector<double>> p;
};

Trajectory simulate(const Scenario& s, const SolverOptions& opts = {});

struct SamplerConfig {
    GridGeometry grid;
    FluidModel fluid;
    std::size_t steps = 16;
    double dt_days = 10.0;
    double k_mean_md = 100.0;    ///< geometric mean
    double log_k_std = 0.7;
    double corr_len = 4.0;       ///< Gaussian smoothing width, cells
    double phi_mean = 0.18;
    double phi_std = 0.04;
    double phi_k_corr = 0.6;
    std::size_t wells_min = 4, wells_max = 12;
    double well_eps = 1.0;       ///< cells
    double rate_min = 2.0e5, rate_max = 6.0e5; ///< sm^3/day per well before decade modulation
    double max_season_fraction = 0.3; ///< cap on |season volume| / initial gas in place
    std::array<double, 2> p0_withdrawal{12.0e6, 20.0e6};
    std::array<double, 2> p0_injection{8.0e6, 13.0e6};
    double p0_perturbation = 0.5e6; ///< Pa, amplitude of the smooth initial-state variation

    void validate() const;
};

/// Scenario `index` of a seeded family: the RNG stream is derive_seed(seed, index),
/// so scenarios can be drawn in any order or in parallel.
Scenario sample_scenario(std::uint64_t seed, std::uint64_t index, Family family, const SamplerConfig& cfg);

/// n scenarios with indices first_index .. first_index + n - 1.
std::vector<Scenario> sample_scenarios(std::size_t n, Family family, std::uint64_t seed, const SamplerConfig& cfg,
                                       std::uint64_t first_index = 0);

inline constexpr std::size_t dataset_in_channels = 6;
inline constexpr std::size_t dataset_out_channels = 1;
inline const std::array<const char*, dataset_in_channels> input_channel_names{"p0", "porosity", "log_permeability",
                                                                              "well_rate", "time_sin", "time_cos"};

/// Min-max constants. Pressure, porosity and log k map to [0, 1];
/// well rates are divided by q_scale = max |q| and stay signed.
struct Normalization {
    double p_lo = 0, p_hi = 1;
    double phi_lo = 0, phi_hi = 1;
    double logk_lo = 0, logk_hi = 1;
    double q_scale = 1;

    double normalize_pressure(double p) const;
    double denormalize_pressure(double v) const;
};

/// Normalized pairs stored in 32-bit floats. Input i is [6, nx, ny, nt] with
/// t-slot j holding step j + 1; target i is p(t_{j+1}) as [1, nx, ny, nt].
struct Dataset {
    std::size_t nx = 0, ny = 0, nt = 0;
    std::size_t in_channels = dataset_in_channels, out_channels = dataset_out_channels;
    Normalization norm;
    std::vector<float> inputs, targets;
    std::vector<Family> families;
    std::uint64_t seed = 0;

    std::size_t size() const { return families.size(); }
    std::size_t input_stride() const { return in_channels * nx * ny * nt; }
    std::size_t target_stride() const { return out_channels * nx * ny * nt; }

    /// Batched 64-bit views: [B, C, nx, ny, nt].
    Tensor inputs_of(const std::vector<std::size_t>& idx) const;
    Tensor targets_of(const std::vector<std::size_t>& idx) const;
    /// Normalized p0 as [B, 1, nx, ny, 1], the reconstruction target.
    Tensor initial_of(const std::vector<std::size_t>& idx) const;
};

/// Builds normalized channel stacks. Throws std::domain_error on non-finite values.
Dataset build_dataset(const std::vector<Scenario>& scenarios, const std::vector<Trajectory>& trajectories,
                      std::uint64_t seed = 0);

/// Scenarios `ids` in order, with the same normalization.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& ids);

/// Re-expresses every normalized channel under `to` (time encodings are untouched).
Dataset renormalize(const Dataset& ds, const Normalization& to);

/// Min-max constants recomputed from the data the file holds.
Normalization local_normalization(const Dataset& ds);

/// Binary file: "TFNO", version byte 1, u32 counts (n, nx, ny, nt, c_in, c_out),
/// f64 normalization constants, f32 payload; little-endian. Families and the
/// seed go to the sidecar manifest `path + ".json"` together with `extra`.
void save_dataset(const std::string& path, const Dataset& ds, const std::string& extra_json = "{}");
Dataset load_dataset(const std::string& path);
std::string manifest_path(const std::string& dataset_path);

} // namespace tfno::sim
