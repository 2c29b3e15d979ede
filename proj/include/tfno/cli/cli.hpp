#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfno/sim/dataset.hpp"
#include "tfno/training/config_io.hpp"
#include "tfno/training/training.hpp"

namespace tfno::cli {

/// Exit codes shared by every command.
enum ExitCode : int { ok = 0, failure = 1, config_error = 2, solver_error = 3, divergence = 4, incompatible = 5 };

struct DataConfig {
    std::size_t scenarios = 200;
    double injection_fraction = 0.3;
    sim::SamplerConfig sampler;
};

/// One JSON file: {"seed", "data": {...}, "train": {...}}. The top-level seed
/// is the only seed; the train section may not carry its own.
struct RunConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    train::TrainConfig train;
    bool has_data = false, has_train = false;
};

RunConfig run_config_from_json(const train::Json& j);
RunConfig load_run_config(const std::string& path);
train::Json to_json(const RunConfig& c);

/// Family of scenario i: injection exactly when round((i + 1) f) > round(i f),
/// which spreads round(n f) injection scenarios evenly over the index range.
sim::Family family_of(std::size_t i, double injection_fraction);

/// The scenario definitions behind a dataset file, rebuilt from its manifest.
std::vector<sim::Scenario> regenerate_scenarios(const std::string& dataset_path, const std::vector<std::size_t>& ids);

void cmd_gen_data(const std::string& config_path, const std::string& out_path);
void cmd_train(const std::string& data_path, const std::string& config_path, const std::string& out_dir);
void cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& out_dir);
void cmd_landscape(const std::string& model_path, const std::string& data_path, std::size_t grid, double range,
                   std::uint64_t seed, const std::string& out_dir);
void cmd_predict(const std::string& model_path, const std::string& scenario_path, const std::string& out_path);

/// Test split and Sobolev settings recorded in a checkpoint's run echo.
struct CheckpointRun {
    train::TrainConfig train;
    std::vector<std::size_t> test_ids;
};
CheckpointRun checkpoint_run(const train::Checkpoint& ck, const sim::Dataset& ds);

/// Writers for the report formats.
std::string format_double(double v);
void write_pgm16(const std::string& path, std::size_t width, std::size_t height, const std::vector<double>& values,
                 double lo, double hi);

/// Allocator settings for tape-heavy workloads (glibc only, no-op elsewhere).
void tune_allocator();

/// Parses argv, runs the command, maps exceptions to exit codes.
int run(int argc, char** argv);

} // namespace tfno::cli
