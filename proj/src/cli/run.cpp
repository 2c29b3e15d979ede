#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "tfno/cli/cli.hpp"
#include "tfno/errors.hpp"

namespace tfno::cli {

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_pgm16(const std::string& path, std::size_t width, std::size_t height, const std::vector<double>& values,
                 double lo, double hi)
{
    if (values.size() != width * height) throw std::invalid_argument("write_pgm16: size mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "P5\n" << width << ' ' << height << "\n65535\n";
    const double span = hi > lo ? hi - lo : 1.0;
    for (double v : values) {
        const double u = std::isfinite(v) ? std::clamp((v - lo) / span, 0.0, 1.0) : 0.0;
        const auto g = static_cast<unsigned>(std::lround(u * 65535.0));
        const char px[2] = {static_cast<char>(g >> 8), static_cast<char>(g & 0xFF)}; // big-endian
        os.write(px, 2);
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

void tune_allocator()
{
#if defined(__GLIBC__)
    // Tape buffers are large and short-lived; keep them on the heap instead of
    // mapping and unmapping pages for every tensor.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

int run(int argc, char** argv)
{
    tune_allocator();
    CLI::App app{"Tensor-train Fourier neural operator surrogate for gas storage pressure"};
    app.require_subcommand(1);

    std::string config, out, data, model, scenario;
    std::size_t grid = 21;
    double range = 1.0;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen-data", "Simulate scenarios and write a dataset");
    gen->add_option("--config", config, "Run config (JSON)")->required();
    gen->add_option("--out", out, "Dataset file; the manifest goes to <out>.json")->required();

    auto* tr = app.add_subcommand("train", "Train an operator on a dataset");
    tr->add_option("--data", data, "Dataset file")->required();
    tr->add_option("--config", config, "Run config (JSON)")->required();
    tr->add_option("--out", out, "Output directory for model.tfnc and history.csv")->required();

    auto* ev = app.add_subcommand("eval", "Score a checkpoint on its test split");
    ev->add_option("--model", model, "Checkpoint")->required();
    ev->add_option("--data", data, "Dataset file")->required();
    ev->add_option("--out", out, "Report directory")->required();

    auto* ls = app.add_subcommand("landscape", "Loss landscape around a checkpoint");
    ls->add_option("--model", model, "Checkpoint")->required();
    ls->add_option("--data", data, "Dataset file")->required();
    ls->add_option("--grid", grid, "Grid points per direction")->capture_default_str();
    ls->add_option("--range", range, "Half-width of the probed square")->capture_default_str();
    ls->add_option("--seed", seed, "Direction seed")->capture_default_str();
    ls->add_option("--out", out, "Output directory")->required();

    auto* pr = app.add_subcommand("predict", "Predict pressure trajectories for scenario records");
    pr->add_option("--model", model, "Checkpoint")->required();
    pr->add_option("--scenario", scenario, "Scenario file in dataset format")->required();
    pr->add_option("--out", out, "Output file in dataset format")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*gen) cmd_gen_data(config, out);
        else if (*tr) cmd_train(data, config, out);
        else if (*ev) cmd_eval(model, data, out);
        else if (*ls) cmd_landscape(model, data, grid, range, seed, out);
        else if (*pr) cmd_predict(model, scenario, out);
        return ok;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return solver_error;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return divergence;
    } catch (const IncompatibleArtifact& e) {
        std::cerr << "incompatible artifact: " << e.what() << '\n';
        return incompatible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
}

} // namespace tfno::cli
