#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tfno/cli/cli.hpp"
#include "tfno/errors.hpp"
#include "tfno/losses/losses.hpp"
#include "tfno/seed.hpp"

namespace fs = std::filesystem;

namespace tfno::cli {

using train::Json;

namespace {

constexpr std::uint64_t model_init_stream = 0xC0FFEE;
constexpr std::size_t scatter_max_pairs = 20000;

std::string read_text(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    return os;
}

void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

DataConfig data_config_from_json(const Json& j)
{
    if (!j.is_object()) throw ConfigError("data: expected an object");
    DataConfig d;
    Json rest = j;
    if (auto it = rest.find("scenarios"); it != rest.end()) {
        if (!it->is_number_unsigned() || it->get<std::size_t>() == 0) throw ConfigError("data.scenarios: expected a positive integer");
        d.scenarios = it->get<std::size_t>();
        rest.erase("scenarios");
    }
    if (auto it = rest.find("injection_fraction"); it != rest.end()) {
        if (!it->is_number()) throw ConfigError("data.injection_fraction: expected a number");
        d.injection_fraction = it->get<double>();
        if (!(d.injection_fraction > 0.0 && d.injection_fraction < 1.0))
            throw ConfigError("data.injection_fraction: must lie in (0, 1), both families are required");
        rest.erase("injection_fraction");
    }
    d.sampler = train::sampler_config_from_json(rest);
    return d;
}

Json to_json(const DataConfig& d)
{
    Json j;
    j["scenarios"] = d.scenarios;
    j["injection_fraction"] = d.injection_fraction;
    const Json sampler = train::to_json(d.sampler);
    for (auto it = sampler.begin(); it != sampler.end(); ++it) j[it.key()] = *it;
    return j;
}

bool same_normalization(const sim::Normalization& a, const sim::Normalization& b)
{
    return a.p_lo == b.p_lo && a.p_hi == b.p_hi && a.phi_lo == b.phi_lo && a.phi_hi == b.phi_hi &&
           a.logk_lo == b.logk_lo && a.logk_hi == b.logk_hi && a.q_scale == b.q_scale;
}

void check_model_fits(const op::NeuralOperator& model, const sim::Dataset& ds, const std::string& what)
{
    const auto& c = model.config();
    if (c.in_channels != ds.in_channels || c.out_channels != ds.out_channels)
        throw IncompatibleArtifact(what + ": model expects " + std::to_string(c.in_channels) + " -> " +
                                   std::to_string(c.out_channels) + " channels, data has " +
                                   std::to_string(ds.in_channels) + " -> " + std::to_string(ds.out_channels));
    const std::array<std::size_t, 3> ext{ds.nx, ds.ny, ds.nt};
    for (std::size_t a = 0; a < 3; ++a)
        if (c.modes.kept[a] > ext[a])
            throw IncompatibleArtifact(what + ": grid " + std::to_string(ds.nx) + "x" + std::to_string(ds.ny) + "x" +
                                       std::to_string(ds.nt) + " is too small for the model's retained modes");
}

/// The first scenario of the split and the worst one.
std::vector<std::size_t> reported_positions(const train::EvalResult& r)
{
    std::vector<std::size_t> pos{0};
    const auto worst = static_cast<std::size_t>(std::max_element(r.rel_l2.begin(), r.rel_l2.end()) - r.rel_l2.begin());
    if (worst != 0) pos.push_back(worst);
    return pos;
}

void write_heatmaps(const std::string& dir, const train::EvalResult& r, const sim::Dataset& ds,
                    const sim::Normalization& norm)
{
    ensure_dir(dir);
    const std::size_t nx = ds.nx, ny = ds.ny, nt = ds.nt;
    for (std::size_t pos : reported_positions(r)) {
        const std::size_t id = r.ids[pos];
        const Tensor truth = ds.targets_of({id});
        const Tensor& pred = r.predictions[pos];
        std::vector<double> pp(pred.size()), tp(truth.size()), err(truth.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pp[i] = norm.denormalize_pressure(pred[i]);
            tp[i] = norm.denormalize_pressure(truth[i]);
            err[i] = std::abs(pp[i] - tp[i]);
        }
        const auto [pmin, pmax] = std::minmax_element(pp.begin(), pp.end());
        const auto [tmin, tmax] = std::minmax_element(tp.begin(), tp.end());
        const double lo = std::min(*pmin, *tmin), hi = std::max(*pmax, *tmax);
        const double emax = *std::max_element(err.begin(), err.end());
        for (std::size_t t = 0; t < nt; ++t) {
            std::vector<double> a(nx * ny), b(nx * ny), e(nx * ny);
            for (std::size_t c = 0; c < nx * ny; ++c) {
                a[c] = pp[c * nt + t];
                b[c] = tp[c * nt + t];
                e[c] = err[c * nt + t];
            }
            char stem[64];
            std::snprintf(stem, sizeof stem, "scenario%04zu_decade%02zu", id, t + 1);
            write_pgm16(dir + "/" + stem + "_pred.pgm", ny, nx, a, lo, hi);
            write_pgm16(dir + "/" + stem + "_true.pgm", ny, nx, b, lo, hi);
            write_pgm16(dir + "/" + stem + "_abserr.pgm", ny, nx, e, 0.0, emax);
        }
    }
}

} // namespace

sim::Family family_of(std::size_t i, double f)
{
    const auto a = std::llround(static_cast<double>(i) * f), b = std::llround(static_cast<double>(i + 1) * f);
    return b > a ? sim::Family::injection : sim::Family::withdrawal;
}

RunConfig run_config_from_json(const Json& j)
{
    if (!j.is_object()) throw ConfigError("run config: expected an object");
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "seed") {
            if (!it->is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
            c.seed = it->get<std::uint64_t>();
        } else if (k == "data") {
            c.data = data_config_from_json(*it);
            c.has_data = true;
        } else if (k == "train") {
            if (it->is_object() && it->contains("seed")) throw ConfigError("train.seed: the seed is set at top level only");
            c.train = train::train_config_from_json(*it);
            c.has_train = true;
        } else {
            throw ConfigError("run config: unknown key '" + k + "'");
        }
    }
    if (!j.contains("seed")) throw ConfigError("run config: missing top-level 'seed'");
    c.train.seed = c.seed;
    return c;
}

RunConfig load_run_config(const std::string& path)
{
    return run_config_from_json(train::parse_json(read_text(path), path));
}

Json to_json(const RunConfig& c)
{
    Json j;
    j["seed"] = c.seed;
    if (c.has_data) j["data"] = to_json(c.data);
    if (c.has_train) {
        Json t = train::to_json(c.train);
        t.erase("seed");
        j["train"] = t;
    }
    return j;
}

std::vector<sim::Scenario> regenerate_scenarios(const std::string& dataset_path, const std::vector<std::size_t>& ids)
{
    std::ifstream ms(sim::manifest_path(dataset_path));
    if (!ms) throw IncompatibleArtifact("missing dataset manifest " + sim::manifest_path(dataset_path));
    Json m;
    std::uint64_t seed = 0;
    std::vector<sim::Family> families;
    sim::SamplerConfig cfg;
    try {
        m = Json::parse(ms);
        seed = m.at("seed").get<std::uint64_t>();
        for (const auto& f : m.at("families")) families.push_back(sim::parse_family(f.get<std::string>()));
        cfg = data_config_from_json(m.at("generator").at("data")).sampler;
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleArtifact(sim::manifest_path(dataset_path) + ": no generator record: " + e.what());
    } catch (const ConfigError& e) {
        throw IncompatibleArtifact(sim::manifest_path(dataset_path) + ": bad generator record: " + e.what());
    }
    std::vector<sim::Scenario> out;
    for (std::size_t id : ids) {
        if (id >= families.size()) throw IncompatibleArtifact("scenario id out of range for " + dataset_path);
        out.push_back(sim::sample_scenario(seed, id, families[id], cfg));
    }
    return out;
}

CheckpointRun checkpoint_run(const train::Checkpoint& ck, const sim::Dataset& ds)
{
    check_model_fits(ck.model, ds, "checkpoint/dataset");
    if (!same_normalization(ck.norm, ds.norm))
        throw IncompatibleArtifact("checkpoint/dataset: normalization constants differ from the training data");
    RunConfig rc;
    try {
        rc = run_config_from_json(Json::parse(ck.config_text).at("run"));
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleArtifact(std::string("checkpoint: no run record: ") + e.what());
    } catch (const ConfigError& e) {
        throw IncompatibleArtifact(std::string("checkpoint: bad run record: ") + e.what());
    }
    CheckpointRun r;
    r.train = rc.train;
    try {
        r.test_ids = train::split_dataset(ds, rc.train.split, rc.seed).test;
    } catch (const ConfigError& e) {
        throw IncompatibleArtifact(std::string("checkpoint/dataset: ") + e.what());
    }
    return r;
}

void cmd_gen_data(const std::string& config_path, const std::string& out_path)
{
    const RunConfig rc = load_run_config(config_path);
    if (!rc.has_data) throw ConfigError(config_path + ": missing 'data' section");
    const DataConfig& d = rc.data;
    std::vector<sim::Scenario> scenarios;
    std::vector<sim::Trajectory> trajectories;
    std::size_t n_inj = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < d.scenarios; ++i) {
        const sim::Family fam = family_of(i, d.injection_fraction);
        n_inj += fam == sim::Family::injection;
        scenarios.push_back(sim::sample_scenario(rc.seed, i, fam, d.sampler));
        try {
            trajectories.push_back(sim::simulate(scenarios.back()));
        } catch (const SolverError& e) {
            throw SolverError("scenario " + std::to_string(i) + " (" + sim::family_name(fam) + "): " + e.what());
        }
        if ((i + 1) % 20 == 0 || i + 1 == d.scenarios)
            std::cerr << "gen-data: " << i + 1 << "/" << d.scenarios << " scenarios simulated\n";
    }
    const sim::Dataset ds = sim::build_dataset(scenarios, trajectories, rc.seed);
    Json extra;
    extra["data"] = to_json(d);
    extra["family_counts"] = Json{{"withdrawal", d.scenarios - n_inj}, {"injection", n_inj}};
    const auto parent = fs::path(out_path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    sim::save_dataset(out_path, ds, extra.dump());
    std::cerr << "gen-data: wrote " << out_path << " in "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
}

void cmd_train(const std::string& data_path, const std::string& config_path, const std::string& out_dir)
{
    const RunConfig rc = load_run_config(config_path);
    if (!rc.has_train) throw ConfigError(config_path + ": missing 'train' section");
    const sim::Dataset ds = sim::load_dataset(data_path);
    if (rc.has_data) {
        const auto& g = rc.data.sampler.grid;
        if (ds.nx != g.nx || ds.ny != g.ny || ds.nt != rc.data.sampler.steps || ds.size() != rc.data.scenarios)
            throw IncompatibleArtifact(data_path + ": dataset does not match the config's data section");
    }
    const auto init = op::NeuralOperator::init(rc.train.model, derive_seed(rc.seed, model_init_stream));
    check_model_fits(init, ds, data_path);
    const train::SplitPlan plan = train::split_dataset(ds, rc.train.split, rc.seed);
    ensure_dir(out_dir);
    const auto pc = init.param_count();
    std::cerr << "train: " << plan.train.size() << " train / " << plan.validation.size() << " validation / "
              << plan.test.size() << " test scenarios, " << pc.total << " parameters (" << pc.spectral
              << " spectral)\n";
    const auto t0 = std::chrono::steady_clock::now();
    const train::TrainResult res = train::train(init, ds, plan, rc.train, [&](std::size_t e, double tl, double vl) {
        std::cerr << "train: epoch " << e + 1 << "/" << rc.train.epochs << " train " << tl << " val " << vl << " ("
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s)\n";
    });
    train::save_checkpoint(out_dir + "/model.tfnc", res.best, ds.norm, to_json(rc).dump());
    auto os = open_out(out_dir + "/history.csv");
    os << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < res.history.train_loss.size(); ++e)
        os << e + 1 << ',' << format_double(res.history.train_loss[e]) << ',' << format_double(res.history.val_loss[e])
           << '\n';
    std::cerr << "train: best validation loss " << res.history.best_val << " at epoch " << res.history.best_epoch + 1
              << "\n";
}

void cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& out_dir)
{
    const train::Checkpoint ck = train::load_checkpoint(model_path);
    const sim::Dataset ds = sim::load_dataset(data_path);
    const CheckpointRun run = checkpoint_run(ck, ds);
    const train::EvalResult r = train::evaluate(ck.model, ds, run.test_ids, run.train.sobolev);
    ensure_dir(out_dir);

    // Reference row: the targets scored against themselves.
    const Tensor all_true = ds.targets_of(run.test_ids);
    const double self_r2 = loss::r_squared(all_true.data(), all_true.data());
    const double self_rel = train::relative_l2(all_true, all_true);

    auto ms = open_out(out_dir + "/metrics.csv");
    ms << "scope,scenario,family,metric,value\n";
    ms << "test,,,n_scenarios," << r.ids.size() << '\n';
    ms << "test,,,r2," << format_double(r.r2) << '\n';
    ms << "test,,,mean_rel_l2," << format_double(r.mean_rel_l2) << '\n';
    ms << "test,,,test_loss," << format_double(r.test_loss) << '\n';
    ms << "self_check,,,r2," << format_double(self_r2) << '\n';
    ms << "self_check,,,rel_l2," << format_double(self_rel) << '\n';
    for (std::size_t k = 0; k < r.ids.size(); ++k)
        ms << "scenario," << r.ids[k] << ',' << sim::family_name(ds.families[r.ids[k]]) << ",rel_l2,"
           << format_double(r.rel_l2[k]) << '\n';

    auto sc = open_out(out_dir + "/scatter.csv");
    sc << "scenario,pred,true\n";
    const std::size_t per = ds.target_stride(), total = per * r.ids.size();
    const std::size_t stride = (total + scatter_max_pairs - 1) / scatter_max_pairs;
    for (std::size_t g = 0; g < total; g += stride) {
        const std::size_t k = g / per, i = g % per;
        sc << r.ids[k] << ',' << format_double(r.predictions[k][i]) << ','
           << format_double(ds.targets[r.ids[k] * per + i]) << '\n';
    }

    write_heatmaps(out_dir + "/heatmaps", r, ds, ck.norm);

    // Wall-clock comparison against the reference solver on the same scenarios.
    auto ts = open_out(out_dir + "/timing.csv");
    ts << "scenario,nn_ms,solver_ms,speedup\n";
    try {
        const auto scenarios = regenerate_scenarios(data_path, r.ids);
        double nn_sum = 0.0, fv_sum = 0.0;
        for (std::size_t k = 0; k < r.ids.size(); ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            (void)sim::simulate(scenarios[k]);
            const double fv = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            nn_sum += r.inference_ms[k];
            fv_sum += fv;
            ts << r.ids[k] << ',' << format_double(r.inference_ms[k]) << ',' << format_double(fv) << ','
               << format_double(fv / r.inference_ms[k]) << '\n';
        }
        const double n = static_cast<double>(r.ids.size());
        ts << "mean," << format_double(nn_sum / n) << ',' << format_double(fv_sum / n) << ','
           << format_double(fv_sum / nn_sum) << '\n';
        std::cerr << "eval: mean inference " << nn_sum / n << " ms, solver " << fv_sum / n << " ms, speedup "
                  << fv_sum / nn_sum << "x\n";
    } catch (const IncompatibleArtifact& e) {
        std::cerr << "eval: solver timing skipped: " << e.what() << "\n";
    }
    std::cerr << "eval: R2 " << r.r2 << ", mean relative L2 " << r.mean_rel_l2 << ", test loss " << r.test_loss
              << "\n";
}

void cmd_landscape(const std::string& model_path, const std::string& data_path, std::size_t grid, double range,
                   std::uint64_t seed, const std::string& out_dir)
{
    if (grid < 2) throw ConfigError("--grid must be at least 2");
    if (!(range > 0.0) || !std::isfinite(range)) throw ConfigError("--range must be positive");
    const train::Checkpoint ck = train::load_checkpoint(model_path);
    const sim::Dataset ds = sim::load_dataset(data_path);
    const CheckpointRun run = checkpoint_run(ck, ds);
    const auto f = [&](const op::NeuralOperator& m) {
        return train::mean_approximation_loss(m, ds, run.test_ids, run.train.sobolev);
    };
    const loss::LandscapeGrid g = loss::loss_landscape(ck.model, f, grid, range, seed);
    ensure_dir(out_dir);
    auto os = open_out(out_dir + "/landscape.csv");
    os << "alpha,beta,loss\n";
    for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < grid; ++j)
            os << format_double(g.alphas[i]) << ',' << format_double(g.betas[j]) << ',' << format_double(g.at(i, j))
               << '\n';
    const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
    write_pgm16(out_dir + "/landscape.pgm", grid, grid, g.values, *lo, *hi);
    std::cerr << "landscape: centre " << g.at(grid / 2, grid / 2) << ", range [" << *lo << ", " << *hi << "]\n";
}

void cmd_predict(const std::string& model_path, const std::string& scenario_path, const std::string& out_path)
{
    const train::Checkpoint ck = train::load_checkpoint(model_path);
    const sim::Dataset sc = sim::load_dataset(scenario_path);
    if (sc.size() == 0) throw IncompatibleArtifact(scenario_path + ": no scenario records");
    check_model_fits(ck.model, sc, scenario_path);
    // Inputs are re-expressed in the checkpoint's constants before inference.
    sim::Dataset out = sim::renormalize(sc, ck.norm);
    for (std::size_t s = 0; s < out.size(); ++s) {
        const Tensor pred = ck.model.predict(out.inputs_of({s}));
        float* dst = out.targets.data() + s * out.target_stride();
        for (std::size_t i = 0; i < out.target_stride(); ++i)
            dst[i] = static_cast<float>(ck.norm.denormalize_pressure(pred[i]));
    }
    Json extra;
    extra["kind"] = "prediction";
    extra["target_units"] = "Pa";
    extra["note"] = "inputs use the header constants; targets are denormalized pressures";
    extra["source"] = scenario_path;
    sim::save_dataset(out_path, out, extra.dump());
}

} // namespace tfno::cli
