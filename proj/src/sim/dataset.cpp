#include "tfno/sim/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include "json.hpp"
#include <numbers>
#include <random>
#include <stdexcept>

#include "tfno/errors.hpp"
#include "tfno/seed.hpp"

static_assert(std::endian::native == std::endian::little, "dataset IO assumes a little-endian host");

namespace tfno::sim {

namespace {

// White noise smoothed by a separable Gaussian (reflecting edges), then
// standardized to zero mean and unit variance.
std::vector<double> smooth_field(std::mt19937_64& rng, const GridGeometry& g, double sigma)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> f(g.cells());
    for (auto& v : f) v = normal(rng);

    const int half = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * half + 1);
    double ks = 0.0;
    for (int d = -half; d <= half; ++d) ks += kernel[d + half] = std::exp(-0.5 * d * d / (sigma * sigma));
    for (auto& k : kernel) k /= ks;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    const int nx = static_cast<int>(g.nx), ny = static_cast<int>(g.ny);
    std::vector<double> tmp(f.size(), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            double acc = 0.0;
            for (int d = -half; d <= half; ++d) acc += kernel[d + half] * f[reflect(i + d, nx) * ny + j];
            tmp[i * ny + j] = acc;
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            double acc = 0.0;
            for (int d = -half; d <= half; ++d) acc += kernel[d + half] * tmp[i * ny + reflect(j + d, ny)];
            f[i * ny + j] = acc;
        }

    double mean = 0.0, var = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    for (double v : f) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(f.size()));
    for (auto& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return f;
}

void write_raw(std::ofstream& os, const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

template <class T>
void write_pod(std::ofstream& os, T v)
{
    write_raw(os, &v, sizeof(T));
}

template <class T>
T read_pod(std::ifstream& is, const std::string& path)
{
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IncompatibleArtifact(path + ": truncated dataset header");
    return v;
}

double scale_or_one(double lo, double hi) { return hi > lo ? hi - lo : 1.0; }

} // namespace

const char* family_name(Family f) { return f == Family::withdrawal ? "withdrawal" : "injection"; }

Family parse_family(const std::string& s)
{
    if (s == "withdrawal") return Family::withdrawal;
    if (s == "injection") return Family::injection;
    throw ConfigError("unknown scenario family '" + s + "'");
}

Trajectory simulate(const Scenario& s, const SolverOptions& opts)
{
    s.res.validate();
    if (s.p0.size() != s.res.grid.cells()) throw ConfigError("simulate: p0 size does not match grid");
    const Tensor q = well_source_field(s.wells, s.res.grid, s.steps);
    Trajectory tr;
    tr.p.reserve(s.steps + 1);
    tr.p.push_back(s.p0);
    std::vector<double> src(s.res.grid.cells());
    for (std::size_t n = 0; n < s.steps; ++n) {
        for (std::size_t c = 0; c < src.size(); ++c) src[c] = q[c * s.steps + n];
        tr.p.push_back(step_implicit(s.res, tr.p.back(), src, s.dt, opts));
    }
    return tr;
}

void SamplerConfig::validate() const
{
    grid.validate();
    fluid.validate();
    if (steps == 0) throw ConfigError("sampler: steps must be >= 1");
    if (!(dt_days > 0.0)) throw ConfigError("sampler: dt_days must be > 0");
    if (!(k_mean_md > 0.0) || !(log_k_std >= 0.0) || !(corr_len > 0.0)) throw ConfigError("sampler: bad permeability settings");
    if (!(phi_mean > 0.0 && phi_mean < 1.0) || !(phi_std >= 0.0) || std::abs(phi_k_corr) > 1.0)
        throw ConfigError("sampler: bad porosity settings");
    if (wells_min < 1 || wells_max < wells_min) throw ConfigError("sampler: need 1 <= wells_min <= wells_max");
    if (!(well_eps > 0.0)) throw ConfigError("sampler: well_eps must be > 0");
    if (!(rate_min > 0.0) || !(rate_max >= rate_min)) throw ConfigError("sampler: need 0 < rate_min <= rate_max");
    if (!(max_season_fraction > 0.0 && max_season_fraction < 1.0)) throw ConfigError("sampler: max_season_fraction in (0, 1)");
    for (const auto& r : {p0_withdrawal, p0_injection}) {
        if (!(r[0] > fluid.p_min && r[1] < fluid.p_max && r[0] <= r[1])) throw ConfigError("sampler: p0 range outside fluid bounds");
    }
}

Scenario sample_scenario(std::uint64_t seed, std::uint64_t index, Family family, const SamplerConfig& cfg)
{
    cfg.validate();
    std::mt19937_64 rng(derive_seed(seed, index));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

    Scenario s;
    s.family = family;
    s.steps = cfg.steps;
    s.dt = cfg.dt_days * seconds_per_day;
    s.res.grid = cfg.grid;
    s.res.fluid = cfg.fluid;
    const GridGeometry& g = cfg.grid;
    const std::size_t n = g.cells();

    const auto zk = smooth_field(rng, g, cfg.corr_len);
    const auto zphi = smooth_field(rng, g, cfg.corr_len);
    const auto zp = smooth_field(rng, g, 2.0 * cfg.corr_len);
    s.res.rock.kx.resize(n);
    s.res.rock.phi.resize(n);
    const double rho = cfg.phi_k_corr, rho_c = std::sqrt(1.0 - rho * rho);
    for (std::size_t c = 0; c < n; ++c) {
        s.res.rock.kx[c] = cfg.k_mean_md * std::exp(cfg.log_k_std * zk[c]);
        s.res.rock.phi[c] = std::clamp(cfg.phi_mean + cfg.phi_std * (rho * zk[c] + rho_c * zphi[c]), 0.05, 0.35);
    }
    s.res.rock.ky = s.res.rock.kx;

    const auto& range = family == Family::withdrawal ? cfg.p0_withdrawal : cfg.p0_injection;
    const double base = uniform(range[0], range[1]);
    s.p0.resize(n);
    for (std::size_t c = 0; c < n; ++c) s.p0[c] = base + cfg.p0_perturbation * zp[c];

    // Wells: rejection sampling for disjoint supports.
    const std::size_t count =
        cfg.wells_min + static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.wells_max - cfg.wells_min + 1));
    const double margin = 1.0;
    const double min_dist = 2.0 * well_support_radius * cfg.well_eps;
    for (int attempt = 0; s.wells.size() < std::min(count, cfg.wells_max) && attempt < 100000; ++attempt) {
        Well w;
        w.eps = cfg.well_eps;
        w.cx = uniform(margin, static_cast<double>(g.nx) - margin);
        w.cy = uniform(margin, static_cast<double>(g.ny) - margin);
        bool ok = true;
        for (const auto& o : s.wells) ok = ok && std::hypot(o.cx - w.cx, o.cy - w.cy) > min_dist;
        if (ok) s.wells.push_back(w);
    }
    if (s.wells.size() < cfg.wells_min) throw ConfigError("sampler: could not place the wells without overlap");

    // Piecewise-constant decade schedule, scaled so the season volume stays
    // below max_season_fraction of the initial gas in place.
    const double sign = family == Family::withdrawal ? -1.0 : 1.0;
    double volume = 0.0;
    for (auto& w : s.wells) {
        const double base_rate = uniform(cfg.rate_min, cfg.rate_max);
        w.rates.resize(cfg.steps);
        for (auto& r : w.rates) {
            r = base_rate * uniform(0.5, 1.5);
            volume += r * cfg.dt_days;
        }
    }
    const double cap = cfg.max_season_fraction * s.res.gas_in_place(s.p0);
    const double factor = volume > cap ? cap / volume : 1.0;
    for (auto& w : s.wells)
        for (auto& r : w.rates) r *= sign * factor;
    return s;
}

std::vector<Scenario> sample_scenarios(std::size_t n, Family family, std::uint64_t seed, const SamplerConfig& cfg,
                                       std::uint64_t first_index)
{
    if (n == 0) throw ConfigError("sample_scenarios: n must be >= 1");
    std::vector<Scenario> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_scenario(seed, first_index + i, family, cfg));
    return out;
}

double Normalization::normalize_pressure(double p) const { return (p - p_lo) / scale_or_one(p_lo, p_hi); }
double Normalization::denormalize_pressure(double v) const { return p_lo + v * scale_or_one(p_lo, p_hi); }

Dataset build_dataset(const std::vector<Scenario>& scenarios, const std::vector<Trajectory>& trajectories,
                      std::uint64_t seed)
{
    if (scenarios.empty()) throw std::invalid_argument("build_dataset: no scenarios");
    if (scenarios.size() != trajectories.size()) throw std::invalid_argument("build_dataset: scenario/trajectory count mismatch");
    const GridGeometry& g = scenarios[0].res.grid;
    const std::size_t nt = scenarios[0].steps;
    const std::size_t cells = g.cells();
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        const auto& sc = scenarios[s];
        if (sc.res.grid.nx != g.nx || sc.res.grid.ny != g.ny || sc.steps != nt)
            throw std::invalid_argument("build_dataset: scenarios differ in grid or step count");
        if (trajectories[s].p.size() != nt + 1) throw std::invalid_argument("build_dataset: trajectory length mismatch");
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    Normalization nm{inf, -inf, inf, -inf, inf, -inf, 0.0};
    std::vector<Tensor> rates;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        const auto& sc = scenarios[s];
        for (const auto& snap : trajectories[s].p)
            for (double v : snap) {
                if (!std::isfinite(v)) throw std::domain_error("build_dataset: non-finite pressure in scenario " + std::to_string(s));
                nm.p_lo = std::min(nm.p_lo, v);
                nm.p_hi = std::max(nm.p_hi, v);
            }
        for (std::size_t c = 0; c < cells; ++c) {
            nm.phi_lo = std::min(nm.phi_lo, sc.res.rock.phi[c]);
            nm.phi_hi = std::max(nm.phi_hi, sc.res.rock.phi[c]);
            const double lk = std::log(sc.res.rock.kx[c]);
            nm.logk_lo = std::min(nm.logk_lo, lk);
            nm.logk_hi = std::max(nm.logk_hi, lk);
        }
        rates.push_back(well_source_field(sc.wells, sc.res.grid, nt));
        const double qmax = max_abs(rates.back());
        if (!std::isfinite(qmax)) throw std::domain_error("build_dataset: non-finite well rate in scenario " + std::to_string(s));
        nm.q_scale = std::max(nm.q_scale, qmax);
    }
    if (nm.q_scale == 0.0) nm.q_scale = 1.0;

    Dataset ds;
    ds.nx = g.nx;
    ds.ny = g.ny;
    ds.nt = nt;
    ds.norm = nm;
    ds.seed = seed;
    ds.inputs.resize(scenarios.size() * ds.input_stride());
    ds.targets.resize(scenarios.size() * ds.target_stride());
    const double phi_s = scale_or_one(nm.phi_lo, nm.phi_hi);
    const double logk_s = scale_or_one(nm.logk_lo, nm.logk_hi);
    const std::size_t plane = cells * nt;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        const auto& sc = scenarios[s];
        ds.families.push_back(sc.family);
        float* in = ds.inputs.data() + s * ds.input_stride();
        float* out = ds.targets.data() + s * ds.target_stride();
        for (std::size_t c = 0; c < cells; ++c) {
            const double p0 = nm.normalize_pressure(sc.p0[c]);
            const double phi = (sc.res.rock.phi[c] - nm.phi_lo) / phi_s;
            const double lk = (std::log(sc.res.rock.kx[c]) - nm.logk_lo) / logk_s;
            for (std::size_t t = 0; t < nt; ++t) {
                const std::size_t at = c * nt + t;
                const double tau = 2.0 * std::numbers::pi * static_cast<double>(t + 1) / static_cast<double>(nt);
                in[0 * plane + at] = static_cast<float>(p0);
                in[1 * plane + at] = static_cast<float>(phi);
                in[2 * plane + at] = static_cast<float>(lk);
                in[3 * plane + at] = static_cast<float>(rates[s][at] / nm.q_scale);
                in[4 * plane + at] = static_cast<float>(std::sin(tau));
                in[5 * plane + at] = static_cast<float>(std::cos(tau));
                out[at] = static_cast<float>(nm.normalize_pressure(trajectories[s].p[t + 1][c]));
            }
        }
    }
    return ds;
}

Tensor Dataset::inputs_of(const std::vector<std::size_t>& idx) const
{
    Tensor t({idx.size(), in_channels, nx, ny, nt});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] >= size()) throw std::out_of_range("dataset: scenario index out of range");
        const float* src = inputs.data() + idx[b] * input_stride();
        for (std::size_t i = 0; i < input_stride(); ++i) t[b * input_stride() + i] = src[i];
    }
    return t;
}

Tensor Dataset::targets_of(const std::vector<std::size_t>& idx) const
{
    Tensor t({idx.size(), out_channels, nx, ny, nt});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] >= size()) throw std::out_of_range("dataset: scenario index out of range");
        const float* src = targets.data() + idx[b] * target_stride();
        for (std::size_t i = 0; i < target_stride(); ++i) t[b * target_stride() + i] = src[i];
    }
    return t;
}

Tensor Dataset::initial_of(const std::vector<std::size_t>& idx) const
{
    Tensor t({idx.size(), 1, nx, ny, 1});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] >= size()) throw std::out_of_range("dataset: scenario index out of range");
        const float* src = inputs.data() + idx[b] * input_stride(); // channel 0 = p0, constant in t
        for (std::size_t c = 0; c < nx * ny; ++c) t[b * nx * ny + c] = src[c * nt];
    }
    return t;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& ids)
{
    Dataset out = ds;
    out.inputs.clear();
    out.targets.clear();
    out.families.clear();
    for (std::size_t id : ids) {
        if (id >= ds.size()) throw std::out_of_range("dataset: scenario index out of range");
        const auto in = ds.inputs.begin() + static_cast<std::ptrdiff_t>(id * ds.input_stride());
        const auto tg = ds.targets.begin() + static_cast<std::ptrdiff_t>(id * ds.target_stride());
        out.inputs.insert(out.inputs.end(), in, in + static_cast<std::ptrdiff_t>(ds.input_stride()));
        out.targets.insert(out.targets.end(), tg, tg + static_cast<std::ptrdiff_t>(ds.target_stride()));
        out.families.push_back(ds.families[id]);
    }
    return out;
}

namespace {

struct ChannelMap {
    double lo, scale;
    double to_physical(double v) const { return lo + v * scale; }
    double from_physical(double x) const { return (x - lo) / scale; }
};

std::array<ChannelMap, 4> channel_maps(const Normalization& n)
{
    return {ChannelMap{n.p_lo, scale_or_one(n.p_lo, n.p_hi)}, ChannelMap{n.phi_lo, scale_or_one(n.phi_lo, n.phi_hi)},
            ChannelMap{n.logk_lo, scale_or_one(n.logk_lo, n.logk_hi)}, ChannelMap{0.0, n.q_scale}};
}

} // namespace

Dataset renormalize(const Dataset& ds, const Normalization& to)
{
    if (ds.in_channels != dataset_in_channels) throw std::invalid_argument("renormalize: unexpected channel layout");
    const auto from = channel_maps(ds.norm), dst = channel_maps(to);
    Dataset out = ds;
    out.norm = to;
    const std::size_t plane = ds.nx * ds.ny * ds.nt;
    for (std::size_t s = 0; s < ds.size(); ++s) {
        float* in = out.inputs.data() + s * ds.input_stride();
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                float& v = in[c * plane + i];
                v = static_cast<float>(dst[c].from_physical(from[c].to_physical(v)));
            }
        float* tg = out.targets.data() + s * ds.target_stride();
        for (std::size_t i = 0; i < ds.target_stride(); ++i)
            tg[i] = static_cast<float>(dst[0].from_physical(from[0].to_physical(tg[i])));
    }
    return out;
}

Normalization local_normalization(const Dataset& ds)
{
    const auto from = channel_maps(ds.norm);
    const double inf = std::numeric_limits<double>::infinity();
    std::array<double, 3> lo{inf, inf, inf}, hi{-inf, -inf, -inf};
    double qmax = 0.0;
    const std::size_t plane = ds.nx * ds.ny * ds.nt;
    auto see = [&](std::size_t c, double x) {
        lo[c] = std::min(lo[c], x);
        hi[c] = std::max(hi[c], x);
    };
    for (std::size_t s = 0; s < ds.size(); ++s) {
        const float* in = ds.inputs.data() + s * ds.input_stride();
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) see(c, from[c].to_physical(in[c * plane + i]));
        for (std::size_t i = 0; i < plane; ++i) qmax = std::max(qmax, std::abs(from[3].to_physical(in[3 * plane + i])));
        const float* tg = ds.targets.data() + s * ds.target_stride();
        for (std::size_t i = 0; i < ds.target_stride(); ++i) see(0, from[0].to_physical(tg[i]));
    }
    if (ds.size() == 0) return ds.norm;
    return Normalization{lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], qmax > 0.0 ? qmax : 1.0};
}

std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".json"; }

void save_dataset(const std::string& path, const Dataset& ds, const std::string& extra_json)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_raw(os, "TFNO", 4);
    write_pod<std::uint8_t>(os, 1);
    for (std::size_t v : {ds.size(), ds.nx, ds.ny, ds.nt, ds.in_channels, ds.out_channels})
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    const auto& n = ds.norm;
    for (double v : {n.p_lo, n.p_hi, n.phi_lo, n.phi_hi, n.logk_lo, n.logk_hi, n.q_scale}) write_pod<double>(os, v);
    for (std::size_t s = 0; s < ds.size(); ++s) {
        write_raw(os, ds.inputs.data() + s * ds.input_stride(), ds.input_stride() * sizeof(float));
        write_raw(os, ds.targets.data() + s * ds.target_stride(), ds.target_stride() * sizeof(float));
    }
    if (!os) throw std::runtime_error("write failed for " + path);

    nlohmann::ordered_json m;
    m["format"] = "TFNO";
    m["version"] = 1;
    m["input_channels"] = std::vector<std::string>(input_channel_names.begin(), input_channel_names.end());
    m["target_channels"] = {"pressure"};
    m["seed"] = ds.seed;
    m["normalization"] = {{"p_lo", n.p_lo},     {"p_hi", n.p_hi},       {"phi_lo", n.phi_lo}, {"phi_hi", n.phi_hi},
                          {"logk_lo", n.logk_lo}, {"logk_hi", n.logk_hi}, {"q_scale", n.q_scale}};
    std::vector<std::string> fam;
    for (auto f : ds.families) fam.emplace_back(family_name(f));
    m["families"] = fam;
    m["generator"] = nlohmann::ordered_json::parse(extra_json);
    std::ofstream ms(manifest_path(path), std::ios::trunc);
    if (!ms) throw std::runtime_error("cannot open " + manifest_path(path) + " for writing");
    ms << m.dump(2) << '\n';
}

Dataset load_dataset(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TFNO", 4) != 0) throw IncompatibleArtifact(path + ": not a TFNO dataset");
    const auto version = read_pod<std::uint8_t>(is, path);
    if (version != 1) throw IncompatibleArtifact(path + ": unsupported dataset version " + std::to_string(version));
    std::uint32_t counts[6];
    for (auto& c : counts) c = read_pod<std::uint32_t>(is, path);
    Dataset ds;
    const std::size_t n = counts[0];
    ds.nx = counts[1];
    ds.ny = counts[2];
    ds.nt = counts[3];
    ds.in_channels = counts[4];
    ds.out_channels = counts[5];
    if (ds.in_channels != dataset_in_channels || ds.out_channels != dataset_out_channels)
        throw IncompatibleArtifact(path + ": channel counts do not match the operator input contract");
    auto& nm = ds.norm;
    for (double* v : {&nm.p_lo, &nm.p_hi, &nm.phi_lo, &nm.phi_hi, &nm.logk_lo, &nm.logk_hi, &nm.q_scale}) *v = read_pod<double>(is, path);
    ds.inputs.resize(n * ds.input_stride());
    ds.targets.resize(n * ds.target_stride());
    for (std::size_t s = 0; s < n; ++s) {
        if (!is.read(reinterpret_cast<char*>(ds.inputs.data() + s * ds.input_stride()),
                     static_cast<std::streamsize>(ds.input_stride() * sizeof(float))) ||
            !is.read(reinterpret_cast<char*>(ds.targets.data() + s * ds.target_stride()),
                     static_cast<std::streamsize>(ds.target_stride() * sizeof(float))))
            throw IncompatibleArtifact(path + ": truncated payload");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw IncompatibleArtifact(path + ": trailing bytes after payload");

    std::ifstream ms(manifest_path(path));
    if (!ms) throw IncompatibleArtifact("missing dataset manifest " + manifest_path(path));
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(ms);
        ds.seed = m.at("seed").get<std::uint64_t>();
        for (const auto& f : m.at("families")) ds.families.push_back(parse_family(f.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleArtifact(manifest_path(path) + ": " + e.what());
    }
    if (ds.families.size() != n) throw IncompatibleArtifact(manifest_path(path) + ": family list does not match scenario count");
    return ds;
}

} // namespace tfno::sim
