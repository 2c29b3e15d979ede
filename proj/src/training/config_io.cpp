#include "tfno/training/config_io.hpp"

#include <set>
#include <type_traits>

#include "tfno/errors.hpp"

namespace tfno::train {

namespace {

class Reader {
public:
    Reader(const Json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        const std::string path = where_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError(path + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!it->is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ConfigError(path + ": expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ConfigError(path + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw ConfigError(path + ": expected a string");
        }
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    template <class T, std::size_t N>
    void get_array(const char* key, std::array<T, N>& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        const std::string path = where_ + "." + key;
        if (!it->is_array() || it->size() != N) throw ConfigError(path + ": expected an array of " + std::to_string(N));
        for (std::size_t i = 0; i < N; ++i) {
            if constexpr (std::is_unsigned_v<T>) {
                if (!(*it)[i].is_number_unsigned()) throw ConfigError(path + ": expected non-negative integers");
            } else if (!(*it)[i].is_number()) {
                throw ConfigError(path + ": expected numbers");
            }
            out[i] = (*it)[i].template get<T>();
        }
    }

    template <class T>
    void get_vector(const char* key, std::vector<T>& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        const std::string path = where_ + "." + key;
        if (!it->is_array()) throw ConfigError(path + ": expected an array");
        out.clear();
        for (const auto& v : *it) {
            if (!v.is_number_unsigned()) throw ConfigError(path + ": expected non-negative integers");
            out.push_back(v.template get<T>());
        }
    }

    const Json* child(const char* key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const char* key) const { return where_ + "." + key; }

    /// Rejects keys that were never asked for.
    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
        }
    }

private:
    const Json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

} // namespace

Json parse_json(const std::string& text, const std::string& what)
{
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

op::OperatorConfig operator_config_from_json(const Json& j)
{
    op::OperatorConfig c;
    Reader r(j, "model");
    r.get("layers", c.layers);
    r.get_array("modes", c.modes.kept);
    r.get("width", c.width);
    r.get("in_channels", c.in_channels);
    r.get("out_channels", c.out_channels);
    r.get("power", c.power);
    std::string fact = c.factorization == op::Factorization::tt ? "tt" : "dense";
    r.get("factorization", fact);
    if (fact == "tt") c.factorization = op::Factorization::tt;
    else if (fact == "dense") c.factorization = op::Factorization::dense;
    else throw ConfigError("model.factorization: expected 'dense' or 'tt', got '" + fact + "'");
    r.get_vector("tt_ranks", c.tt_ranks);
    r.get("activation", c.activation);
    r.get("lift_width", c.lift_width);
    r.get("projection_width", c.projection_width);
    r.finish();
    c.validate();
    return c;
}

Json to_json(const op::OperatorConfig& c)
{
    Json j;
    j["layers"] = c.layers;
    j["modes"] = c.modes.kept;
    j["width"] = c.width;
    j["in_channels"] = c.in_channels;
    j["out_channels"] = c.out_channels;
    j["power"] = c.power;
    j["factorization"] = c.factorization == op::Factorization::tt ? "tt" : "dense";
    j["tt_ranks"] = c.tt_ranks;
    j["activation"] = c.activation;
    j["lift_width"] = c.lift_width;
    j["projection_width"] = c.projection_width;
    return j;
}

loss::LossWeights loss_weights_from_json(const Json& j)
{
    loss::LossWeights w;
    Reader r(j, "loss");
    r.get("lambda", w.lambda);
    r.get("gamma", w.gamma);
    r.finish();
    w.validate();
    return w;
}

Json to_json(const loss::LossWeights& w) { return Json{{"lambda", w.lambda}, {"gamma", w.gamma}}; }

loss::SobolevConfig sobolev_from_json(const Json& j)
{
    loss::SobolevConfig s;
    Reader r(j, "sobolev");
    r.get("order", s.order);
    r.get("p", s.p);
    r.get("eps_den", s.eps_den);
    r.finish();
    s.validate();
    return s;
}

Json to_json(const loss::SobolevConfig& s) { return Json{{"order", s.order}, {"p", s.p}, {"eps_den", s.eps_den}}; }

TrainConfig train_config_from_json(const Json& j)
{
    TrainConfig c;
    Reader r(j, "train");
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get("lr", c.lr);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("adam_eps", c.adam_eps);
    r.get("weight_decay", c.weight_decay);
    r.get("clip_norm", c.clip_norm);
    r.get("lr_schedule", c.lr_schedule);
    r.get("final_lr_fraction", c.final_lr_fraction);
    r.get("seed", c.seed);
    if (const Json* l = r.child("loss")) c.loss = loss_weights_from_json(*l);
    if (const Json* s = r.child("sobolev")) c.sobolev = sobolev_from_json(*s);
    if (const Json* m = r.child("model")) c.model = operator_config_from_json(*m);
    if (const Json* s = r.child("split")) {
        Reader sr(*s, r.path("split"));
        sr.get("train", c.split.train);
        sr.get("validation", c.split.validation);
        sr.get("test", c.split.test);
        sr.finish();
    }
    r.finish();
    c.validate();
    return c;
}

Json to_json(const TrainConfig& c)
{
    Json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["weight_decay"] = c.weight_decay;
    j["clip_norm"] = c.clip_norm;
    j["lr_schedule"] = c.lr_schedule;
    j["final_lr_fraction"] = c.final_lr_fraction;
    j["seed"] = c.seed;
    j["loss"] = to_json(c.loss);
    j["sobolev"] = to_json(c.sobolev);
    j["model"] = to_json(c.model);
    j["split"] = Json{{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}};
    return j;
}

sim::SamplerConfig sampler_config_from_json(const Json& j)
{
    sim::SamplerConfig c;
    Reader r(j, "data");
    if (const Json* g = r.child("grid")) {
        Reader gr(*g, r.path("grid"));
        gr.get("nx", c.grid.nx);
        gr.get("ny", c.grid.ny);
        gr.get("dx", c.grid.dx);
        gr.get("dy", c.grid.dy);
        gr.get("h", c.grid.h);
        gr.finish();
    }
    if (const Json* f = r.child("fluid")) {
        Reader fr(*f, r.path("fluid"));
        fr.get("T_res", c.fluid.T_res);
        fr.get("T_sc", c.fluid.T_sc);
        fr.get("p_sc", c.fluid.p_sc);
        fr.get("mu", c.fluid.mu);
        fr.get("p_min", c.fluid.p_min);
        fr.get("p_max", c.fluid.p_max);
        fr.get("c_z", c.fluid.c_z);
        fr.finish();
    }
    r.get("steps", c.steps);
    r.get("dt_days", c.dt_days);
    r.get("k_mean_md", c.k_mean_md);
    r.get("log_k_std", c.log_k_std);
    r.get("corr_len", c.corr_len);
    r.get("phi_mean", c.phi_mean);
    r.get("phi_std", c.phi_std);
    r.get("phi_k_corr", c.phi_k_corr);
    r.get("wells_min", c.wells_min);
    r.get("wells_max", c.wells_max);
    r.get("well_eps", c.well_eps);
    r.get("rate_min", c.rate_min);
    r.get("rate_max", c.rate_max);
    r.get("max_season_fraction", c.max_season_fraction);
    r.get_array("p0_withdrawal", c.p0_withdrawal);
    r.get_array("p0_injection", c.p0_injection);
    r.get("p0_perturbation", c.p0_perturbation);
    r.finish();
    c.validate();
    return c;
}

Json to_json(const sim::SamplerConfig& c)
{
    Json j;
    j["grid"] = Json{{"nx", c.grid.nx}, {"ny", c.grid.ny}, {"dx", c.grid.dx}, {"dy", c.grid.dy}, {"h", c.grid.h}};
    j["fluid"] = Json{{"T_res", c.fluid.T_res}, {"T_sc", c.fluid.T_sc}, {"p_sc", c.fluid.p_sc}, {"mu", c.fluid.mu},
                      {"p_min", c.fluid.p_min}, {"p_max", c.fluid.p_max}, {"c_z", c.fluid.c_z}};
    j["steps"] = c.steps;
    j["dt_days"] = c.dt_days;
    j["k_mean_md"] = c.k_mean_md;
    j["log_k_std"] = c.log_k_std;
    j["corr_len"] = c.corr_len;
    j["phi_mean"] = c.phi_mean;
    j["phi_std"] = c.phi_std;
    j["phi_k_corr"] = c.phi_k_corr;
    j["wells_min"] = c.wells_min;
    j["wells_max"] = c.wells_max;
    j["well_eps"] = c.well_eps;
    j["rate_min"] = c.rate_min;
    j["rate_max"] = c.rate_max;
    j["max_season_fraction"] = c.max_season_fraction;
    j["p0_withdrawal"] = c.p0_withdrawal;
    j["p0_injection"] = c.p0_injection;
    j["p0_perturbation"] = c.p0_perturbation;
    return j;
}

sim::Normalization normalization_from_json(const Json& j)
{
    sim::Normalization n;
    Reader r(j, "normalization");
    r.get("p_lo", n.p_lo);
    r.get("p_hi", n.p_hi);
    r.get("phi_lo", n.phi_lo);
    r.get("phi_hi", n.phi_hi);
    r.get("logk_lo", n.logk_lo);
    r.get("logk_hi", n.logk_hi);
    r.get("q_scale", n.q_scale);
    r.finish();
    return n;
}

Json to_json(const sim::Normalization& n)
{
    return Json{{"p_lo", n.p_lo},       {"p_hi", n.p_hi},       {"phi_lo", n.phi_lo}, {"phi_hi", n.phi_hi},
                {"logk_lo", n.logk_lo}, {"logk_hi", n.logk_hi}, {"q_scale", n.q_scale}};
}

} // namespace tfno::train
