#include "tfno/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "tfno/errors.hpp"
#include "tfno/seed.hpp"

namespace tfno::train {

void TrainConfig::validate() const
{
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train: decay rates must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be >= 0");
    if (lr_schedule != "constant" && lr_schedule != "cosine") throw ConfigError("train: lr_schedule must be 'constant' or 'cosine'");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) throw ConfigError("train: final_lr_fraction must lie in (0, 1]");
    for (double f : {split.train, split.validation, split.test})
        if (!(f >= 0.0)) throw ConfigError("train: split fractions must be >= 0");
    if (std::abs(split.train + split.validation + split.test - 1.0) > 1e-9) throw ConfigError("train: split fractions must sum to 1");
    loss.validate();
    sobolev.validate();
    model.validate();
}

double TrainConfig::lr_at(std::size_t epoch) const
{
    if (lr_schedule == "constant" || epochs == 1) return lr;
    const double x = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    const double lo = lr * final_lr_fraction;
    return lo + 0.5 * (lr - lo) * (1.0 + std::cos(std::numbers::pi * x));
}

SplitPlan split_dataset(const sim::Dataset& ds, const SplitFractions& f, std::uint64_t seed)
{
    const double n = static_cast<double>(ds.size());
    const auto n_val = static_cast<std::size_t>(std::llround(f.validation * n));
    const auto n_test = static_cast<std::size_t>(std::llround(f.test * n));
    std::vector<std::size_t> withdrawal, injection;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (ds.families[i] == sim::Family::withdrawal ? withdrawal : injection).push_back(i);
    if (withdrawal.empty() || injection.empty()) throw ConfigError("split: dataset must contain both scenario families");
    if (withdrawal.size() < n_val + n_test) {
        throw ConfigError("split: " + std::to_string(withdrawal.size()) + " withdrawal scenarios cannot fill " +
                          std::to_string(n_val) + " validation + " + std::to_string(n_test) + " test");
    }
    std::mt19937_64 rng(derive_seed(seed, 0x5EED));
    std::shuffle(withdrawal.begin(), withdrawal.end(), rng);
    SplitPlan plan;
    plan.validation.assign(withdrawal.begin(), withdrawal.begin() + static_cast<std::ptrdiff_t>(n_val));
    plan.test.assign(withdrawal.begin() + static_cast<std::ptrdiff_t>(n_val),
                     withdrawal.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    plan.train.assign(withdrawal.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), withdrawal.end());
    plan.train.insert(plan.train.end(), injection.begin(), injection.end());
    for (auto* v : {&plan.train, &plan.validation, &plan.test}) std::sort(v->begin(), v->end());
    return plan;
}

void optimizer_step(std::vector<op::ParamBlock>& params, const std::vector<Tensor>& grads, AdamState& state,
                    const AdamConfig& cfg)
{
    if (grads.size() != params.size()) throw std::invalid_argument("optimizer_step: gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k].value, grads[k], "optimizer_step");
        for (double g : grads[k].data()) {
            if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter block '" + params[k].name + "'");
        }
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value.shape());
            state.v.emplace_back(p.value.shape());
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& theta = params[k].value;
        auto& m = state.m[k];
        auto& v = state.v[k];
        const auto& g = grads[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mh = m[i] / c1, vh = v[i] / c2;
            theta[i] -= cfg.lr * (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * theta[i]);
        }
    }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm)
{
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& g : grads)
            for (auto& v : g.data()) v *= s;
    }
    return norm;
}

double sample_loss_and_gradient(const op::NeuralOperator& model, const sim::Dataset& ds, std::size_t id,
                                const loss::LossWeights& w, const loss::SobolevConfig& s, std::vector<Tensor>& grads)
{
    const std::vector<std::size_t> one{id};
    ad::Tape tape;
    const auto params = model.bind(tape);
    const ad::NodeId l = loss::total_loss(tape, model, params, ds.inputs_of(one), ds.targets_of(one), ds.initial_of(one), w, s);
    const double value = tape.value(l).item();
    const auto g = tape.backprop(l);
    grads.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        grads[k] = g.contains(params[k]) ? g[params[k]] : Tensor(model.params()[k].value.shape());
    }
    return value;
}

double mean_objective(const op::NeuralOperator& model, const sim::Dataset& ds, const std::vector<std::size_t>& ids,
                      const loss::LossWeights& w, const loss::SobolevConfig& s)
{
    if (ids.empty()) throw std::invalid_argument("mean_objective: empty id list");
    double acc = 0.0;
    for (std::size_t id : ids) {
        const std::vector<std::size_t> one{id};
        acc += loss::total_loss(model, ds.inputs_of(one), ds.targets_of(one), ds.initial_of(one), w, s);
    }
    return acc / static_cast<double>(ids.size());
}

double mean_approximation_loss(const op::NeuralOperator& model, const sim::Dataset& ds,
                               const std::vector<std::size_t>& ids, const loss::SobolevConfig& s)
{
    if (ids.empty()) throw std::invalid_argument("mean_approximation_loss: empty id list");
    double acc = 0.0;
    for (std::size_t id : ids) {
        const std::vector<std::size_t> one{id};
        acc += loss::sobolev_h1_relative(model.predict(ds.inputs_of(one)), ds.targets_of(one), s);
    }
    return acc / static_cast<double>(ids.size());
}

TrainResult train(const op::NeuralOperator& init, const sim::Dataset& ds, const SplitPlan& plan, const TrainConfig& cfg,
                  const EpochCallback& on_epoch)
{
    cfg.validate();
    if (plan.train.empty()) throw ConfigError("train: empty training split");
    if (plan.validation.empty()) throw ConfigError("train: empty validation split");
    if (init.config().in_channels != ds.in_channels || init.config().out_channels != ds.out_channels)
        throw IncompatibleArtifact("train: model channel counts do not match the dataset");

    op::NeuralOperator model = init;
    TrainResult result;
    result.best = model;
    AdamState state;
    std::vector<Tensor> sum, grads;
    std::vector<std::size_t> order = plan.train;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(cfg.seed, 1000 + epoch));
        std::shuffle(order.begin(), order.end(), rng);
        const AdamConfig adam{cfg.lr_at(epoch), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            sum.clear();
            for (std::size_t b = start; b < end; ++b) {
                result.gradient_ids.insert(order[b]);
                const double l = sample_loss_and_gradient(model, ds, order[b], cfg.loss, cfg.sobolev, grads);
                if (!std::isfinite(l)) {
                    throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch + 1) +
                                          " (scenario " + std::to_string(order[b]) + ")");
                }
                epoch_loss += l;
                if (sum.empty()) sum = grads;
                else
                    for (std::size_t k = 0; k < sum.size(); ++k)
                        for (std::size_t i = 0; i < sum[k].size(); ++i) sum[k][i] += grads[k][i];
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (auto& g : sum)
                for (auto& v : g.data()) v *= inv;
            clip_global_norm(sum, cfg.clip_norm);
            optimizer_step(model.params(), sum, state, adam);
        }
        const double train_loss = epoch_loss / static_cast<double>(order.size());
        const double val_loss = mean_objective(model, ds, plan.validation, cfg.loss, cfg.sobolev);
        if (!std::isfinite(val_loss)) throw DivergenceError("validation loss became non-finite in epoch " + std::to_string(epoch + 1));
        result.history.train_loss.push_back(train_loss);
        result.history.val_loss.push_back(val_loss);
        if (epoch == 0 || val_loss < result.history.best_val) {
            result.history.best_val = val_loss;
            result.history.best_epoch = epoch;
            result.best = model;
        }
        if (on_epoch) on_epoch(epoch, train_loss, val_loss);
    }
    return result;
}

double relative_l2(const Tensor& pred, const Tensor& target)
{
    const double den = l2_norm(target);
    if (den == 0.0) throw std::domain_error("relative_l2: target has zero norm");
    return l2_norm(sub(pred, target)) / den;
}

EvalResult evaluate(const op::NeuralOperator& model, const sim::Dataset& ds, const std::vector<std::size_t>& ids,
                    const loss::SobolevConfig& s)
{
    if (ids.empty()) throw std::invalid_argument("evaluate: empty split");
    EvalResult r;
    r.ids = ids;
    std::vector<double> all_pred, all_true;
    double loss_acc = 0.0, rel_acc = 0.0;
    for (std::size_t id : ids) {
        const std::vector<std::size_t> one{id};
        const Tensor a = ds.inputs_of(one);
        const Tensor u = ds.targets_of(one);
        const auto t0 = std::chrono::steady_clock::now();
        Tensor pred = model.predict(a);
        r.inference_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        r.rel_l2.push_back(relative_l2(pred, u));
        rel_acc += r.rel_l2.back();
        loss_acc += loss::sobolev_h1_relative(pred, u, s);
        all_pred.insert(all_pred.end(), pred.data().begin(), pred.data().end());
        all_true.insert(all_true.end(), u.data().begin(), u.data().end());
        r.predictions.push_back(std::move(pred));
    }
    r.r2 = loss::r_squared(all_pred, all_true);
    r.test_loss = loss_acc / static_cast<double>(ids.size());
    r.mean_rel_l2 = rel_acc / static_cast<double>(ids.size());
    return r;
}

} // namespace tfno::train
