#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "tfno/losses/losses.hpp"
#include "tfno/operator/operator.hpp"
#include "tfno/sim/dataset.hpp"

namespace tfno::train {

struct SplitFractions {
    double train = 0.7, validation = 0.15, test = 0.15;
};

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 8;
    double lr = 3e-3;
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0; ///< decoupled (AdamW style)
    double clip_norm = 1.0;    ///< global gradient norm, 0 disables
    std::string lr_schedule = "cosine"; ///< "constant" or "cosine"
    double final_lr_fraction = 0.05;    ///< cosine end point as a fraction of lr
    std::uint64_t seed = 0;
    loss::LossWeights loss;
    loss::SobolevConfig sobolev;
    op::OperatorConfig model;
    SplitFractions split;

    void validate() const;
    /// Learning rate used during epoch `epoch` (0-based).
    double lr_at(std::size_t epoch) const;
};

struct SplitPlan {
    std::vector<std::size_t> train, validation, test;
};

/// Validation and test are drawn from withdrawal scenarios only (shuffled with
/// `seed`); everything else is training. Counts are round(fraction * size).
SplitPlan split_dataset(const sim::Dataset& ds, const SplitFractions& f, std::uint64_t seed);

struct AdamConfig {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
};

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;
};

/// One bias-corrected Adam update. Throws DivergenceError naming the block if
/// a gradient is non-finite.
void optimizer_step(std::vector<op::ParamBlock>& params, const std::vector<Tensor>& grads, AdamState& state,
                    const AdamConfig& cfg);

/// Scales grads in place so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

/// Composite objective of one scenario and its gradient per parameter block.
double sample_loss_and_gradient(const op::NeuralOperator& model, const sim::Dataset& ds, std::size_t id,
                                const loss::LossWeights& w, const loss::SobolevConfig& s, std::vector<Tensor>& grads);

/// Mean composite objective over `ids` (the training and validation curve quantity).
double mean_objective(const op::NeuralOperator& model, const sim::Dataset& ds, const std::vector<std::size_t>& ids,
                      const loss::LossWeights& w, const loss::SobolevConfig& s);

/// Mean approximation loss L(model(a), u) over `ids`; the test loss reported by
/// evaluation and probed by the loss landscape.
double mean_approximation_loss(const op::NeuralOperator& model, const sim::Dataset& ds,
                               const std::vector<std::size_t>& ids, const loss::SobolevConfig& s);

struct History {
    std::vector<double> train_loss, val_loss;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
};

struct TrainResult {
    op::NeuralOperator best;
    History history;
    std::set<std::size_t> gradient_ids; ///< every scenario id that entered a gradient
};

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double val_loss)>;

/// Minibatch Adam over plan.train. Per-scenario gradients are reduced in batch
/// order, so results do not depend on scheduling. Keeps the best-validation
/// parameters. Throws DivergenceError on a non-finite training loss.
TrainResult train(const op::NeuralOperator& init, const sim::Dataset& ds, const SplitPlan& plan, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct EvalResult {
    std::vector<std::size_t> ids;
    std::vector<double> rel_l2;       ///< per scenario, normalized pressure
    std::vector<double> inference_ms; ///< per scenario wall clock
    double r2 = 0.0;                  ///< pooled over all cells and decades
    double test_loss = 0.0;           ///< mean_approximation_loss
    double mean_rel_l2 = 0.0;
    std::vector<Tensor> predictions;  ///< normalized, [1, 1, nx, ny, nt]
};

EvalResult evaluate(const op::NeuralOperator& model, const sim::Dataset& ds, const std::vector<std::size_t>& ids,
                    const loss::SobolevConfig& s);

/// Relative L2 of a prediction against a target.
double relative_l2(const Tensor& pred, const Tensor& target);

struct Checkpoint {
    op::NeuralOperator model;
    sim::Normalization norm;
    std::string config_text; ///< JSON echo of the run configuration
};

/// "TFNC", version byte 1, u32-length-prefixed UTF-8 JSON config (operator,
/// normalization and `extra`), u32 block count, then per block: u32 name
/// length, name, u32 rank, u32 extents, f64 values. Little-endian.
void save_checkpoint(const std::string& path, const op::NeuralOperator& model, const sim::Normalization& norm,
                     const std::string& extra_json = "{}");
Checkpoint load_checkpoint(const std::string& path);

} // namespace tfno::train
