#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgf/data.hpp"
#include "sgf/metrics.hpp"
#include "sgf/model.hpp"

namespace sgf {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double decay = 1e-6;  // inverse-time decay per step
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::string dtype = "f32";

    void validate() const;
    /// JSON object holding exactly the fields above.
    std::string to_json() const;
    /// Overlays the keys present in `text` on `base`; unknown keys are rejected.
    static TrainConfig from_json(std::string_view text, const TrainConfig& base);
    static TrainConfig from_json(std::string_view text);

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamMoments {
    TensorF m;
    TensorF v;
};

struct AdamState {
    std::map<std::string, AdamMoments> moments;
    std::uint64_t t = 0;  // completed steps
};

/// Step size for the step taken after `t` completed steps.
inline double adam_learning_rate(const TrainConfig& cfg, std::uint64_t t) {
    return cfg.lr / (1.0 + cfg.decay * static_cast<double>(t));
}

/// In-place bias-corrected Adam update of one buffer; `t_after` is the step
/// number being taken (1 for the first step). Arithmetic is in double.
template <class T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 double lr_t, double beta1, double beta2, double epsilon, std::uint64_t t_after);

/// One Adam step over every trainable parameter; frozen buffers are skipped.
/// Every trainable parameter needs a gradient of the same shape.
void adam_step(ParameterStore& params, const std::map<std::string, TensorF>& grads,
               AdamState& state, const TrainConfig& cfg);

/// Sum over heads of the batch-mean cross-entropy, each head supervised with
/// the image label.
VarId sum_head_losses(Tape<float>& tape, std::span<const VarId> heads, std::span<const int> labels);

struct LossResult {
    VarId loss;
    ForwardResult forward;
};

LossResult ensemble_loss(EnsembleModel& model, Tape<float>& tape, VarId images,
                         std::span<const int> labels, Mode mode, bool track_grad);

// ---------------------------------------------------------------------------

struct EvalReport {
    std::size_t count = 0;
    double accuracy = 0.0;      // hard-vote labels
    ConfusionCounts confusion;  // hard-vote labels, REAL positive
    std::size_t tiebreaks = 0;
    std::vector<ScoredSample> scores;  // mean P(real) across voters
    std::optional<double> auc;
    std::optional<RocCurve> roc;
    std::optional<RocPoint> optimal_cutoff;
    std::optional<double> threshold;
    std::optional<double> accuracy_at_threshold;
    std::vector<std::string> warnings;

    /// {accuracy, auc, optimal_cutoff, confusion, accuracy_at_threshold?}
    std::string to_json() const;
};

EvalReport evaluate(const EnsembleModel& model, const std::vector<Sample>& samples,
                    std::optional<double> threshold = std::nullopt);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::optional<double> val_acc;
    std::optional<double> val_auc;

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct FitResult {
    std::vector<EpochLog> log;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
    ParameterStore best_parameters;
    AdamState optimizer;
};

using EpochCallback = std::function<void(const EpochLog&)>;
/// Returns true to end training after the epoch just logged.
using StopCondition = std::function<bool(const EpochLog&)>;

/// Trains `model` in place for cfg.epochs epochs. Each epoch shuffles with
/// (cfg.seed, epoch), takes one Adam step per batch, then scores the
/// validation set. The best epoch by validation AUC (then accuracy, then
/// earliest) is kept in the result; the model holds the final parameters.
/// Training ends early once `stop` returns true.
FitResult fit(EnsembleModel& model, const std::vector<Sample>& train,
              const std::vector<Sample>& val, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {}, const StopCondition& stop = {});

/// JSON array of {epoch, train_loss, val_acc, val_auc}; absent values are null.
std::string training_log_json(const std::vector<EpochLog>& log);

}  // namespace sgf
