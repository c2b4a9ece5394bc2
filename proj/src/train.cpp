#include "sgf/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace sgf {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    require(std::isfinite(lr) && lr > 0.0, ErrorCode::InvalidArgument, "config: lr must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0, ErrorCode::InvalidArgument, "config: beta1 must be in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, ErrorCode::InvalidArgument, "config: beta2 must be in [0, 1)");
    require(epsilon > 0.0, ErrorCode::InvalidArgument, "config: epsilon must be positive");
    require(decay >= 0.0, ErrorCode::InvalidArgument, "config: decay must be non-negative");
    require(epochs >= 1, ErrorCode::InvalidArgument, "config: epochs must be at least 1");
    require(batch_size >= 1, ErrorCode::InvalidArgument, "config: batch_size must be at least 1");
    require(dtype == "f32", ErrorCode::InvalidArgument, "config: only dtype f32 is supported");
}

std::string TrainConfig::to_json() const {
    const json obj = {{"lr", lr},         {"beta1", beta1},   {"beta2", beta2},
                      {"epsilon", epsilon}, {"decay", decay}, {"epochs", epochs},
                      {"batch_size", batch_size}, {"seed", seed}, {"dtype", dtype}};
    return obj.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text, const TrainConfig& base) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::MalformedData, std::string("config is not valid JSON: ") + e.what());
    }
    require(obj.is_object(), ErrorCode::MalformedData, "config must be a JSON object");
    TrainConfig cfg = base;
    try {
        for (const auto& [key, value] : obj.items()) {
            if (key == "lr") cfg.lr = value.get<double>();
            else if (key == "beta1") cfg.beta1 = value.get<double>();
            else if (key == "beta2") cfg.beta2 = value.get<double>();
            else if (key == "epsilon") cfg.epsilon = value.get<double>();
            else if (key == "decay") cfg.decay = value.get<double>();
            else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
            else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "dtype") cfg.dtype = value.get<std::string>();
            else fail(ErrorCode::MalformedData, "config: unknown field '" + key + "'");
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedData, std::string("config: wrong value type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::from_json(std::string_view text) { return from_json(text, TrainConfig{}); }

// ---------------------------------------------------------------------------

template <class T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 double lr_t, double beta1, double beta2, double epsilon, std::uint64_t t_after) {
    require(grad.size() == param.size() && m.size() == param.size() && v.size() == param.size(),
            ErrorCode::ShapeMismatch, "adam_update: buffer sizes differ");
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_after));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_after));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double m_hat = mi / c1;
        const double v_hat = vi / c2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) - lr_t * m_hat / (std::sqrt(v_hat) + epsilon));
    }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                 std::span<float>, double, double, double, double, std::uint64_t);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, double, double, double, double, std::uint64_t);

void adam_step(ParameterStore& params, const std::map<std::string, TensorF>& grads,
               AdamState& state, const TrainConfig& cfg) {
    for (const auto& [name, g] : grads)
        require(params.contains(name), ErrorCode::ShapeMismatch,
                "adam_step: gradient for unknown parameter " + name);
    const double lr_t = adam_learning_rate(cfg, state.t);
    const std::uint64_t t_after = state.t + 1;
    for (const auto& [name, value] : params.values()) {
        if (!params.trainable(name)) continue;
        const auto it = grads.find(name);
        require(it != grads.end(), ErrorCode::ShapeMismatch, "adam_step: no gradient for " + name);
        require(it->second.shape() == value.shape(), ErrorCode::ShapeMismatch,
                "adam_step: gradient shape " + to_string(it->second.shape()) + " for " + name +
                    " of shape " + to_string(value.shape()));
        auto [slot, inserted] = state.moments.try_emplace(name);
        if (inserted) slot->second = {TensorF(value.shape()), TensorF(value.shape())};
        TensorF& p = params.at(name);
        adam_update<float>(p.data(), it->second.data(), slot->second.m.data(), slot->second.v.data(),
                           lr_t, cfg.beta1, cfg.beta2, cfg.epsilon, t_after);
    }
    state.t = t_after;
}

VarId sum_head_losses(Tape<float>& tape, std::span<const VarId> heads, std::span<const int> labels) {
    require(!heads.empty(), ErrorCode::InvalidArgument, "sum_head_losses: no heads");
    VarId total = cross_entropy(tape, heads[0], labels);
    for (std::size_t h = 1; h < heads.size(); ++h) total = add(tape, total, cross_entropy(tape, heads[h], labels));
    return total;
}

LossResult ensemble_loss(EnsembleModel& model, Tape<float>& tape, VarId images,
                         std::span<const int> labels, Mode mode, bool track_grad) {
    require(!labels.empty(), ErrorCode::InvalidArgument, "ensemble_loss: empty batch");
    auto fwd = model.forward(tape, images, mode, track_grad);
    const VarId loss = sum_head_losses(tape, fwd.heads, labels);
    return {loss, std::move(fwd)};
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kEvalChunk = 64;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

EvalReport evaluate(const EnsembleModel& model, const std::vector<Sample>& samples,
                    std::optional<double> threshold) {
    require(!samples.empty(), ErrorCode::InvalidArgument, "evaluate: empty dataset");
    EvalReport report;
    report.count = samples.size();
    report.threshold = threshold;
    std::vector<std::size_t> chunk;
    for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
        chunk.clear();
        for (std::size_t i = start; i < std::min(start + kEvalChunk, samples.size()); ++i) chunk.push_back(i);
        const auto votes = model.predict(stack_images(samples, chunk));
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            const int label = samples[chunk[k]].label;
            const bool predicted_real = votes[k].label == Label::Real;
            if (label == 1)
                ++(predicted_real ? report.confusion.tp : report.confusion.fn);
            else
                ++(predicted_real ? report.confusion.fp : report.confusion.tn);
            report.tiebreaks += votes[k].tiebreak_used;
            report.scores.push_back({votes[k].mean_prob_real(), label});
        }
    }
    report.accuracy = report.confusion.accuracy();
    if (has_both_classes(report.scores)) {
        RocCurve roc = roc_curve(report.scores);
        report.auc = auc_trapezoid(roc);
        report.optimal_cutoff = optimal_cutoff(roc);
        report.roc = std::move(roc);
    } else {
        report.warnings.push_back("only one class present; AUC and ROC are undefined");
    }
    if (threshold) report.accuracy_at_threshold = confusion(report.scores, *threshold).accuracy();
    return report;
}

std::string EvalReport::to_json() const {
    json obj;
    obj["count"] = count;
    obj["accuracy"] = accuracy;
    obj["auc"] = optional_number(auc);
    if (optimal_cutoff)
        obj["optimal_cutoff"] = {{"threshold", optimal_cutoff->threshold},
                                 {"fpr", optimal_cutoff->fpr},
                                 {"tpr", optimal_cutoff->tpr}};
    else
        obj["optimal_cutoff"] = nullptr;
    obj["confusion"] = {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn}, {"fn", confusion.fn}};
    obj["tiebreaks"] = tiebreaks;
    if (threshold) {
        obj["threshold"] = *threshold;
        obj["accuracy_at_threshold"] = *accuracy_at_threshold;
    }
    obj["warnings"] = warnings;
    return obj.dump(2);
}

FitResult fit(EnsembleModel& model, const std::vector<Sample>& train,
              const std::vector<Sample>& val, const TrainConfig& cfg, const EpochCallback& on_epoch,
              const StopCondition& stop) {
    cfg.validate();
    require(!train.empty(), ErrorCode::InvalidArgument, "fit: empty training set");
    FitResult result;
    result.best_parameters = model.parameters();
    // Ranking key for the best epoch: (auc, accuracy), absent values lowest.
    std::pair<double, double> best_key{-1.0, -1.0};

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (const auto& batch : batch_iter(train.size(), cfg.batch_size, cfg.seed, epoch)) {
            const std::vector<int> labels = gather_labels(train, batch);
            Tape<float> tape;
            const VarId images = tape.constant(stack_images(train, batch));
            const auto step = ensemble_loss(model, tape, images, labels, Mode::Train, true);
            const auto grads = tape.backward(step.loss);
            std::map<std::string, TensorF> named;
            for (const auto& [name, id] : step.forward.parameters)
                if (model.parameters().trainable(name)) named.emplace(name, grads[id]);
            adam_step(model.parameters(), named, result.optimizer, cfg);
            loss_sum += static_cast<double>(tape.value(step.loss)[0]) * static_cast<double>(batch.size());
            ++result.steps;
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) {
            const EvalReport r = evaluate(model, val);
            entry.val_acc = r.accuracy;
            entry.val_auc = r.auc;
        }
        const std::pair<double, double> key{entry.val_auc.value_or(-1.0), entry.val_acc.value_or(-1.0)};
        if (result.best_epoch == 0 || key > best_key) {
            best_key = key;
            result.best_epoch = epoch;
            result.best_parameters = model.parameters();
        }
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
        if (stop && stop(entry)) break;
    }
    return result;
}

std::string training_log_json(const std::vector<EpochLog>& log) {
    json arr = json::array();
    for (const auto& e : log)
        arr.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_acc", optional_number(e.val_acc)},
                       {"val_auc", optional_number(e.val_auc)}});
    return arr.dump(2);
}

}  // namespace sgf
