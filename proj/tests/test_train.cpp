#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "sgf/train.hpp"

using namespace sgf;

namespace {

/// Plain scalar Adam, written independently of the library.
struct ScalarAdam {
    double lr, b1, b2, eps, decay;
    double m = 0, v = 0;
    int t = 0;
    double step(double p, double g) {
        const double lr_t = lr / (1.0 + decay * t);
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        return p - lr_t * mh / (std::sqrt(vh) + eps);
    }
};

std::vector<Sample> synthetic(std::size_t per_class, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.count_per_class = per_class;
    cfg.seed = seed;
    cfg.val_fraction = 0.0;
    return to_samples(synthesize(cfg), Split::Train);
}

}  // namespace

TEST_CASE("config defaults, validation and JSON round trip") {
    TrainConfig cfg;
    CHECK(cfg.lr == 1e-3);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.999);
    CHECK(cfg.decay == 1e-6);
    CHECK(cfg.epochs == 200);
    CHECK(cfg.batch_size == 32);
    cfg.seed = 77;
    cfg.lr = 0.0123;
    CHECK(TrainConfig::from_json(cfg.to_json()) == cfg);
    const auto partial = TrainConfig::from_json(R"({"epochs": 3})");
    CHECK(partial.epochs == 3);
    CHECK(partial.lr == 1e-3);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"momentum": 0.9})"), Error);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"lr": -1})"), Error);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"beta1": 1.0})"), Error);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"batch_size": 0})"), Error);
    CHECK_THROWS_AS(TrainConfig::from_json("not json"), Error);
}

TEST_CASE("adam first step on a scalar matches the reference within 1e-12") {
    TrainConfig cfg;
    double p = 1.0, m = 0.0, v = 0.0;
    adam_update<double>(std::span<double>(&p, 1), std::span<const double>(std::array<double, 1>{0.5}), std::span<double>(&m, 1),
                        std::span<double>(&v, 1), adam_learning_rate(cfg, 0), cfg.beta1, cfg.beta2, cfg.epsilon, 1);
    ScalarAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.decay};
    CHECK(std::abs(p - ref.step(1.0, 0.5)) <= 1e-12);
    CHECK(p - 1.0 == doctest::Approx(-cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam with decay 0 tracks textbook Adam for 100 steps") {
    TrainConfig cfg;
    cfg.decay = 0.0;
    Rng rng(1);
    double p = 0.3, m = 0.0, v = 0.0, ref_p = 0.3;
    ScalarAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon, 0.0};
    for (std::uint64_t t = 0; t < 100; ++t) {
        const double g = rng.uniform(-1.0, 1.0);
        const std::array<double, 1> grad{g};
        adam_update<double>(std::span<double>(&p, 1), std::span<const double>(grad), std::span<double>(&m, 1),
                            std::span<double>(&v, 1), adam_learning_rate(cfg, t), cfg.beta1, cfg.beta2, cfg.epsilon,
                            t + 1);
        ref_p = ref.step(ref_p, g);
        REQUIRE(std::abs(p - ref_p) <= 1e-10);
    }
}

TEST_CASE("adam_step on a parameter store") {
    ParameterStore store;
    store.add("w", TensorF(Shape{3}, std::vector<float>{1, 2, 3}), true);
    store.add("frozen", TensorF(Shape{2}, 5.0f), false);
    AdamState state;
    TrainConfig cfg;
    std::map<std::string, TensorF> grads{{"w", TensorF(Shape{3}, 0.0f)}};
    adam_step(store, grads, state, cfg);
    CHECK(state.t == 1);
    CHECK(store.at("w")[1] == 2.0f);
    grads["w"] = TensorF(Shape{3}, std::vector<float>{0.5f, -0.5f, 0.0f});
    adam_step(store, grads, state, cfg);
    CHECK(state.t == 2);
    CHECK(store.at("w")[0] < 1.0f);
    CHECK(store.at("w")[1] > 2.0f);
    CHECK(store.at("frozen")[0] == 5.0f);
    CHECK(adam_learning_rate(cfg, 1000) == doctest::Approx(1e-3 / (1 + 1e-3)));

    grads["w"] = TensorF(Shape{4});
    CHECK_THROWS_AS(adam_step(store, grads, state, cfg), Error);
    CHECK_THROWS_AS(adam_step(store, {}, state, cfg), Error);
    CHECK_THROWS_AS(adam_step(store, {{"w", TensorF(Shape{3})}, {"nope", TensorF(Shape{1})}}, state, cfg), Error);
}

TEST_CASE("ensemble loss: single head is plain CE, identical heads add up") {
    Tape<float> tape;
    const int labels[] = {1, 0};
    const VarId p = tape.constant(TensorF(Shape{2, 2}, std::vector<float>{0.3f, 0.7f, 0.6f, 0.4f}));
    const double ce = tape.value(cross_entropy(tape, p, std::span<const int>(labels)))[0];
    CHECK(ce == doctest::Approx(-(std::log(0.7) + std::log(0.6)) / 2).epsilon(1e-6));
    const std::vector<VarId> one{p}, five(5, p);
    CHECK(tape.value(sum_head_losses(tape, one, labels))[0] == doctest::Approx(ce));
    CHECK(tape.value(sum_head_losses(tape, five, labels))[0] == doctest::Approx(5 * ce).epsilon(1e-6));
}

TEST_CASE("ensemble loss matches hand-summed per-head losses") {
    Rng rng(2);
    EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("v5"), Profile::desk(), rng);
    const auto samples = synthetic(3, 4);
    const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
    const auto labels = gather_labels(samples, idx);
    Tape<float> tape;
    const auto r = ensemble_loss(model, tape, tape.constant(stack_images(samples, idx)), labels, Mode::Infer, false);
    double hand = 0.0;
    for (const auto head : r.forward.heads) {
        const auto probs = tape.value(head);
        double head_loss = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i)
            head_loss -= std::log(std::max(static_cast<double>(probs[i * 2 + labels[i]]), 1e-12));
        hand += head_loss / static_cast<double>(labels.size());
    }
    CHECK(std::abs(tape.value(r.loss)[0] - hand) <= 1e-7 * std::max(1.0, hand));
}

TEST_CASE("fit takes one step per batch and rejects empty data") {
    Rng rng(3);
    EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("ori"), Profile::desk(), rng);
    const auto train = synthetic(32, 5);
    REQUIRE(train.size() == 64);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    const auto result = fit(model, train, {}, cfg);
    CHECK(result.steps == 2);
    CHECK(result.optimizer.t == 2);
    REQUIRE(result.log.size() == 1);
    CHECK_FALSE(result.log[0].val_auc.has_value());
    CHECK_THROWS_AS(fit(model, {}, {}, cfg), Error);
}

TEST_CASE("fit stops once the stop condition holds") {
    Rng rng(5);
    EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("ori"), Profile::desk(), rng);
    const auto train = synthetic(8, 7);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    std::size_t seen = 0;
    const auto result = fit(model, train, {}, cfg, [&](const EpochLog&) { ++seen; },
                            [](const EpochLog& e) { return e.epoch == 2; });
    CHECK(result.log.size() == 2);
    CHECK(seen == 2);
    CHECK(result.steps == 4);
}

TEST_CASE("fit is deterministic for a given seed") {
    const auto train = synthetic(10, 6);
    auto run = [&] {
        Rng rng(4);
        EnsembleModel model = build_model(Architecture::Proposed, parse_scheme("v5"), Profile::desk(), rng);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.seed = 9;
        const auto val = std::vector<Sample>(train.begin(), train.begin() + 8);
        auto r = fit(model, train, val, cfg);
        return std::make_pair(r.log, model.parameters());
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(training_log_json(a.first) == training_log_json(b.first));
}

TEST_CASE("zero learning rate leaves the loss on a fixed batch unchanged") {
    Rng rng(5);
    EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("v5"), Profile::desk(), rng);
    const auto samples = synthetic(4, 7);
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto labels = gather_labels(samples, idx);
    const TensorF images = stack_images(samples, idx);
    AdamState state;
    auto step_with_lr = [&](double lr) {
        Tape<float> tape;
        const auto r = ensemble_loss(model, tape, tape.constant(images), labels, Mode::Train, true);
        const auto grads = tape.backward(r.loss);
        std::map<std::string, TensorF> named;
        for (const auto& [name, id] : r.forward.parameters)
            if (model.parameters().trainable(name)) named.emplace(name, grads[id]);
        for (const auto& [name, g] : named) {
            auto [slot, fresh] = state.moments.try_emplace(name);
            if (fresh) slot->second = {TensorF(g.shape()), TensorF(g.shape())};
            TensorF& p = model.parameters().at(name);
            adam_update<float>(p.data(), g.data(), slot->second.m.data(), slot->second.v.data(), lr, 0.9, 0.999,
                               1e-8, state.t + 1);
        }
        ++state.t;
        return static_cast<double>(tape.value(r.loss)[0]);
    };
    const double first = step_with_lr(0.0);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(step_with_lr(0.0) - first) <= 1e-12);

    // A tiny positive rate never increases the loss beyond float noise.
    double prev = step_with_lr(1e-6);
    for (int i = 0; i < 10; ++i) {
        const double cur = step_with_lr(1e-6);
        CHECK(cur <= prev + 1e-6);
        prev = cur;
    }
}

TEST_CASE("evaluate reports hard-vote accuracy, ROC metrics and threshold accuracy") {
    Rng rng(6);
    const EnsembleModel model = build_model(Architecture::MesonetSeg, parse_scheme("v5"), Profile::desk(), rng);
    const auto samples = synthetic(5, 8);
    const auto report = evaluate(model, samples, 0.5);
    CHECK(report.count == 10);
    CHECK(report.confusion.total() == 10);
    CHECK(report.scores.size() == 10);
    REQUIRE(report.auc.has_value());
    CHECK((*report.auc >= 0.0 && *report.auc <= 1.0));
    CHECK(*report.auc == doctest::Approx(auc_pair_count(report.scores)).epsilon(1e-9));
    CHECK(report.optimal_cutoff.has_value());
    CHECK(report.accuracy_at_threshold.has_value());
    const auto votes = model.predict(stack_images(samples, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 10; ++i) correct += (votes[i].label == Label::Real) == (samples[i].label == 1);
    CHECK(report.accuracy == doctest::Approx(correct / 10.0));
    CHECK(report.to_json().find("\"accuracy_at_threshold\"") != std::string::npos);

    std::vector<Sample> reals;
    for (const auto& s : samples)
        if (s.label == 1) reals.push_back(s);
    const auto degenerate = evaluate(model, reals);
    CHECK_FALSE(degenerate.auc.has_value());
    CHECK_FALSE(degenerate.warnings.empty());
    CHECK(degenerate.to_json().find("\"auc\": null") != std::string::npos);
    CHECK_THROWS_AS(evaluate(model, {}), Error);
}
