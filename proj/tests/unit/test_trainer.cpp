#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "hpac/trainer.hpp"
#include "toy.hpp"

using namespace hpac;

namespace {

std::filesystem::path temp_path(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "hpac_trainer_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

ModelConfig tiny_config(int k = 8) {
    ModelConfig cfg;
    cfg.k = k;
    cfg.d = 16;
    cfg.heads = 2;
    cfg.m_max = 16;
    cfg.seed = 5;
    return cfg;
}

TrainConfig quick_schedule() {
    TrainConfig tc;
    tc.epochs = 2;
    tc.steps_per_epoch = 12;
    tc.batch_size = 16;
    tc.seed = 5;
    return tc;
}

Tensor probs_rows(const std::vector<double>& p_true, const std::vector<int>& labels) {
    std::vector<double> rows;
    for (std::size_t i = 0; i < p_true.size(); ++i) {
        const double p1 = labels[i] == 1 ? p_true[i] : 1.0 - p_true[i];
        rows.push_back(1.0 - p1);
        rows.push_back(p1);
    }
    return Tensor::from_data({int(p_true.size()), 2}, std::move(rows));
}

}  // namespace

TEST_CASE("focal loss evaluates the formula") {
    // gamma=0, alpha=0.5 halves the cross-entropy: p_t=0.5 -> 0.5*ln 2.
    const std::vector<int> one_label{1};
    auto loss = focal_loss(probs_rows({0.5}, one_label), one_label, 0.5, 0.0);
    CHECK(loss.item() == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

    // Perfect prediction costs nothing.
    auto zero = focal_loss(probs_rows({1.0}, one_label), one_label, 0.25, 2.0);
    CHECK(zero.item() == 0.0);

    // gamma=2, alpha=0.25, p_t=0.9: 0.25 * 0.01 * (-ln 0.9).
    auto hand = focal_loss(probs_rows({0.9}, one_label), one_label, 0.25, 2.0);
    CHECK(hand.item() == doctest::Approx(0.25 * 0.01 * -std::log(0.9)).epsilon(1e-9));
    CHECK(hand.item() == doctest::Approx(2.634e-4).epsilon(1e-3));

    // alpha_t is 1-alpha for the benign class.
    const std::vector<int> zero_label{0};
    auto benign = focal_loss(probs_rows({0.9}, zero_label), zero_label, 0.25, 2.0);
    CHECK(benign.item() == doctest::Approx(0.75 * 0.01 * -std::log(0.9)).epsilon(1e-9));
}

TEST_CASE("focal loss with gamma 0 and alpha one-half is half cross-entropy") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> prob(0.001, 0.999);
    std::uniform_int_distribution<int> bit(0, 1);
    for (int rep = 0; rep < 200; ++rep) {
        const int B = 8;
        std::vector<double> p_true(B);
        std::vector<int> labels(B);
        double ce = 0.0;
        for (int i = 0; i < B; ++i) {
            p_true[std::size_t(i)] = prob(rng);
            labels[std::size_t(i)] = bit(rng);
            ce += -std::log(p_true[std::size_t(i)]);
        }
        ce /= B;
        auto loss = focal_loss(probs_rows(p_true, labels), labels, 0.5, 0.0);
        CHECK(std::abs(loss.item() - 0.5 * ce) < 1e-12);
    }
}

TEST_CASE("focal loss is monotone decreasing in the true-class probability") {
    const std::vector<int> label{1};
    double previous = std::numeric_limits<double>::infinity();
    for (double p = 0.02; p < 1.0; p += 0.02) {
        const double value = focal_loss(probs_rows({p}, label), label, 0.25, 2.0).item();
        CHECK(value < previous);
        previous = value;
    }
}

TEST_CASE("adam first step moves by roughly lr per coordinate") {
    std::vector<std::pair<std::string, Tensor>> params{
        {"w", Tensor::leaf({3}, {1.0, 1.0, 1.0})}};
    auto state = AdamState::for_params(params);
    params[0].second.node()->grad = {10.0, -7.0, 3.0};  // |g| >> eps
    adam_step(params, state, 1e-3);
    auto v = params[0].second.values();
    CHECK(v[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(1.0 + 1e-3).epsilon(1e-6));
    CHECK(v[2] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam with zero gradients is a fixed point") {
    std::vector<std::pair<std::string, Tensor>> params{
        {"w", Tensor::leaf({2}, {0.3, -0.4})}};
    auto state = AdamState::for_params(params);
    params[0].second.zero_grad();
    adam_step(params, state, 1e-2);
    CHECK(params[0].second.values()[0] == 0.3);
    CHECK(params[0].second.values()[1] == -0.4);
}

TEST_CASE("adam rejects non-finite gradients, naming the parameter") {
    std::vector<std::pair<std::string, Tensor>> params{
        {"word.q_conv", Tensor::leaf({2}, {0.0, 0.0})}};
    auto state = AdamState::for_params(params);
    params[0].second.node()->grad = {std::numeric_limits<double>::quiet_NaN(), 0.0};
    try {
        adam_step(params, state, 1e-3);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("word.q_conv") != std::string::npos);
    }
}

TEST_CASE("one adam step reduces a convex quadratic") {
    for (double lr : {1e-3, 1e-2}) {
        std::vector<std::pair<std::string, Tensor>> params{
            {"x", Tensor::leaf({3}, {0.7, -1.2, 0.4})}};
        auto state = AdamState::for_params(params);
        auto loss_value = [&] {
            double s = 0.0;
            for (double v : params[0].second.values()) s += v * v;
            return s;
        };
        const double before = loss_value();
        params[0].second.zero_grad();
        backward(sum(mul(params[0].second, params[0].second)));
        adam_step(params, state, lr);
        CHECK(loss_value() < before);
    }
}

TEST_CASE("training is deterministic and respects epochs=0") {
    auto corpus = toy::make_corpus(160, 8, 3);
    auto cfg = tiny_config();
    auto tc = quick_schedule();

    auto m0 = init_model(cfg);
    TrainConfig none = tc;
    none.epochs = 0;
    auto empty_history = train(m0, corpus.train, corpus.val, none);
    CHECK(empty_history.epochs.empty());
    auto fresh = init_model(cfg);
    CHECK(m0.byte_embedding.values()[0] == fresh.byte_embedding.values()[0]);

    auto m1 = init_model(cfg);
    auto m2 = init_model(cfg);
    auto h1 = train(m1, corpus.train, corpus.val, tc);
    auto h2 = train(m2, corpus.train, corpus.val, tc);
    REQUIRE(h1.epochs.size() == h2.epochs.size());
    for (std::size_t i = 0; i < h1.epochs.size(); ++i) {
        CHECK(h1.epochs[i].train_loss == h2.epochs[i].train_loss);
        CHECK(h1.epochs[i].validation.acc == h2.epochs[i].validation.acc);
    }
    auto va = m1.head_weights.values();
    auto vb = m2.head_weights.values();
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
}

TEST_CASE("positional ablation keeps both tables at zero through training") {
    auto corpus = toy::make_corpus(120, 8, 13);
    auto cfg = tiny_config();
    cfg.positional = false;
    auto model = init_model(cfg);
    for (double v : model.word_pos.values()) CHECK(v == 0.0);
    for (double v : model.sent_pos.values()) CHECK(v == 0.0);

    TrainConfig tc = quick_schedule();
    tc.epochs = 1;
    train(model, corpus.train, corpus.val, tc);
    for (double v : model.word_pos.values()) CHECK(v == 0.0);
    for (double v : model.sent_pos.values()) CHECK(v == 0.0);
}

TEST_CASE("the returned model scores the best recorded validation F1") {
    auto corpus = toy::make_corpus(160, 8, 11);
    auto cfg = tiny_config();
    auto tc = quick_schedule();
    tc.epochs = 3;
    auto model = init_model(cfg);
    auto history = train(model, corpus.train, corpus.val, tc);
    REQUIRE(!history.epochs.empty());

    double best = -1.0;
    for (const auto& e : history.epochs) best = std::max(best, e.validation.f1.value_or(-1.0));
    const auto report = evaluate(model, corpus.val, tc.threshold, tc.batch_size);
    CHECK(report.f1.value_or(-1.0) == best);
    CHECK(history.best_epoch >= 1);
}

TEST_CASE("history serializes one JSON object per epoch") {
    TrainHistory history;
    EpochStats e;
    e.epoch = 1;
    e.train_loss = 0.25;
    e.validation = compute_metrics({5, 5, 0, 0});
    history.epochs.push_back(e);
    const auto text = history.to_jsonl();
    CHECK(text.find("\"epoch\":1") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("checkpoint round-trip reproduces forward bit-for-bit") {
    auto corpus = toy::make_corpus(120, 8, 7);
    auto cfg = tiny_config();
    auto model = init_model(cfg);
    TrainConfig tc = quick_schedule();
    tc.epochs = 1;
    train(model, corpus.train, corpus.val, tc);

    const auto path = temp_path("roundtrip.hpac").string();
    save_checkpoint(model, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.config == model.config);

    auto batch = batch_segments({corpus.test.begin(), corpus.test.begin() + 8}, cfg.m_max);
    auto a = forward(model, batch).probs;
    auto b = forward(loaded, batch).probs;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("checkpoint loader rejects corruption and foreign files") {
    const auto path = temp_path("valid.hpac").string();
    auto model = init_model(tiny_config());
    save_checkpoint(model, path);

    const auto truncated = temp_path("truncated.hpac").string();
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), long(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(truncated), CheckpointError);

    const auto garbage = temp_path("garbage.hpac").string();
    {
        std::ofstream out(garbage, std::ios::binary);
        out << "definitely not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(garbage), CheckpointError);
}

TEST_CASE("checkpoint config guard names the differing field") {
    const auto path = temp_path("guard.hpac").string();
    auto model = init_model(tiny_config());
    save_checkpoint(model, path);

    ModelConfig other = tiny_config();
    other.d = 32;
    try {
        load_checkpoint_expect(path, other);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("'d'") != std::string::npos);
    }
    CHECK_NOTHROW(load_checkpoint_expect(path, tiny_config()));
}
