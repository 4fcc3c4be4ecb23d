#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hpac/metrics.hpp"
#include "hpac/model.hpp"

namespace hpac {

struct TrainConfig {
    int epochs = 40;
    int steps_per_epoch = 150;
    int batch_size = 40;
    double lr = 1e-3;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    uint64_t seed = 0;
    std::string checkpoint_path;  // empty = keep best in memory only
    double threshold = 0.5;       // decision threshold for validation metrics

    void validate() const;
};

struct AdamState {
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::vector<Slot> slots;
    uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const std::vector<std::pair<std::string, Tensor>>& params);
};

/// Mean over the batch of -alpha_t (1 - p_t)^gamma log(p_t), where p_t is the
/// probability assigned to the true class and alpha_t is alpha for class 1,
/// (1 - alpha) for class 0. log is clamped at 1e-12.
Tensor focal_loss(const Tensor& probs, std::span<const int> labels, double alpha, double gamma);

/// One bias-corrected Adam update over the given parameters, reading their
/// accumulated gradients. Non-finite gradients abort with a TrainingError
/// naming the parameter.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr);

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    MetricsReport validation;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // epoch number with the highest validation F1

    std::string to_jsonl() const;
};

/// Focal-loss training with Adam. Batches come from seeded shuffling each
/// epoch, cycling when the data is smaller than steps x batch. After every
/// epoch the model is scored on val_data; the parameters with the highest
/// validation F1 are restored into `model` at the end (and written to
/// config.checkpoint_path when set).
TrainHistory train(Model& model, const std::vector<SegmentedPacket>& train_data,
                   const std::vector<SegmentedPacket>& val_data, const TrainConfig& config);

MetricsReport evaluate(const Model& model, const std::vector<SegmentedPacket>& data,
                       double threshold = 0.5, int batch_size = 40);

/// Binary checkpoint: "HPAC" magic, u32 version, JSON config block, then a
/// name/shape index with little-endian f64 parameter data.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
/// Loads and additionally asserts the stored config matches, naming the first
/// differing field.
Model load_checkpoint_expect(const std::string& path, const ModelConfig& expected);

}  // namespace hpac
