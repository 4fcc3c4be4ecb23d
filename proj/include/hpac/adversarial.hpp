#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpac/model.hpp"
#include "hpac/trainer.hpp"

namespace hpac {

enum class AttackMethod { FGSM, PGD };

const char* attack_method_name(AttackMethod method);
AttackMethod attack_method_from_name(const std::string& name);

struct AttackConfig {
    AttackMethod method = AttackMethod::FGSM;
    double eps = 0.3;     // infinity-norm budget
    double alpha = 0.4;   // PGD step size
    int iterations = 20;  // PGD steps
    uint64_t seed = 0;
    double focal_gamma = 2.0;  // attack objective = the training loss
    double focal_alpha = 0.25;
    double threshold = 0.5;

    void validate() const;
};

/// Word embeddings after the attack, value-only, one [k, d] tensor per packet
/// per segment. Coordinates at PAD positions are untouched.
using EmbeddingGrid = std::vector<std::vector<Tensor>>;

/// Single signed-gradient step of size eps in embedding space.
EmbeddingGrid fgsm(const Model& model, const Batch& batch, std::span<const int> labels,
                   double eps, double focal_alpha = 0.25, double focal_gamma = 2.0);

/// Iterated signed steps of size alpha, each projected back onto the
/// infinity-norm eps-ball around the clean embeddings. No random start.
EmbeddingGrid pgd(const Model& model, const Batch& batch, std::span<const int> labels,
                  double eps, double alpha, int iterations, double focal_alpha = 0.25,
                  double focal_gamma = 2.0);

/// Fraction of cleanly-correct samples that the adversarial embeddings flip
/// to a misclassification; nullopt when nothing was cleanly correct.
std::optional<double> severity(const Model& model, const Batch& batch,
                               const EmbeddingGrid& adversarial, std::span<const int> labels,
                               double threshold = 0.5);

/// Per-sample cosine of the flattened unmasked embedding coordinates;
/// nullopt where either side has zero norm.
std::vector<std::optional<double>> cosine_report(const Batch& batch,
                                                 const EmbeddingGrid& original,
                                                 const EmbeddingGrid& perturbed);

struct AttackReport {
    std::string method;
    double eps = 0.0;
    double alpha = 0.0;
    int iterations = 0;
    std::optional<double> severity;  // clean-correct flip rate
    double severity_alt = 0.0;       // 1 - adversarial accuracy
    double clean_accuracy = 0.0;
    double adversarial_accuracy = 0.0;
    std::vector<std::optional<double>> cosine_similarities;
    std::optional<double> cosine_min;
    std::optional<double> cosine_mean;
    std::optional<double> cosine_max;

    std::string to_json() const;
};

/// Runs the configured attack over the whole dataset in batches and
/// aggregates severity, accuracy, and cosine statistics.
AttackReport run_attack(const Model& model, const std::vector<SegmentedPacket>& data,
                        const AttackConfig& config, int batch_size = 40);

}  // namespace hpac
