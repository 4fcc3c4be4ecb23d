#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace hpac {

struct ConfusionCounts {
    uint64_t tp = 0;
    uint64_t tn = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;

    uint64_t total() const { return tp + tn + fp + fn; }
};

/// The five reported metrics. A nullopt means the denominator was zero;
/// NaN never appears.
struct MetricsReport {
    std::optional<double> acc;
    std::optional<double> dr;          // detection rate, TP/(TP+FN)
    std::optional<double> fpr_paper;   // FP/(TP+TN)
    std::optional<double> fpr_standard;  // FP/(FP+TN)
    std::optional<double> precision;
    std::optional<double> f1;

    std::string to_json() const;
};

/// Positive class is malicious (= 1). Throws ContractError on length mismatch
/// or empty input.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

MetricsReport compute_metrics(const ConfusionCounts& counts);

}  // namespace hpac
