#include "hpac/metrics.hpp"

#include <json.hpp>

#include "hpac/error.hpp"

namespace hpac {

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw ContractError("confusion: " + std::to_string(predictions.size()) +
                            " predictions vs " + std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw ContractError("confusion: empty input");
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool pred = predictions[i] != 0;
        const bool truth = labels[i] != 0;
        if (pred && truth) ++c.tp;
        else if (!pred && !truth) ++c.tn;
        else if (pred) ++c.fp;
        else ++c.fn;
    }
    return c;
}

MetricsReport compute_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw ContractError("compute_metrics: zero samples");
    auto ratio = [](uint64_t num, uint64_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return double(num) / double(den);
    };
    MetricsReport r;
    r.acc = ratio(c.tp + c.tn, c.total());
    r.dr = ratio(c.tp, c.tp + c.fn);
    r.fpr_paper = ratio(c.fp, c.tp + c.tn);
    r.fpr_standard = ratio(c.fp, c.fp + c.tn);
    r.precision = ratio(c.tp, c.tp + c.fp);
    // Harmonic mean of precision and DR; defined exactly when tp > 0 (either
    // component undefined, or both zero, otherwise). The integer form keeps
    // the division exact for oracle comparison.
    r.f1 = c.tp > 0 ? ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn) : std::nullopt;
    return r;
}

std::string MetricsReport::to_json() const {
    nlohmann::json obj;
    nlohmann::json undefined = nlohmann::json::array();
    auto put = [&](const char* name, const std::optional<double>& v) {
        if (v) obj[name] = *v;
        else {
            obj[name] = nullptr;
            undefined.push_back(name);
        }
    };
    put("acc", acc);
    put("dr", dr);
    put("fpr_paper", fpr_paper);
    put("fpr_standard", fpr_standard);
    put("precision", precision);
    put("f1", f1);
    obj["undefined"] = std::move(undefined);
    return obj.dump();
}

}  // namespace hpac
