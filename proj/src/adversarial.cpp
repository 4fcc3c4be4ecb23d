#include "hpac/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace hpac {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Projects `moved` onto [origin - eps, origin + eps] such that the REALIZED
// double deviation (moved - origin) stays within eps; a plain origin + eps can
// round one ulp outside the ball.
double clamp_to_ball(double moved, double origin, double eps) {
    double dev = moved - origin;
    if (dev > eps) {
        moved = origin + eps;
        while (moved - origin > eps) moved = std::nextafter(moved, origin);
    } else if (dev < -eps) {
        moved = origin - eps;
        while (moved - origin < -eps) moved = std::nextafter(moved, origin);
    }
    return moved;
}

void check_model_finite(const Model& model) {
    for (const auto& [name, t] : model.parameters())
        for (double v : t.values())
            if (!std::isfinite(v))
                throw ContractError("model parameter '" + name +
                                    "' is not finite; attack requires a trained model");
}

// Clean post-lookup word embeddings as plain value grids.
EmbeddingGrid clean_embeddings(const Model& model, const Batch& batch) {
    FrozenParams pause(model);
    auto result = forward(model, batch);
    return std::move(result.word_embeddings);
}

EmbeddingGrid to_leaves(const EmbeddingGrid& values) {
    EmbeddingGrid leaves(values.size());
    for (std::size_t b = 0; b < values.size(); ++b)
        for (const auto& e : values[b])
            leaves[b].push_back(Tensor::leaf(
                e.shape(), std::vector<double>(e.values().begin(), e.values().end())));
    return leaves;
}

// Iterated signed ascent on the attack loss, projected onto the eps-ball and
// restricted to unmasked coordinates.
EmbeddingGrid signed_ascent(const Model& model, const Batch& batch, std::span<const int> labels,
                            double eps, double step, int iterations, double focal_alpha,
                            double focal_gamma) {
    if (eps < 0.0) throw ConfigError("attack eps must be non-negative");
    if (step <= 0.0) throw ConfigError("attack step size must be positive");
    if (iterations < 1) throw ConfigError("attack needs at least one iteration");
    check_model_finite(model);
    FrozenParams pause(model);

    const EmbeddingGrid origin = clean_embeddings(model, batch);
    EmbeddingGrid current = to_leaves(origin);
    const int k = batch.k;
    const int d = model.config.d;

    for (int iter = 0; iter < iterations; ++iter) {
        auto result = forward_with_embeddings(model, batch, current);
        Tensor loss = focal_loss(result.probs, labels, focal_alpha, focal_gamma);
        backward(loss);

        EmbeddingGrid next(current.size());
        for (std::size_t b = 0; b < current.size(); ++b) {
            const uint8_t* tok_mask = batch.packet_token_mask(int(b));
            for (std::size_t s = 0; s < current[b].size(); ++s) {
                const auto& e0 = origin[b][s].values();
                const auto& e = current[b][s].values();
                const auto g = current[b][s].grad();
                std::vector<double> moved(e.begin(), e.end());
                for (int r = 0; r < k; ++r) {
                    if (!tok_mask[s * std::size_t(k) + std::size_t(r)]) continue;
                    for (int c = 0; c < d; ++c) {
                        const std::size_t i = std::size_t(r) * std::size_t(d) + std::size_t(c);
                        const double g_i = i < g.size() ? g[i] : 0.0;
                        moved[i] = clamp_to_ball(e[i] + step * sign(g_i), e0[i], eps);
                    }
                }
                next[b].push_back(Tensor::leaf({k, d}, std::move(moved)));
            }
        }
        current = std::move(next);
    }

    EmbeddingGrid out(current.size());
    for (std::size_t b = 0; b < current.size(); ++b)
        for (const auto& e : current[b])
            out[b].push_back(Tensor::from_data(
                e.shape(), std::vector<double>(e.values().begin(), e.values().end())));
    return out;
}

std::vector<int> checked_labels(const Batch& batch, std::span<const int> labels) {
    if (int(labels.size()) != batch.batch_size)
        throw ContractError("attack: " + std::to_string(labels.size()) + " labels for batch of " +
                            std::to_string(batch.batch_size));
    for (int l : labels)
        if (l != 0 && l != 1) throw ContractError("attack: labels must be 0 or 1");
    return {labels.begin(), labels.end()};
}

}  // namespace

const char* attack_method_name(AttackMethod method) {
    return method == AttackMethod::FGSM ? "fgsm" : "pgd";
}

AttackMethod attack_method_from_name(const std::string& name) {
    if (name == "fgsm") return AttackMethod::FGSM;
    if (name == "pgd") return AttackMethod::PGD;
    throw ConfigError("unknown attack method '" + name + "' (expected fgsm or pgd)");
}

void AttackConfig::validate() const {
    if (eps < 0) throw ConfigError("attack eps must be non-negative");
    if (alpha <= 0) throw ConfigError("attack alpha must be positive");
    if (iterations < 1) throw ConfigError("attack iterations must be at least 1");
    if (focal_gamma < 0) throw ConfigError("focal gamma must be non-negative");
    if (focal_alpha <= 0 || focal_alpha >= 1) throw ConfigError("focal alpha must lie in (0,1)");
}

EmbeddingGrid fgsm(const Model& model, const Batch& batch, std::span<const int> labels,
                   double eps, double focal_alpha, double focal_gamma) {
    auto l = checked_labels(batch, labels);
    // eps = 0 still runs one iteration; the zero-width clamp keeps e' == e0.
    return signed_ascent(model, batch, l, eps, eps > 0.0 ? eps : 1.0, 1, focal_alpha,
                         focal_gamma);
}

EmbeddingGrid pgd(const Model& model, const Batch& batch, std::span<const int> labels,
                  double eps, double alpha, int iterations, double focal_alpha,
                  double focal_gamma) {
    auto l = checked_labels(batch, labels);
    return signed_ascent(model, batch, l, eps, alpha, iterations, focal_alpha, focal_gamma);
}

std::optional<double> severity(const Model& model, const Batch& batch,
                               const EmbeddingGrid& adversarial, std::span<const int> labels,
                               double threshold) {
    auto l = checked_labels(batch, labels);
    FrozenParams pause(model);
    const auto clean_preds = predict(forward(model, batch).probs, threshold);
    const auto adv_preds =
        predict(forward_with_embeddings(model, batch, adversarial).probs, threshold);
    std::size_t correct = 0, flipped = 0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (clean_preds[i] != l[i]) continue;
        ++correct;
        if (adv_preds[i] != l[i]) ++flipped;
    }
    if (correct == 0) return std::nullopt;
    return double(flipped) / double(correct);
}

std::vector<std::optional<double>> cosine_report(const Batch& batch,
                                                 const EmbeddingGrid& original,
                                                 const EmbeddingGrid& perturbed) {
    if (original.size() != perturbed.size())
        throw ContractError("cosine_report: grid sizes differ");
    std::vector<std::optional<double>> out;
    out.reserve(original.size());
    const int k = batch.k;
    for (std::size_t b = 0; b < original.size(); ++b) {
        if (original[b].size() != perturbed[b].size())
            throw ContractError("cosine_report: segment counts differ");
        const uint8_t* tok_mask = batch.packet_token_mask(int(b));
        double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
        bool identical = true;
        for (std::size_t s = 0; s < original[b].size(); ++s) {
            const auto& a = original[b][s];
            const auto& p = perturbed[b][s];
            if (a.shape() != p.shape())
                throw ContractError("cosine_report: embedding shapes differ, " +
                                    shape_str(a.shape()) + " vs " + shape_str(p.shape()));
            const int d = a.dim(1);
            const double* pa = a.values().data();
            const double* pb = p.values().data();
            for (int r = 0; r < k; ++r) {
                if (!tok_mask[s * std::size_t(k) + std::size_t(r)]) continue;
                for (int c = 0; c < d; ++c) {
                    const std::size_t i = std::size_t(r) * std::size_t(d) + std::size_t(c);
                    dot += pa[i] * pb[i];
                    norm_a += pa[i] * pa[i];
                    norm_b += pb[i] * pb[i];
                    identical = identical && pa[i] == pb[i];
                }
            }
        }
        if (norm_a == 0.0 || norm_b == 0.0) out.push_back(std::nullopt);
        else if (identical) out.push_back(1.0);
        else out.push_back(dot / std::sqrt(norm_a * norm_b));
    }
    return out;
}

std::string AttackReport::to_json() const {
    nlohmann::json obj{{"method", method},
                       {"eps", eps},
                       {"alpha", alpha},
                       {"iterations", iterations},
                       {"severity_alt", severity_alt},
                       {"clean_accuracy", clean_accuracy},
                       {"adversarial_accuracy", adversarial_accuracy}};
    auto put = [&](const char* name, const std::optional<double>& v) {
        if (v) obj[name] = *v;
        else obj[name] = nullptr;
    };
    put("severity", severity);
    put("cosine_min", cosine_min);
    put("cosine_mean", cosine_mean);
    put("cosine_max", cosine_max);
    return obj.dump();
}

AttackReport run_attack(const Model& model, const std::vector<SegmentedPacket>& data,
                        const AttackConfig& config, int batch_size) {
    config.validate();
    if (data.empty()) throw ConfigError("attack: empty dataset");

    AttackReport report;
    report.method = attack_method_name(config.method);
    report.eps = config.eps;
    report.alpha = config.alpha;
    report.iterations = config.method == AttackMethod::PGD ? config.iterations : 1;

    std::size_t clean_correct = 0, adv_correct = 0, flipped = 0, total = 0;
    for (std::size_t start = 0; start < data.size(); start += std::size_t(batch_size)) {
        const std::size_t stop = std::min(data.size(), start + std::size_t(batch_size));
        std::vector<SegmentedPacket> chunk(data.begin() + long(start), data.begin() + long(stop));
        Batch batch = batch_segments(chunk, model.config.m_max);
        std::vector<int> labels = batch.labels;
        for (int l : labels)
            if (l != 0 && l != 1) throw ConfigError("attack data must carry 0/1 labels");

        EmbeddingGrid adv;
        if (config.method == AttackMethod::FGSM)
            adv = fgsm(model, batch, labels, config.eps, config.focal_alpha, config.focal_gamma);
        else
            adv = pgd(model, batch, labels, config.eps, config.alpha, config.iterations,
                      config.focal_alpha, config.focal_gamma);

        FrozenParams pause(model);
        const EmbeddingGrid origin = clean_embeddings(model, batch);
        const auto clean_preds = predict(forward(model, batch).probs, config.threshold);
        const auto adv_preds =
            predict(forward_with_embeddings(model, batch, adv).probs, config.threshold);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            ++total;
            const bool clean_ok = clean_preds[i] == labels[i];
            const bool adv_ok = adv_preds[i] == labels[i];
            clean_correct += clean_ok;
            adv_correct += adv_ok;
            flipped += clean_ok && !adv_ok;
        }
        auto cosines = cosine_report(batch, origin, adv);
        report.cosine_similarities.insert(report.cosine_similarities.end(), cosines.begin(),
                                          cosines.end());
    }

    report.clean_accuracy = double(clean_correct) / double(total);
    report.adversarial_accuracy = double(adv_correct) / double(total);
    report.severity_alt = 1.0 - report.adversarial_accuracy;
    if (clean_correct > 0) report.severity = double(flipped) / double(clean_correct);

    double lo = 2.0, hi = -2.0, sum = 0.0;
    std::size_t defined = 0;
    for (const auto& c : report.cosine_similarities) {
        if (!c) continue;
        ++defined;
        lo = std::min(lo, *c);
        hi = std::max(hi, *c);
        sum += *c;
    }
    if (defined > 0) {
        report.cosine_min = lo;
        report.cosine_max = hi;
        report.cosine_mean = sum / double(defined);
    }
    return report;
}

}  // namespace hpac
