#include "hpac/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace hpac {

namespace {

constexpr char kMagic[4] = {'H', 'P', 'A', 'C'};
constexpr uint32_t kVersion = 1;

uint64_t epoch_seed(uint64_t seed, int epoch) {
    return seed ^ (0x9E3779B97F4A7C15ULL * uint64_t(epoch));
}

std::vector<int> batch_labels(const Batch& batch) {
    std::vector<int> labels = batch.labels;
    for (int l : labels)
        if (l != 0 && l != 1)
            throw ConfigError("all packets must carry a 0/1 label for training or evaluation");
    return labels;
}

void write_u32(std::ofstream& out, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw CheckpointError("truncated checkpoint");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void write_f64(std::ofstream& out, double v) {
    const auto bits = std::bit_cast<uint64_t>(v);
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::ifstream& in) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw CheckpointError("truncated checkpoint");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= uint64_t(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"k", c.k},         {"d", c.d},           {"heads", c.heads},
            {"kernel", c.kernel}, {"m_max", c.m_max},   {"classes", c.classes},
            {"seed", c.seed},     {"positional", c.positional}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.k = j.at("k").get<int>();
    c.d = j.at("d").get<int>();
    c.heads = j.at("heads").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.m_max = j.at("m_max").get<int>();
    c.classes = j.at("classes").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.positional = j.at("positional").get<bool>();
    return c;
}

void put_metric(nlohmann::json& obj, const char* name, const std::optional<double>& v) {
    if (v) obj[name] = *v;
    else obj[name] = nullptr;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (lr <= 0) throw ConfigError("learning rate must be positive");
    if (focal_gamma < 0) throw ConfigError("focal gamma must be non-negative");
    if (focal_alpha <= 0 || focal_alpha >= 1) throw ConfigError("focal alpha must lie in (0,1)");
    if (threshold < 0 || threshold > 1) throw ConfigError("threshold must lie in [0,1]");
}

AdamState AdamState::for_params(const std::vector<std::pair<std::string, Tensor>>& params) {
    AdamState state;
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.slots[i].m.assign(params[i].second.size(), 0.0);
        state.slots[i].v.assign(params[i].second.size(), 0.0);
    }
    return state;
}

Tensor focal_loss(const Tensor& probs, std::span<const int> labels, double alpha, double gamma) {
    if (probs.rank() != 2 || probs.dim(1) != 2)
        throw ShapeError("focal_loss: expected [B,2] probabilities, got " +
                         shape_str(probs.shape()));
    const int B = probs.dim(0);
    if (int(labels.size()) != B)
        throw ContractError("focal_loss: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(B) + " samples");
    std::vector<double> alpha_t(std::size_t(B), 0.0);
    for (int b = 0; b < B; ++b) {
        const int l = labels[std::size_t(b)];
        if (l != 0 && l != 1)
            throw ContractError("focal_loss: label must be 0 or 1, got " + std::to_string(l));
        alpha_t[std::size_t(b)] = l == 1 ? alpha : 1.0 - alpha;
    }
    const Tensor pt = take_per_row(probs, labels);
    const Tensor focal_weight = pow_const(add(Tensor::full({B}, 1.0), scale(pt, -1.0)), gamma);
    const Tensor weighted =
        mul(mul(Tensor::from_data({B}, std::move(alpha_t)), focal_weight), log(pt));
    return scale(mean(weighted), -1.0);
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr) {
    if (state.slots.size() != params.size())
        throw ContractError("adam_step: state tracks " + std::to_string(state.slots.size()) +
                            " parameters, got " + std::to_string(params.size()));
    for (auto& [name, t] : params) {
        for (double g : t.grad())
            if (!std::isfinite(g))
                throw TrainingError("non-finite gradient in parameter '" + name +
                                    "'; training aborted");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].second;
        auto grad = t.grad();
        auto values = t.mutable_values();
        auto& slot = state.slots[i];
        if (slot.m.size() != values.size())
            throw ContractError("adam_step: buffer shape mismatch for '" + params[i].first + "'");
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = j < grad.size() ? grad[j] : 0.0;
            slot.m[j] = state.beta1 * slot.m[j] + (1.0 - state.beta1) * g;
            slot.v[j] = state.beta2 * slot.v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = slot.m[j] / bc1;
            const double v_hat = slot.v[j] / bc2;
            values[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

MetricsReport evaluate(const Model& model, const std::vector<SegmentedPacket>& data,
                       double threshold, int batch_size) {
    if (data.empty()) throw ConfigError("evaluate: empty dataset");
    FrozenParams pause(model);
    std::vector<int> predictions;
    std::vector<int> labels;
    predictions.reserve(data.size());
    labels.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += std::size_t(batch_size)) {
        const std::size_t stop = std::min(data.size(), start + std::size_t(batch_size));
        std::vector<SegmentedPacket> chunk(data.begin() + long(start), data.begin() + long(stop));
        Batch batch = batch_segments(chunk, model.config.m_max);
        auto chunk_labels = batch_labels(batch);
        auto result = forward(model, batch);
        auto preds = predict(result.probs, threshold);
        predictions.insert(predictions.end(), preds.begin(), preds.end());
        labels.insert(labels.end(), chunk_labels.begin(), chunk_labels.end());
    }
    return compute_metrics(confusion(predictions, labels));
}

TrainHistory train(Model& model, const std::vector<SegmentedPacket>& train_data,
                   const std::vector<SegmentedPacket>& val_data, const TrainConfig& config) {
    config.validate();
    if (train_data.empty()) throw ConfigError("train: empty training set");
    if (val_data.empty()) throw ConfigError("train: empty validation set");

    auto all_params = model.parameters();
    std::vector<std::pair<std::string, Tensor>> trainable;
    for (auto& p : all_params) {
        if (!model.config.positional && (p.first == "word_pos" || p.first == "sent_pos"))
            continue;  // ablated tables stay zero
        trainable.push_back(p);
    }
    AdamState state = AdamState::for_params(trainable);

    TrainHistory history;
    double best_f1 = -1.0;
    Model best;
    const std::size_t n = train_data.size();

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::mt19937_64 rng(epoch_seed(config.seed, epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        for (int step = 0; step < config.steps_per_epoch; ++step) {
            std::vector<SegmentedPacket> chunk;
            chunk.reserve(std::size_t(config.batch_size));
            for (int j = 0; j < config.batch_size; ++j) {
                const std::size_t pos =
                    (std::size_t(step) * std::size_t(config.batch_size) + std::size_t(j)) % n;
                chunk.push_back(train_data[order[pos]]);
            }
            Batch batch = batch_segments(chunk, model.config.m_max);
            auto labels = batch_labels(batch);
            auto result = forward(model, batch);
            Tensor loss = focal_loss(result.probs, labels, config.focal_alpha, config.focal_gamma);
            for (auto& [name, t] : trainable) t.zero_grad();
            backward(loss);
            adam_step(trainable, state, config.lr);
            loss_sum += loss.item();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / double(config.steps_per_epoch);
        stats.validation = evaluate(model, val_data, config.threshold, config.batch_size);
        history.epochs.push_back(stats);

        // Ties go to the later epoch, so the retained model is the most
        // trained among equally scoring checkpoints.
        const double f1 = stats.validation.f1.value_or(-1.0);
        if (f1 >= best_f1) {
            best_f1 = f1;
            best = model.clone();
            history.best_epoch = epoch;
        }
    }

    if (history.best_epoch > 0) model = std::move(best);
    if (!config.checkpoint_path.empty()) save_checkpoint(model, config.checkpoint_path);
    return history;
}

std::string TrainHistory::to_jsonl() const {
    std::ostringstream out;
    for (const auto& e : epochs) {
        nlohmann::json obj{{"epoch", e.epoch}, {"loss", e.train_loss}};
        put_metric(obj, "acc", e.validation.acc);
        put_metric(obj, "dr", e.validation.dr);
        put_metric(obj, "fpr_paper", e.validation.fpr_paper);
        put_metric(obj, "fpr_standard", e.validation.fpr_standard);
        put_metric(obj, "precision", e.validation.precision);
        put_metric(obj, "f1", e.validation.f1);
        out << obj.dump() << '\n';
    }
    return out.str();
}

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    const std::string config_json = config_to_json(model.config).dump();
    write_u32(out, uint32_t(config_json.size()));
    out.write(config_json.data(), long(config_json.size()));

    const auto params = model.parameters();
    write_u32(out, uint32_t(params.size()));
    for (const auto& [name, t] : params) {
        write_u32(out, uint32_t(name.size()));
        out.write(name.data(), long(name.size()));
        write_u32(out, uint32_t(t.rank()));
        for (int i = 0; i < t.rank(); ++i) write_u32(out, uint32_t(t.dim(i)));
        for (double v : t.values()) write_f64(out, v);
    }
    if (!out) throw Error("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not an HPAC checkpoint: " + path);
    const uint32_t version = read_u32(in);
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    const uint32_t config_len = read_u32(in);
    std::string config_json(config_len, '\0');
    in.read(config_json.data(), long(config_len));
    if (!in) throw CheckpointError("truncated checkpoint");
    ModelConfig config;
    try {
        config = config_from_json(nlohmann::json::parse(config_json));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint config block: ") + e.what());
    }

    Model model = init_model(config);
    auto params = model.parameters();
    std::map<std::string, Tensor> by_name(params.begin(), params.end());

    const uint32_t count = read_u32(in);
    if (count != params.size())
        throw CheckpointError("checkpoint stores " + std::to_string(count) +
                              " tensors, model has " + std::to_string(params.size()));
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), long(name_len));
        if (!in) throw CheckpointError("truncated checkpoint");
        const uint32_t rank = read_u32(in);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = int(read_u32(in));
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw CheckpointError("checkpoint tensor '" + name + "' has no model counterpart");
        if (it->second.shape() != shape)
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                                  shape_str(shape) + ", model expects " +
                                  shape_str(it->second.shape()));
        for (auto& v : it->second.mutable_values()) v = read_f64(in);
    }
    return model;
}

Model load_checkpoint_expect(const std::string& path, const ModelConfig& expected) {
    Model model = load_checkpoint(path);
    const ModelConfig& got = model.config;
    auto fail = [&](const char* field, auto want, auto have) {
        throw CheckpointError(std::string("checkpoint config mismatch on '") + field +
                              "': expected " + std::to_string(want) + ", found " +
                              std::to_string(have));
    };
    if (got.k != expected.k) fail("k", expected.k, got.k);
    if (got.d != expected.d) fail("d", expected.d, got.d);
    if (got.heads != expected.heads) fail("heads", expected.heads, got.heads);
    if (got.kernel != expected.kernel) fail("kernel", expected.kernel, got.kernel);
    if (got.m_max != expected.m_max) fail("m_max", expected.m_max, got.m_max);
    if (got.classes != expected.classes) fail("classes", expected.classes, got.classes);
    return model;
}

}  // namespace hpac
