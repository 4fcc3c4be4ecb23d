#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpac/adversarial.hpp"
#include "hpac/ingest.hpp"
#include "hpac/metrics.hpp"
#include "hpac/model.hpp"
#include "hpac/segmenter.hpp"
#include "hpac/trainer.hpp"

namespace {

using nlohmann::json;

// Flat dotted-key configuration file, overridable by command-line flags.
struct RunConfig {
    hpac::ModelConfig model;
    hpac::TrainConfig train;
    hpac::AttackConfig attack;
    std::string data_train;
    std::string data_val;
    std::string data_test;
    std::string data_pcap;
    std::string data_labels;
    double ratio_train = 0.6;
    double ratio_val = 0.2;
    double ratio_test = 0.2;
    double threshold = 0.5;
    std::optional<uint64_t> seed;
};

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hpac::Error("cannot open config file: " + path);
    json obj;
    try {
        obj = json::parse(in);
    } catch (const json::exception& e) {
        throw hpac::ConfigError("bad JSON in config file " + path + ": " + e.what());
    }
    if (!obj.is_object()) throw hpac::ConfigError("config file must hold a JSON object");

    RunConfig cfg;
    for (const auto& [key, value] : obj.items()) {
        try {
            if (key == "model.k") cfg.model.k = value.get<int>();
            else if (key == "model.d") cfg.model.d = value.get<int>();
            else if (key == "model.heads") cfg.model.heads = value.get<int>();
            else if (key == "model.kernel") cfg.model.kernel = value.get<int>();
            else if (key == "model.m_max") cfg.model.m_max = value.get<int>();
            else if (key == "model.positional") cfg.model.positional = value.get<bool>();
            else if (key == "train.epochs") cfg.train.epochs = value.get<int>();
            else if (key == "train.steps_per_epoch") cfg.train.steps_per_epoch = value.get<int>();
            else if (key == "train.batch_size") cfg.train.batch_size = value.get<int>();
            else if (key == "train.lr") cfg.train.lr = value.get<double>();
            else if (key == "train.focal_gamma") cfg.train.focal_gamma = value.get<double>();
            else if (key == "train.focal_alpha") cfg.train.focal_alpha = value.get<double>();
            else if (key == "train.checkpoint_path") cfg.train.checkpoint_path = value.get<std::string>();
            else if (key == "attack.method")
                cfg.attack.method = hpac::attack_method_from_name(value.get<std::string>());
            else if (key == "attack.eps") cfg.attack.eps = value.get<double>();
            else if (key == "attack.alpha") cfg.attack.alpha = value.get<double>();
            else if (key == "attack.iterations") cfg.attack.iterations = value.get<int>();
            else if (key == "data.train") cfg.data_train = value.get<std::string>();
            else if (key == "data.val") cfg.data_val = value.get<std::string>();
            else if (key == "data.test") cfg.data_test = value.get<std::string>();
            else if (key == "data.pcap") cfg.data_pcap = value.get<std::string>();
            else if (key == "data.labels") cfg.data_labels = value.get<std::string>();
            else if (key == "data.ratio_train") cfg.ratio_train = value.get<double>();
            else if (key == "data.ratio_val") cfg.ratio_val = value.get<double>();
            else if (key == "data.ratio_test") cfg.ratio_test = value.get<double>();
            else if (key == "threshold") cfg.threshold = value.get<double>();
            else if (key == "seed") cfg.seed = value.get<uint64_t>();
            else throw hpac::ConfigError("unknown config key '" + key + "'");
        } catch (const json::exception& e) {
            throw hpac::ConfigError("bad value for config key '" + key + "': " + e.what());
        }
    }
    return cfg;
}

uint64_t resolve_seed(const std::optional<uint64_t>& flag, const std::optional<uint64_t>& file) {
    if (flag) return *flag;
    if (file) return *file;
    if (const char* env = std::getenv("HPAC_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

bool looks_like_pcap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw hpac::Error("cannot open file: " + path);
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) return false;
    const uint32_t magic = uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
                           uint32_t(b[3]) << 24;
    return magic == 0xA1B2C3D4u || magic == 0xD4C3B2A1u || magic == 0xA1B23C4Du ||
           magic == 0x4D3CB2A1u;
}

std::vector<hpac::RawPacket> read_hex_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hpac::Error("cannot open file: " + path);
    auto slash = path.find_last_of("/\\");
    const std::string source = slash == std::string::npos ? path : path.substr(slash + 1);
    std::vector<hpac::RawPacket> packets;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        hpac::RawPacket pkt = hpac::parse_hex_stream(line);
        pkt.source_id = source;
        pkt.frame_index = packets.size() + 1;
        packets.push_back(std::move(pkt));
    }
    if (packets.empty()) throw hpac::ParseError("no packets in hex file " + path, 0);
    return packets;
}

std::vector<hpac::RawPacket> read_raw_input(const std::string& path) {
    return looks_like_pcap(path) ? hpac::read_pcap(path) : read_hex_file(path);
}

std::vector<hpac::SegmentedPacket> segment_all(const std::vector<hpac::RawPacket>& packets,
                                               int k) {
    std::vector<hpac::SegmentedPacket> out;
    out.reserve(packets.size());
    for (const auto& p : packets) out.push_back(hpac::segment_packet(p, k));
    return out;
}

std::vector<hpac::SegmentedPacket> load_jsonl(const std::string& path) {
    return hpac::read_segments_jsonl(path);
}

struct SegmentedSplit {
    std::vector<hpac::SegmentedPacket> train;
    std::vector<hpac::SegmentedPacket> val;
    std::vector<hpac::SegmentedPacket> test;
};

// Training data either comes pre-segmented (data.train/data.val) or as a raw
// capture that is labeled, split, and segmented here.
SegmentedSplit resolve_training_data(const RunConfig& cfg, uint64_t seed, int k) {
    SegmentedSplit out;
    if (!cfg.data_train.empty()) {
        if (cfg.data_val.empty())
            throw hpac::ConfigError("data.val is required when data.train is given");
        out.train = load_jsonl(cfg.data_train);
        out.val = load_jsonl(cfg.data_val);
        if (!cfg.data_test.empty()) out.test = load_jsonl(cfg.data_test);
        return out;
    }
    if (cfg.data_pcap.empty())
        throw hpac::ConfigError("config needs either data.train/data.val or data.pcap");
    auto packets = read_raw_input(cfg.data_pcap);
    if (!cfg.data_labels.empty()) hpac::load_labels(cfg.data_labels, packets);
    auto split =
        hpac::split_dataset(packets, cfg.ratio_train, cfg.ratio_val, cfg.ratio_test, seed);
    out.train = segment_all(split.train, k);
    out.val = segment_all(split.validation, k);
    out.test = segment_all(split.test, k);
    return out;
}

int cmd_segment(const std::string& input, int k, const std::string& labels,
                const std::string& out_path) {
    auto packets = read_raw_input(input);
    if (!labels.empty()) hpac::load_labels(labels, packets);
    auto segmented = segment_all(packets, k);
    if (out_path.empty()) {
        for (const auto& p : segmented) {
            json rows = json::array();
            for (int r = 0; r < p.m; ++r) {
                json row = json::array();
                for (int c = 0; c < p.k; ++c) row.push_back(p.token(r, c));
                rows.push_back(std::move(row));
            }
            json obj{{"source_id", p.source_id},
                     {"frame_index", p.frame_index},
                     {"k", p.k},
                     {"tokens", std::move(rows)}};
            if (p.label) obj["label"] = *p.label;
            else obj["label"] = nullptr;
            std::cout << obj.dump() << '\n';
        }
    } else {
        hpac::write_segments_jsonl(out_path, segmented);
        std::cerr << "wrote " << segmented.size() << " packets to " << out_path << "\n";
    }
    return 0;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed_flag,
              std::string out_path) {
    RunConfig cfg = load_run_config(config_path);
    const uint64_t seed = resolve_seed(seed_flag, cfg.seed);
    cfg.model.seed = seed;
    cfg.train.seed = seed;
    cfg.train.threshold = cfg.threshold;

    auto data = resolve_training_data(cfg, seed, cfg.model.k);
    if (!data.train.empty() && data.train.front().k != cfg.model.k)
        throw hpac::ConfigError("training data uses k=" + std::to_string(data.train.front().k) +
                                " but model.k=" + std::to_string(cfg.model.k));

    if (out_path.empty())
        out_path = cfg.train.checkpoint_path.empty() ? "model.hpac" : cfg.train.checkpoint_path;
    cfg.train.checkpoint_path = out_path;

    hpac::Model model = hpac::init_model(cfg.model);
    std::cerr << "training on " << data.train.size() << " packets, validating on "
              << data.val.size() << " (seed " << seed << ")\n";
    auto history = hpac::train(model, data.train, data.val, cfg.train);
    std::cout << history.to_jsonl();
    std::cerr << "best epoch " << history.best_epoch << ", checkpoint written to " << out_path
              << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, double threshold,
             int batch_size) {
    hpac::Model model = hpac::load_checkpoint(model_path);
    auto data = load_jsonl(data_path);
    if (!data.empty() && data.front().k != model.config.k)
        throw hpac::ConfigError("data uses k=" + std::to_string(data.front().k) +
                                " but the checkpoint was trained with k=" +
                                std::to_string(model.config.k));
    auto report = hpac::evaluate(model, data, threshold, batch_size);
    std::cout << report.to_json() << '\n';
    return 0;
}

int cmd_attack(const std::string& model_path, const std::string& data_path,
               const std::string& method, double eps, double alpha, int iters, double threshold,
               int batch_size) {
    hpac::Model model = hpac::load_checkpoint(model_path);
    auto data = load_jsonl(data_path);
    if (!data.empty() && data.front().k != model.config.k)
        throw hpac::ConfigError("data uses k=" + std::to_string(data.front().k) +
                                " but the checkpoint was trained with k=" +
                                std::to_string(model.config.k));
    hpac::AttackConfig cfg;
    cfg.method = hpac::attack_method_from_name(method);
    cfg.eps = eps;
    cfg.alpha = alpha;
    cfg.iterations = iters;
    cfg.threshold = threshold;
    auto report = hpac::run_attack(model, data, cfg, batch_size);
    std::cout << report.to_json() << '\n';
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<int>& sizes,
              std::optional<uint64_t> seed_flag) {
    if (sizes.empty()) throw hpac::ConfigError("sweep needs at least one segment size");
    RunConfig cfg = load_run_config(config_path);
    const uint64_t seed = resolve_seed(seed_flag, cfg.seed);
    if (cfg.data_pcap.empty())
        throw hpac::ConfigError("sweep re-segments raw packets; config must set data.pcap");

    auto packets = read_raw_input(cfg.data_pcap);
    if (!cfg.data_labels.empty()) hpac::load_labels(cfg.data_labels, packets);
    auto split =
        hpac::split_dataset(packets, cfg.ratio_train, cfg.ratio_val, cfg.ratio_test, seed);

    for (int k : sizes) {
        hpac::ModelConfig mc = cfg.model;
        mc.k = k;
        mc.seed = seed;
        hpac::TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.threshold = cfg.threshold;
        tc.checkpoint_path.clear();

        std::cerr << "sweep: training with segment size " << k << "\n";
        hpac::Model model = hpac::init_model(mc);
        auto train_seg = segment_all(split.train, k);
        auto val_seg = segment_all(split.validation, k);
        auto test_seg = segment_all(split.test, k);
        hpac::train(model, train_seg, val_seg, tc);
        auto report = hpac::evaluate(model, test_seg, cfg.threshold, tc.batch_size);

        json row = json::parse(report.to_json());
        row["k"] = k;
        std::cout << row.dump() << std::endl;
    }
    return 0;
}

// Input problems (unreadable or malformed files, bad packet values) exit 2;
// configuration and checkpoint mismatches exit 3.
template <typename Fn>
int guarded(bool config_context, Fn&& fn) {
    try {
        return fn();
    } catch (const hpac::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const hpac::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_context ? 3 : 2;
    } catch (const hpac::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const hpac::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HPAC-IDS: hierarchical packet attention convolution pipeline"};
    app.require_subcommand(1);

    // segment
    auto* seg = app.add_subcommand("segment", "Segment a pcap or hex capture into token JSONL");
    std::string seg_input, seg_labels, seg_out;
    int seg_k = 20;
    seg->add_option("--input", seg_input, "pcap file or hex-lines file")->required();
    seg->add_option("--segment-size", seg_k, "tokens per segment (k)");
    seg->add_option("--labels", seg_labels, "CSV manifest source_id,frame_index,label");
    seg->add_option("--out", seg_out, "output JSONL path (stdout when omitted)");

    // train
    auto* train = app.add_subcommand("train", "Train a model from a JSON config");
    std::string train_config, train_out;
    std::optional<uint64_t> train_seed;
    train->add_option("--config", train_config, "JSON config with flat dotted keys")->required();
    train->add_option("--seed", train_seed, "overrides config seed");
    train->add_option("--out", train_out, "checkpoint output path");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on segmented data");
    std::string eval_model, eval_data;
    double eval_threshold = 0.5;
    int eval_batch = 40;
    eval->add_option("--model", eval_model, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "segment JSONL path")->required();
    eval->add_option("--threshold", eval_threshold, "malicious-probability decision threshold");
    eval->add_option("--batch-size", eval_batch, "evaluation batch size");

    // attack
    auto* attack = app.add_subcommand("attack", "Run an embedding-space adversarial attack");
    std::string attack_model, attack_data, attack_method = "fgsm";
    double attack_eps = 0.3, attack_alpha = 0.4, attack_threshold = 0.5;
    int attack_iters = 20, attack_batch = 40;
    attack->add_option("--model", attack_model, "checkpoint path")->required();
    attack->add_option("--data", attack_data, "segment JSONL path")->required();
    attack->add_option("--method", attack_method, "fgsm or pgd");
    attack->add_option("--eps", attack_eps, "infinity-norm budget");
    attack->add_option("--alpha", attack_alpha, "PGD step size");
    attack->add_option("--iters", attack_iters, "PGD iterations");
    attack->add_option("--threshold", attack_threshold, "decision threshold");
    attack->add_option("--batch-size", attack_batch, "attack batch size");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Retrain and evaluate across segment sizes");
    std::string sweep_config;
    std::vector<int> sweep_sizes;
    std::optional<uint64_t> sweep_seed;
    sweep->add_option("--segment-sizes", sweep_sizes, "comma-separated k values")
        ->required()
        ->delimiter(',');
    sweep->add_option("--config", sweep_config, "JSON config with flat dotted keys")->required();
    sweep->add_option("--seed", sweep_seed, "overrides config seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (seg->parsed())
        return guarded(false, [&] { return cmd_segment(seg_input, seg_k, seg_labels, seg_out); });
    if (train->parsed())
        return guarded(true, [&] { return cmd_train(train_config, train_seed, train_out); });
    if (eval->parsed())
        return guarded(true,
                       [&] { return cmd_eval(eval_model, eval_data, eval_threshold, eval_batch); });
    if (attack->parsed())
        return guarded(true, [&] {
            return cmd_attack(attack_model, attack_data, attack_method, attack_eps, attack_alpha,
                              attack_iters, attack_threshold, attack_batch);
        });
    if (sweep->parsed())
        return guarded(true, [&] { return cmd_sweep(sweep_config, sweep_sizes, sweep_seed); });
    return 1;
}
