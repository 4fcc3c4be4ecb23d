#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "hpac/adversarial.hpp"
#include "hpac/ingest.hpp"
#include "hpac/metrics.hpp"
#include "hpac/model.hpp"
#include "hpac/segmenter.hpp"
#include "hpac/trainer.hpp"

namespace py = pybind11;

namespace {

py::bytes packet_bytes(const hpac::RawPacket& p) {
    return py::bytes(reinterpret_cast<const char*>(p.bytes.data()), p.bytes.size());
}

void set_packet_bytes(hpac::RawPacket& p, const py::bytes& data) {
    const std::string raw = data;
    p.bytes.assign(raw.begin(), raw.end());
}

py::object opt_to_py(const std::optional<double>& v) {
    if (v) return py::float_(*v);
    return py::none();
}

py::dict metrics_dict(const hpac::MetricsReport& r) {
    py::dict d;
    d["acc"] = opt_to_py(r.acc);
    d["dr"] = opt_to_py(r.dr);
    d["fpr_paper"] = opt_to_py(r.fpr_paper);
    d["fpr_standard"] = opt_to_py(r.fpr_standard);
    d["precision"] = opt_to_py(r.precision);
    d["f1"] = opt_to_py(r.f1);
    return d;
}

std::vector<std::vector<int>> token_rows(const hpac::SegmentedPacket& p) {
    std::vector<std::vector<int>> rows(std::size_t(p.m));
    for (int r = 0; r < p.m; ++r) {
        rows[std::size_t(r)].resize(std::size_t(p.k));
        for (int c = 0; c < p.k; ++c) rows[std::size_t(r)][std::size_t(c)] = p.token(r, c);
    }
    return rows;
}

std::vector<std::pair<double, double>> forward_probs(const hpac::Model& model,
                                                     const std::vector<hpac::SegmentedPacket>& data) {
    hpac::FrozenParams pause(model);
    std::vector<std::pair<double, double>> out;
    out.reserve(data.size());
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t stop = std::min(data.size(), start + kChunk);
        std::vector<hpac::SegmentedPacket> chunk(data.begin() + long(start),
                                                 data.begin() + long(stop));
        auto batch = hpac::batch_segments(chunk, model.config.m_max);
        auto probs = hpac::forward(model, batch).probs;
        const double* p = probs.values().data();
        for (int b = 0; b < batch.batch_size; ++b)
            out.emplace_back(p[std::size_t(b) * 2], p[std::size_t(b) * 2 + 1]);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_hpac, m) {
    m.doc() = "HPAC-IDS core: packet segmentation, the hierarchical attention-convolution "
              "classifier, metrics, and adversarial attacks";

    py::register_exception<hpac::Error>(m, "HpacError");

    py::class_<hpac::RawPacket>(m, "RawPacket")
        .def(py::init<>())
        .def_property("data", &packet_bytes, &set_packet_bytes)
        .def_readwrite("label", &hpac::RawPacket::label)
        .def_readwrite("source_id", &hpac::RawPacket::source_id)
        .def_readwrite("frame_index", &hpac::RawPacket::frame_index)
        .def("__len__", [](const hpac::RawPacket& p) { return p.bytes.size(); })
        .def("__repr__", [](const hpac::RawPacket& p) {
            return "<RawPacket " + p.source_id + "#" + std::to_string(p.frame_index) + ", " +
                   std::to_string(p.bytes.size()) + " bytes>";
        });

    py::class_<hpac::SegmentedPacket>(m, "SegmentedPacket")
        .def_readonly("m", &hpac::SegmentedPacket::m)
        .def_readonly("k", &hpac::SegmentedPacket::k)
        .def_readwrite("label", &hpac::SegmentedPacket::label)
        .def_readonly("source_id", &hpac::SegmentedPacket::source_id)
        .def_readonly("frame_index", &hpac::SegmentedPacket::frame_index)
        .def_property_readonly("tokens", &token_rows)
        .def("__repr__", [](const hpac::SegmentedPacket& p) {
            return "<SegmentedPacket " + std::to_string(p.m) + "x" + std::to_string(p.k) + ">";
        });

    py::class_<hpac::ModelConfig>(m, "ModelConfig")
        .def(py::init([](int k, int d, int heads, int kernel, int m_max, uint64_t seed,
                         bool positional) {
                 hpac::ModelConfig c;
                 c.k = k;
                 c.d = d;
                 c.heads = heads;
                 c.kernel = kernel;
                 c.m_max = m_max;
                 c.seed = seed;
                 c.positional = positional;
                 c.validate();
                 return c;
             }),
             py::arg("k") = 20, py::arg("d") = 96, py::arg("heads") = 8, py::arg("kernel") = 3,
             py::arg("m_max") = 64, py::arg("seed") = 0, py::arg("positional") = true)
        .def_readwrite("k", &hpac::ModelConfig::k)
        .def_readwrite("d", &hpac::ModelConfig::d)
        .def_readwrite("heads", &hpac::ModelConfig::heads)
        .def_readwrite("kernel", &hpac::ModelConfig::kernel)
        .def_readwrite("m_max", &hpac::ModelConfig::m_max)
        .def_readwrite("seed", &hpac::ModelConfig::seed)
        .def_readwrite("positional", &hpac::ModelConfig::positional);

    py::class_<hpac::TrainConfig>(m, "TrainConfig")
        .def(py::init([](int epochs, int steps_per_epoch, int batch_size, double lr,
                         double focal_gamma, double focal_alpha, uint64_t seed,
                         std::string checkpoint_path, double threshold) {
                 hpac::TrainConfig c;
                 c.epochs = epochs;
                 c.steps_per_epoch = steps_per_epoch;
                 c.batch_size = batch_size;
                 c.lr = lr;
                 c.focal_gamma = focal_gamma;
                 c.focal_alpha = focal_alpha;
                 c.seed = seed;
                 c.checkpoint_path = std::move(checkpoint_path);
                 c.threshold = threshold;
                 c.validate();
                 return c;
             }),
             py::arg("epochs") = 40, py::arg("steps_per_epoch") = 150, py::arg("batch_size") = 40,
             py::arg("lr") = 1e-3, py::arg("focal_gamma") = 2.0, py::arg("focal_alpha") = 0.25,
             py::arg("seed") = 0, py::arg("checkpoint_path") = std::string{},
             py::arg("threshold") = 0.5)
        .def_readwrite("epochs", &hpac::TrainConfig::epochs)
        .def_readwrite("steps_per_epoch", &hpac::TrainConfig::steps_per_epoch)
        .def_readwrite("batch_size", &hpac::TrainConfig::batch_size)
        .def_readwrite("lr", &hpac::TrainConfig::lr)
        .def_readwrite("focal_gamma", &hpac::TrainConfig::focal_gamma)
        .def_readwrite("focal_alpha", &hpac::TrainConfig::focal_alpha)
        .def_readwrite("seed", &hpac::TrainConfig::seed)
        .def_readwrite("checkpoint_path", &hpac::TrainConfig::checkpoint_path)
        .def_readwrite("threshold", &hpac::TrainConfig::threshold);

    py::class_<hpac::AttackConfig>(m, "AttackConfig")
        .def(py::init([](const std::string& method, double eps, double alpha, int iterations,
                         double focal_gamma, double focal_alpha, double threshold) {
                 hpac::AttackConfig c;
                 c.method = hpac::attack_method_from_name(method);
                 c.eps = eps;
                 c.alpha = alpha;
                 c.iterations = iterations;
                 c.focal_gamma = focal_gamma;
                 c.focal_alpha = focal_alpha;
                 c.threshold = threshold;
                 c.validate();
                 return c;
             }),
             py::arg("method") = "fgsm", py::arg("eps") = 0.3, py::arg("alpha") = 0.4,
             py::arg("iterations") = 20, py::arg("focal_gamma") = 2.0,
             py::arg("focal_alpha") = 0.25, py::arg("threshold") = 0.5)
        .def_readwrite("eps", &hpac::AttackConfig::eps)
        .def_readwrite("alpha", &hpac::AttackConfig::alpha)
        .def_readwrite("iterations", &hpac::AttackConfig::iterations)
        .def_property(
            "method",
            [](const hpac::AttackConfig& c) { return hpac::attack_method_name(c.method); },
            [](hpac::AttackConfig& c, const std::string& name) {
                c.method = hpac::attack_method_from_name(name);
            });

    py::class_<hpac::Model>(m, "Model")
        .def_readonly("config", &hpac::Model::config)
        .def("parameter_count", &hpac::Model::parameter_count)
        .def("clone", &hpac::Model::clone);

    m.def("parse_hex_stream", &hpac::parse_hex_stream, py::arg("text"));
    m.def("to_hex", [](const hpac::RawPacket& p) { return hpac::to_hex(p.bytes); });
    m.def("read_pcap", &hpac::read_pcap, py::arg("path"));
    m.def("write_pcap", &hpac::write_pcap, py::arg("path"), py::arg("packets"));
    m.def(
        "load_labels",
        [](const std::string& manifest, std::vector<hpac::RawPacket> packets) {
            hpac::load_labels(manifest, packets);
            return packets;
        },
        py::arg("manifest"), py::arg("packets"));
    m.def(
        "split_dataset",
        [](const std::vector<hpac::RawPacket>& packets, double train, double val, double test,
           uint64_t seed) {
            auto s = hpac::split_dataset(packets, train, val, test, seed);
            return py::make_tuple(s.train, s.validation, s.test);
        },
        py::arg("packets"), py::arg("train_ratio") = 0.6, py::arg("validation_ratio") = 0.2,
        py::arg("test_ratio") = 0.2, py::arg("seed") = 0);

    m.def("segment_packet", &hpac::segment_packet, py::arg("packet"), py::arg("k"));
    m.def("desegment", [](const hpac::SegmentedPacket& p) {
        auto bytes = hpac::desegment(p);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
    m.def("write_segments_jsonl", &hpac::write_segments_jsonl, py::arg("path"),
          py::arg("packets"));
    m.def("read_segments_jsonl", &hpac::read_segments_jsonl, py::arg("path"));

    m.def("init_model", &hpac::init_model, py::arg("config"));
    m.def("forward_probs", &forward_probs, py::arg("model"), py::arg("packets"),
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "train",
        [](hpac::Model& model, const std::vector<hpac::SegmentedPacket>& train_data,
           const std::vector<hpac::SegmentedPacket>& val_data, const hpac::TrainConfig& config) {
            hpac::TrainHistory history;
            {
                py::gil_scoped_release release;
                history = hpac::train(model, train_data, val_data, config);
            }
            py::list out;
            for (const auto& e : history.epochs) {
                py::dict d = metrics_dict(e.validation);
                d["epoch"] = e.epoch;
                d["loss"] = e.train_loss;
                out.append(std::move(d));
            }
            return out;
        },
        py::arg("model"), py::arg("train_data"), py::arg("val_data"), py::arg("config"));
    m.def(
        "evaluate",
        [](const hpac::Model& model, const std::vector<hpac::SegmentedPacket>& data,
           double threshold, int batch_size) {
            hpac::MetricsReport r;
            {
                py::gil_scoped_release release;
                r = hpac::evaluate(model, data, threshold, batch_size);
            }
            return metrics_dict(r);
        },
        py::arg("model"), py::arg("data"), py::arg("threshold") = 0.5,
        py::arg("batch_size") = 40);
    m.def("save_checkpoint", &hpac::save_checkpoint, py::arg("model"), py::arg("path"));
    m.def("load_checkpoint", &hpac::load_checkpoint, py::arg("path"));
    m.def(
        "confusion",
        [](const std::vector<int>& predictions, const std::vector<int>& labels) {
            auto c = hpac::confusion(predictions, labels);
            py::dict d;
            d["tp"] = c.tp;
            d["tn"] = c.tn;
            d["fp"] = c.fp;
            d["fn"] = c.fn;
            return d;
        },
        py::arg("predictions"), py::arg("labels"));
    m.def(
        "compute_metrics",
        [](uint64_t tp, uint64_t tn, uint64_t fp, uint64_t fn) {
            return metrics_dict(hpac::compute_metrics({tp, tn, fp, fn}));
        },
        py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
    m.def(
        "run_attack",
        [](const hpac::Model& model, const std::vector<hpac::SegmentedPacket>& data,
           const hpac::AttackConfig& config, int batch_size) {
            hpac::AttackReport r;
            {
                py::gil_scoped_release release;
                r = hpac::run_attack(model, data, config, batch_size);
            }
            py::dict d;
            d["method"] = r.method;
            d["eps"] = r.eps;
            d["alpha"] = r.alpha;
            d["iterations"] = r.iterations;
            d["severity"] = opt_to_py(r.severity);
            d["severity_alt"] = r.severity_alt;
            d["clean_accuracy"] = r.clean_accuracy;
            d["adversarial_accuracy"] = r.adversarial_accuracy;
            d["cosine_min"] = opt_to_py(r.cosine_min);
            d["cosine_mean"] = opt_to_py(r.cosine_mean);
            d["cosine_max"] = opt_to_py(r.cosine_max);
            py::list cosines;
            for (const auto& c : r.cosine_similarities) cosines.append(opt_to_py(c));
            d["cosine_similarities"] = std::move(cosines);
            return d;
        },
        py::arg("model"), py::arg("data"), py::arg("config"), py::arg("batch_size") = 40);

    m.attr("PAD_TOKEN") = hpac::kPadToken;
    m.attr("VOCAB_SIZE") = hpac::kVocabSize;
    m.attr("MIN_SEGMENT_SIZE") = hpac::kMinSegmentSize;
    m.attr("__version__") = "0.1.0";
}
