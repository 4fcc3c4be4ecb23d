#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hpac/segmenter.hpp"
#include "hpac/tensor.hpp"

namespace hpac {

struct ModelConfig {
    int k = 20;       // segment size
    int d = 96;       // embedding dimension
    int heads = 8;    // attention heads
    int kernel = 3;   // conv width (odd)
    int m_max = 64;   // segment cap per packet
    int classes = 2;
    uint64_t seed = 0;
    bool positional = true;  // false zeroes both positional tables (ablation)

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// One hierarchy level: conv-projected Q/K/V multi-head attention with a
/// residual, then target-attention pooling down to a single vector.
struct HierarchyBlock {
    Tensor q_conv;     // [kernel, d, d]
    Tensor k_conv;     // [kernel, d, d]
    Tensor v_conv;     // [kernel, d, d]
    Tensor out_proj;   // [d, d]
    Tensor context;    // [d], target vector for pooling
    Tensor pool_proj;  // [d, d]
    Tensor pool_bias;  // [d]
};

struct Model {
    ModelConfig config;
    Tensor byte_embedding;  // [257, d]
    Tensor word_pos;        // [k, d]
    HierarchyBlock word_block;
    Tensor sent_pos;        // [m_max, d]
    HierarchyBlock sent_block;
    Tensor head_weights;  // [d, classes]
    Tensor head_bias;     // [classes]

    /// All parameter tensors with stable names, in a fixed order.
    std::vector<std::pair<std::string, Tensor>> parameters() const;
    std::size_t parameter_count() const;
    Model clone() const;
};

/// Deterministic initialization: Glorot-uniform weights, zero biases,
/// uniform(-0.05, 0.05) embedding and positional tables.
Model init_model(const ModelConfig& config);

/// Runs one hierarchy level over a [L, d] sequence. Masked rows are zeroed at
/// entry, excluded from attention, and get pooling weight exactly 0; a fully
/// masked input yields the zero vector. alpha_out, when given, receives the
/// pooling weights.
Tensor hierarchy_forward(const HierarchyBlock& block, const Tensor& inputs,
                         std::span<const uint8_t> mask, int heads, Tensor* alpha_out = nullptr);

struct ForwardResult {
    Tensor probs;  // [B, classes], rows sum to 1
    /// Post-lookup word embeddings, one [k, d] tensor per packet per segment;
    /// the injection point for embedding-space attacks.
    std::vector<std::vector<Tensor>> word_embeddings;
};

ForwardResult forward(const Model& model, const Batch& batch);

/// Same pipeline, but the word embeddings are supplied by the caller instead
/// of looked up (embeddings[b][s] shaped [k, d]).
ForwardResult forward_with_embeddings(const Model& model, const Batch& batch,
                                      const std::vector<std::vector<Tensor>>& embeddings);

/// Thresholded class decisions from probability rows: 1 when the
/// malicious-class probability reaches the threshold.
std::vector<int> predict(const Tensor& probs, double threshold = 0.5);

/// Scoped requires_grad=false over all model parameters, so forward passes
/// build no graph (inference) or track only non-parameter leaves (attacks).
struct FrozenParams {
    explicit FrozenParams(const Model& model) {
        for (auto& [name, t] : model.parameters()) {
            if (t.node()->requires_grad) {
                t.node()->requires_grad = false;
                frozen.push_back(t.node());
            }
        }
    }
    ~FrozenParams() {
        for (auto& node : frozen) node->requires_grad = true;
    }
    FrozenParams(const FrozenParams&) = delete;
    FrozenParams& operator=(const FrozenParams&) = delete;
    std::vector<TensorNode> frozen;
};

}  // namespace hpac
