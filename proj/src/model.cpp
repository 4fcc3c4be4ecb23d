#include "hpac/model.hpp"

#include <cmath>
#include <random>

namespace hpac {

namespace {

Tensor glorot(std::mt19937_64& rng, std::vector<int> shape, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return Tensor::leaf(std::move(shape), std::move(data));
}

Tensor uniform_table(std::mt19937_64& rng, std::vector<int> shape, double half_range) {
    std::uniform_real_distribution<double> dist(-half_range, half_range);
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return Tensor::leaf(std::move(shape), std::move(data));
}

HierarchyBlock init_block(std::mt19937_64& rng, int kernel, int d) {
    HierarchyBlock block;
    const double conv_fan = double(kernel) * d;
    block.q_conv = glorot(rng, {kernel, d, d}, conv_fan, conv_fan);
    block.k_conv = glorot(rng, {kernel, d, d}, conv_fan, conv_fan);
    block.v_conv = glorot(rng, {kernel, d, d}, conv_fan, conv_fan);
    block.out_proj = glorot(rng, {d, d}, d, d);
    block.context = glorot(rng, {d}, d, 1);
    block.pool_proj = glorot(rng, {d, d}, d, d);
    block.pool_bias = Tensor::leaf({d}, std::vector<double>(std::size_t(d), 0.0));
    return block;
}

Tensor clone_leaf(const Tensor& t) {
    return Tensor::leaf(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
}

}  // namespace

void ModelConfig::validate() const {
    if (k < kMinSegmentSize)
        throw ConfigError("segment size must be at least " + std::to_string(kMinSegmentSize) +
                          ", got " + std::to_string(k));
    if (d < 1 || heads < 1) throw ConfigError("embedding dimension and head count must be positive");
    if (d % heads != 0)
        throw ConfigError("embedding dimension " + std::to_string(d) +
                          " is not divisible by " + std::to_string(heads) + " heads");
    if (kernel < 1 || kernel % 2 == 0)
        throw ConfigError("conv kernel width must be odd and positive, got " +
                          std::to_string(kernel));
    if (m_max < 1) throw ConfigError("segment cap must be at least 1");
    if (classes != 2) throw ConfigError("classifier is binary; classes must be 2");
}

Model init_model(const ModelConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    Model model;
    model.config = config;
    model.byte_embedding = uniform_table(rng, {kVocabSize, config.d}, 0.05);
    model.word_pos = uniform_table(rng, {config.k, config.d}, 0.05);
    model.word_block = init_block(rng, config.kernel, config.d);
    model.sent_pos = uniform_table(rng, {config.m_max, config.d}, 0.05);
    model.sent_block = init_block(rng, config.kernel, config.d);
    model.head_weights = glorot(rng, {config.d, config.classes}, config.d, config.classes);
    model.head_bias =
        Tensor::leaf({config.classes}, std::vector<double>(std::size_t(config.classes), 0.0));
    if (!config.positional) {
        for (auto& v : model.word_pos.mutable_values()) v = 0.0;
        for (auto& v : model.sent_pos.mutable_values()) v = 0.0;
    }
    return model;
}

std::vector<std::pair<std::string, Tensor>> Model::parameters() const {
    auto block_params = [](const char* prefix, const HierarchyBlock& b,
                           std::vector<std::pair<std::string, Tensor>>& out) {
        const std::string p(prefix);
        out.emplace_back(p + ".q_conv", b.q_conv);
        out.emplace_back(p + ".k_conv", b.k_conv);
        out.emplace_back(p + ".v_conv", b.v_conv);
        out.emplace_back(p + ".out_proj", b.out_proj);
        out.emplace_back(p + ".context", b.context);
        out.emplace_back(p + ".pool_proj", b.pool_proj);
        out.emplace_back(p + ".pool_bias", b.pool_bias);
    };
    std::vector<std::pair<std::string, Tensor>> params;
    params.emplace_back("byte_embedding", byte_embedding);
    params.emplace_back("word_pos", word_pos);
    block_params("word", word_block, params);
    params.emplace_back("sent_pos", sent_pos);
    block_params("sent", sent_block, params);
    params.emplace_back("head.weights", head_weights);
    params.emplace_back("head.bias", head_bias);
    return params;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.size();
    return n;
}

Model Model::clone() const {
    Model copy;
    copy.config = config;
    copy.byte_embedding = clone_leaf(byte_embedding);
    copy.word_pos = clone_leaf(word_pos);
    copy.sent_pos = clone_leaf(sent_pos);
    copy.head_weights = clone_leaf(head_weights);
    copy.head_bias = clone_leaf(head_bias);
    auto clone_block = [](const HierarchyBlock& b) {
        HierarchyBlock c;
        c.q_conv = clone_leaf(b.q_conv);
        c.k_conv = clone_leaf(b.k_conv);
        c.v_conv = clone_leaf(b.v_conv);
        c.out_proj = clone_leaf(b.out_proj);
        c.context = clone_leaf(b.context);
        c.pool_proj = clone_leaf(b.pool_proj);
        c.pool_bias = clone_leaf(b.pool_bias);
        return c;
    };
    copy.word_block = clone_block(word_block);
    copy.sent_block = clone_block(sent_block);
    return copy;
}

Tensor hierarchy_forward(const HierarchyBlock& block, const Tensor& inputs,
                         std::span<const uint8_t> mask, int heads, Tensor* alpha_out) {
    const int L = inputs.dim(0);
    const int d = inputs.dim(1);
    if (int(mask.size()) != L)
        throw ShapeError("hierarchy_forward: mask length " + std::to_string(mask.size()) +
                         " does not match sequence " + shape_str(inputs.shape()));
    if (d % heads != 0)
        throw ShapeError("hierarchy_forward: dimension " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) + " heads");

    const Tensor x = mask_rows(inputs, mask);
    const Tensor q = conv1d_same(x, block.q_conv);
    const Tensor k = conv1d_same(x, block.k_conv);
    const Tensor v = conv1d_same(x, block.v_conv);

    const int dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));
    std::vector<Tensor> head_ctx;
    head_ctx.reserve(std::size_t(heads));
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = slice_lastdim(q, h * dh, dh);
        const Tensor kh = slice_lastdim(k, h * dh, dh);
        const Tensor vh = slice_lastdim(v, h * dh, dh);
        const Tensor weights =
            softmax_lastdim_masked(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), mask);
        head_ctx.push_back(matmul(weights, vh));
    }
    const Tensor ctx = concat_lastdim(head_ctx);
    const Tensor y = add(elu(matmul(ctx, block.out_proj)), x);

    const Tensor u = tanh(add_rowvec(matmul(y, block.pool_proj), block.pool_bias));
    const Tensor scores = reshape(matmul(u, reshape(block.context, {d, 1})), {L});
    const Tensor alpha = softmax_lastdim_masked(scores, mask);
    if (alpha_out) *alpha_out = alpha;
    return reshape(matmul(reshape(alpha, {1, L}), y), {d});
}

namespace {

ForwardResult forward_impl(const Model& model, const Batch& batch,
                           const std::vector<std::vector<Tensor>>* override_embeddings) {
    const ModelConfig& cfg = model.config;
    if (batch.k != cfg.k)
        throw ShapeError("forward: batch segment size " + std::to_string(batch.k) +
                         " does not match model k " + std::to_string(cfg.k));
    if (batch.segments > cfg.m_max)
        throw ShapeError("forward: batch has " + std::to_string(batch.segments) +
                         " segments, model caps at " + std::to_string(cfg.m_max));
    const int B = batch.batch_size;
    const int M = batch.segments;
    const int k = batch.k;

    ForwardResult result;
    result.word_embeddings.resize(std::size_t(B));
    std::vector<Tensor> logit_rows;
    logit_rows.reserve(std::size_t(B));

    for (int b = 0; b < B; ++b) {
        std::vector<Tensor> segment_vectors;
        segment_vectors.reserve(std::size_t(M));
        auto& packet_embeddings = result.word_embeddings[std::size_t(b)];
        packet_embeddings.reserve(std::size_t(M));
        for (int s = 0; s < M; ++s) {
            Tensor e;
            if (override_embeddings) {
                e = (*override_embeddings)[std::size_t(b)][std::size_t(s)];
                if (e.rank() != 2 || e.dim(0) != k || e.dim(1) != cfg.d)
                    throw ShapeError("forward: embedding override " + shape_str(e.shape()) +
                                     " does not match [" + std::to_string(k) + "," +
                                     std::to_string(cfg.d) + "]");
            } else {
                std::span<const int> ids(batch.packet_tokens(b) + std::size_t(s) * k,
                                         std::size_t(k));
                e = embedding_lookup(model.byte_embedding, ids);
                e = add(e, model.word_pos);
            }
            packet_embeddings.push_back(e);
            std::span<const uint8_t> tok_mask(batch.packet_token_mask(b) + std::size_t(s) * k,
                                              std::size_t(k));
            segment_vectors.push_back(
                hierarchy_forward(model.word_block, e, tok_mask, cfg.heads));
        }
        Tensor sentence_in = stack_rows(segment_vectors);
        sentence_in = add(sentence_in, slice_rows(model.sent_pos, 0, M));
        std::span<const uint8_t> seg_mask(batch.packet_segment_mask(b), std::size_t(M));
        const Tensor packet_vec =
            hierarchy_forward(model.sent_block, sentence_in, seg_mask, cfg.heads);
        const Tensor logits = add_rowvec(
            matmul(reshape(packet_vec, {1, cfg.d}), model.head_weights), model.head_bias);
        logit_rows.push_back(reshape(logits, {cfg.classes}));
    }

    const std::vector<uint8_t> all_true(std::size_t(cfg.classes), 1);
    result.probs = softmax_lastdim_masked(stack_rows(logit_rows), all_true);
    return result;
}

}  // namespace

ForwardResult forward(const Model& model, const Batch& batch) {
    return forward_impl(model, batch, nullptr);
}

ForwardResult forward_with_embeddings(const Model& model, const Batch& batch,
                                      const std::vector<std::vector<Tensor>>& embeddings) {
    if (int(embeddings.size()) != batch.batch_size)
        throw ShapeError("forward: " + std::to_string(embeddings.size()) +
                         " embedding packets for batch of " + std::to_string(batch.batch_size));
    for (const auto& packet : embeddings)
        if (int(packet.size()) != batch.segments)
            throw ShapeError("forward: embedding segment count " +
                             std::to_string(packet.size()) + " does not match batch " +
                             std::to_string(batch.segments));
    return forward_impl(model, batch, &embeddings);
}

std::vector<int> predict(const Tensor& probs, double threshold) {
    if (probs.rank() != 2 || probs.dim(1) != 2)
        throw ShapeError("predict: expected [B,2] probabilities, got " + shape_str(probs.shape()));
    const int B = probs.dim(0);
    std::vector<int> labels(std::size_t(B), 0);
    const double* p = probs.values().data();
    for (int b = 0; b < B; ++b) labels[std::size_t(b)] = p[std::size_t(b) * 2 + 1] >= threshold ? 1 : 0;
    return labels;
}

}  // namespace hpac
