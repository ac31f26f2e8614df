#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "camo/rng.hpp"
#include "camo/tensor.hpp"

namespace camo {

struct ModelConfig {
    int vocab_size = 512;
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 256;
    int max_seq_len = 128;
    bool use_rmsnorm = true;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& json);
};

// Residual-stream snapshots from one forward pass: layers[0] is the
// embedding+position output, layers[l] the state after block l. The mask
// marks generation tokens (prompt and trigger positions are 0).
struct ActivationTrace {
    std::vector<Tensor> layers;
    std::vector<int> tokens;
    std::vector<std::uint8_t> generation_mask;
};

// Decoder-only transformer: pre-norm blocks, multi-head causal attention,
// GELU feed-forward, fixed sinusoidal positions, no final norm so the
// unembedding of the last residual state reproduces the logits exactly.
class TransformerLM {
public:
    TransformerLM() = default;
    explicit TransformerLM(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    // Logits [T x V]. With `trace`, captures every residual state; when
    // keep_graph is false the captured states are detached from the tape.
    Tensor forward(const std::vector<int>& tokens, ActivationTrace* trace = nullptr,
                   bool keep_graph = false) const;

    // Samples n_tokens continuations (argmax when temperature == 0; ties take
    // the lowest id). Returns prompt + completion.
    std::vector<int> generate(const std::vector<int>& prompt, int n_tokens, double temperature,
                              Rng& rng) const;

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::int64_t parameter_count() const;

    // Copy of one input-embedding row.
    std::vector<double> token_embedding(int token_id) const;

    TransformerLM clone() const;  // deep copy, same config
    void freeze();                // drops requires_grad on every parameter
    std::string parameter_hash() const;

    void save(const std::filesystem::path& path) const;
    static TransformerLM load(const std::filesystem::path& path);

private:
    struct Layer {
        Tensor norm1_gain, norm1_bias;
        Tensor wq, wk, wv, wo;
        Tensor norm2_gain, norm2_bias;
        Tensor w1, b1, w2, b2;
    };

    Tensor norm(const Tensor& x, const Tensor& gain, const Tensor& bias) const;

    ModelConfig cfg_;
    Tensor tok_emb_;   // [V x d]
    Tensor pos_enc_;   // [max_seq_len x d], constant
    std::vector<Layer> layers_;
    Tensor unemb_;     // [d x V]
};

// One sequence of a KL batch: token ids plus the generation mask aligned to
// them (mask[t] == 1 means token t was sampled, not prompt/trigger).
struct KlBatchItem {
    std::vector<int> tokens;
    std::vector<std::uint8_t> generation_mask;
};

// Mean over generation-token positions of the next-token KL between the
// frozen reference and the model. Default direction is KL(ref || model);
// reverse=true gives KL(model || ref). Differentiable w.r.t. model only.
Tensor kl_to_reference(const TransformerLM& model, const TransformerLM& ref,
                       const std::vector<KlBatchItem>& batch, bool reverse = false);

// Average per-token cross-entropy of the model on full sequences (teacher
// forcing, next-token targets, all positions).
double sequence_cross_entropy(const TransformerLM& model,
                              const std::vector<std::vector<int>>& sequences);

// Masked variant: token_masks align to the sequences; the prediction of
// token t+1 is counted only when its mask entry is 1. The mean runs over all
// counted positions of the whole batch.
double sequence_cross_entropy(const TransformerLM& model,
                              const std::vector<std::vector<int>>& sequences,
                              const std::vector<std::vector<std::uint8_t>>& token_masks);

struct LmTrainConfig {
    double lr = 3e-4;
    int batch_size = 16;
    int epochs = 3;
    double weight_decay = 0.01;
    int warmup_steps = 100;
    double val_fraction = 0.05;
    std::uint64_t seed = 1;
    // post-training gate: final validation CE must beat the corpus
    // unigram entropy (disable only in micro-scale tests)
    bool require_beat_unigram = true;
};

struct LmTrainResult {
    std::vector<double> step_loss;
    double final_val_ce = 0.0;
    double unigram_entropy = 0.0;
    int steps = 0;
};

// Next-token unigram entropy of the target distribution (positions 1..T-1).
double corpus_unigram_entropy(const std::vector<std::vector<int>>& sequences);

LmTrainResult train_base_lm(TransformerLM& model, const std::vector<std::vector<int>>& sequences,
                            const LmTrainConfig& cfg);

}  // namespace camo
