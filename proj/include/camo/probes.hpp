#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "camo/model.hpp"
#include "camo/rng.hpp"
#include "camo/tensor.hpp"

namespace camo {

enum class ProbeArch { linear, mlp, attention };
enum class EnsembleMode { mean, max };

std::string probe_arch_name(ProbeArch arch);
ProbeArch probe_arch_from_name(const std::string& name);

// Hidden states for one example at a single layer, plus the generation mask.
struct ProbeExample {
    Tensor hidden;  // [T x d]
    std::vector<std::uint8_t> generation_mask;
};

// Activation monitor at one residual-stream layer. Three architectures:
//   linear     sigma(w.h + b) per token, mean over generation tokens
//   mlp        sigma(w2.relu(W1.h + b1) + b2) per token, same aggregation
//   attention  K softmax(H q_k) poolings, sigma(sum_k c_k.w_k + b)
class Probe {
public:
    Probe() = default;
    static Probe make_linear(int layer, int d_model, Rng& rng);
    static Probe make_mlp(int layer, int d_model, int hidden, Rng& rng);
    static Probe make_attention(int layer, int d_model, int n_queries, Rng& rng);

    ProbeArch arch() const { return arch_; }
    int layer() const { return layer_; }
    int d_model() const { return d_model_; }

    bool frozen() const { return frozen_; }
    void freeze();

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::string parameter_hash() const;

    // Differentiable sequence score from the probe-layer hidden states.
    // Gradients flow into `hidden` (and the probe's own parameters when it
    // is not frozen).
    Tensor score_sequence_from_hidden(const Tensor& hidden,
                                      const std::vector<std::uint8_t>& generation_mask) const;

    // Per-token scores at the probe's layer (token-level probes only;
    // attention probes have no per-token decomposition).
    std::vector<double> score_tokens(const ActivationTrace& trace) const;
    // Mean of masked token scores (token-level) or attention pooling over
    // masked positions. Requires a nonempty generation mask.
    double score_sequence(const ActivationTrace& trace) const;

    void save(const std::filesystem::path& path) const;
    static Probe load(const std::filesystem::path& path);

    // Direction the probe reads at its layer: w for linear probes (the
    // mechanism analyses project activation shifts onto this).
    std::vector<double> linear_direction() const;

    const Tensor& layer_state(const ActivationTrace& trace) const;

private:

    ProbeArch arch_ = ProbeArch::linear;
    int layer_ = 0;
    int d_model_ = 0;
    int hidden_ = 0;     // mlp
    int n_queries_ = 0;  // attention
    bool frozen_ = false;

    Tensor w_, b_;        // linear: w [d], b [1]
    Tensor w1_, b1_, w2_, b2_;  // mlp
    Tensor queries_, outs_;     // attention: [K x d] each
};

// One probe per layer, combined by mean (default) or max.
class ProbeEnsemble {
public:
    ProbeEnsemble(std::vector<Probe> members, EnsembleMode mode);

    double score(const ActivationTrace& trace) const;
    const std::vector<Probe>& members() const { return members_; }
    EnsembleMode mode() const { return mode_; }
    std::vector<int> layers() const;

private:
    std::vector<Probe> members_;
    EnsembleMode mode_;
};

struct ProbeTrainConfig {
    double lr = 1e-3;
    int batch_size = 16;
    int max_epochs = 60;
    int patience = 5;  // evaluations without val-AUROC improvement
    double val_fraction = 0.2;
    int mlp_hidden = 64;
    int attention_queries = 4;
    std::uint64_t seed = 7;
};

struct ProbeTrainResult {
    Probe probe;
    double best_val_auroc = 0.0;
    std::vector<double> val_auroc_history;
    int epochs_run = 0;
};

// Binary cross-entropy on sequence scores, AdamW, early stopping on
// validation AUROC; returns the parameters from the best evaluation.
ProbeTrainResult train_probe(ProbeArch arch, int layer, const std::vector<ProbeExample>& positives,
                             const std::vector<ProbeExample>& negatives,
                             const ProbeTrainConfig& cfg);

}  // namespace camo
