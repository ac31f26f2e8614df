#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "camo/corpus.hpp"
#include "camo/model.hpp"
#include "camo/probes.hpp"

namespace camo {

struct FinetuneConfig {
    double lambda_lm = 0.1;  // weight on the KL term; 1-lambda_lm on the probe term
    double lr = 2e-5;
    int batch_size = 16;
    int epochs = 3;
    int warmup_steps = 100;
    double weight_decay = 0.01;
    int completion_tokens = 12;
    double completion_temperature = 1.0;
    std::uint64_t seed = 11;

    void validate() const;
};

// Frozen probes the fine-tune optimizes against, keyed by concept. Several
// probes per concept are allowed (e.g. different seeds on the same layer).
struct FrozenProbeSet {
    std::map<std::string, std::vector<Probe>> probes;

    void require_frozen() const;  // throws ContractError on any unfrozen probe
    std::string hash() const;     // order-stable combined parameter hash
    const std::vector<Probe>& for_concept(const std::string& name) const;
};

// One fine-tuning item: the probe pass runs teacher-forced on the dataset
// response; the KL pass runs on a cached base-model completion of the same
// prompt. Masks mark the scored/penalized positions.
struct TuneExample {
    std::vector<int> obf_tokens;
    std::vector<std::uint8_t> obf_mask;
    std::vector<int> kl_tokens;
    std::vector<std::uint8_t> kl_mask;
    std::string concept_name;
    int probe_target = 1;
};

// Samples one completion per example prompt from the (frozen) base model.
std::vector<std::vector<int>> generate_reference_completions(const TransformerLM& base,
                                                             const std::vector<Example>& examples,
                                                             const FinetuneConfig& cfg);

std::vector<TuneExample> build_tune_examples(const std::vector<Example>& examples,
                                             const std::vector<std::vector<int>>& completions);

// Mean over the batch of (probe score - target)^2, scores taken from the
// model's current hidden states. Gradients reach only model parameters; the
// probes must be frozen.
Tensor obfuscation_loss(const TransformerLM& model, const FrozenProbeSet& probes,
                        const std::vector<TuneExample>& batch);

struct TotalLoss {
    Tensor loss;
    double lm_value = 0.0;   // KL term, 0 when lambda_lm == 0
    double obf_value = 0.0;  // probe term, 0 when lambda_lm == 1
};

// lambda_lm * KL(ref || model) + (1 - lambda_lm) * obfuscation MSE.
// Endpoint lambdas skip the unused term entirely.
TotalLoss total_loss(const TransformerLM& model, const TransformerLM& ref,
                     const FrozenProbeSet& probes, const std::vector<TuneExample>& batch,
                     double lambda_lm);

struct FinetuneResult {
    TransformerLM organism;
    std::vector<double> lm_curve;   // per optimizer step
    std::vector<double> obf_curve;  // per optimizer step
    std::string probe_hash;         // verified identical pre/post
    std::string ref_hash;           // verified identical pre/post
};

FinetuneResult finetune(const TransformerLM& base, const FrozenProbeSet& probes,
                        const std::vector<TuneExample>& examples, const FinetuneConfig& cfg);

}  // namespace camo
