#include "camo/organism.hpp"

#include <algorithm>
#include <cmath>

#include "camo/common.hpp"
#include "camo/optim.hpp"

namespace camo {

void FinetuneConfig::validate() const {
    check_input(lambda_lm >= 0.0 && lambda_lm <= 1.0, "lambda_lm must lie in [0, 1]");
    check_input(lr > 0.0, "lr must be positive");
    check_input(batch_size > 0, "batch_size must be positive");
    check_input(epochs > 0, "epochs must be positive");
    check_input(warmup_steps >= 0, "warmup_steps must be non-negative");
    check_input(weight_decay >= 0.0, "weight_decay must be non-negative");
    check_input(completion_tokens > 0, "completion_tokens must be positive");
    check_input(completion_temperature > 0.0, "completion_temperature must be positive");
}

void FrozenProbeSet::require_frozen() const {
    for (const auto& [name, list] : probes) {
        check_contract(!list.empty(), "probe set holds an empty list for concept " + name);
        for (const Probe& p : list) {
            check_contract(p.frozen(), "probe for concept " + name + " is not frozen");
        }
    }
}

std::string FrozenProbeSet::hash() const {
    Hasher h;
    for (const auto& [name, list] : probes) {  // std::map gives stable order
        h.update(name);
        h.update("\n");
        for (const Probe& p : list) {
            h.update(p.parameter_hash());
            h.update("\n");
        }
    }
    return h.hex();
}

const std::vector<Probe>& FrozenProbeSet::for_concept(const std::string& name) const {
    auto it = probes.find(name);
    check_contract(it != probes.end(), "no frozen probe registered for concept " + name);
    return it->second;
}

std::vector<std::vector<int>> generate_reference_completions(const TransformerLM& base,
                                                             const std::vector<Example>& examples,
                                                             const FinetuneConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Rng gen_rng = rng.derive("ref_completions");
    std::vector<std::vector<int>> out;
    out.reserve(examples.size());
    for (const Example& ex : examples) {
        // generate() echoes the prompt; keep only the new tokens
        auto full = base.generate(ex.prompt, cfg.completion_tokens, cfg.completion_temperature,
                                  gen_rng);
        out.emplace_back(full.begin() + static_cast<std::ptrdiff_t>(ex.prompt.size()), full.end());
    }
    return out;
}

std::vector<TuneExample> build_tune_examples(const std::vector<Example>& examples,
                                             const std::vector<std::vector<int>>& completions) {
    check_input(examples.size() == completions.size(),
                "examples and completions must align one-to-one");
    std::vector<TuneExample> out;
    out.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Example& ex = examples[i];
        check_input(ex.labels.size() == 1, "tune examples need exactly one concept label");
        check_input(!completions[i].empty(), "empty reference completion");
        TuneExample t;
        t.obf_tokens = ex.tokens();
        t.obf_mask = ex.generation_mask();
        t.kl_tokens = ex.prompt;
        t.kl_tokens.insert(t.kl_tokens.end(), completions[i].begin(), completions[i].end());
        t.kl_mask.assign(ex.prompt.size(), 0);
        t.kl_mask.insert(t.kl_mask.end(), completions[i].size(), 1);
        t.concept_name = ex.labels[0];
        t.probe_target = ex.probe_target;
        out.push_back(std::move(t));
    }
    return out;
}

Tensor obfuscation_loss(const TransformerLM& model, const FrozenProbeSet& probes,
                        const std::vector<TuneExample>& batch) {
    check_input(!batch.empty(), "obfuscation_loss: empty batch");
    probes.require_frozen();

    std::vector<Tensor> terms;
    for (const TuneExample& ex : batch) {
        check_input(ex.probe_target == 0 || ex.probe_target == 1, "probe target must be 0 or 1");
        ActivationTrace trace;
        model.forward(ex.obf_tokens, &trace, /*keep_graph=*/true);
        trace.generation_mask = ex.obf_mask;
        const auto& plist = probes.for_concept(ex.concept_name);
        Tensor target = Tensor::scalar(static_cast<double>(ex.probe_target));
        double w = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(plist.size()));
        for (const Probe& p : plist) {
            Tensor score = p.score_sequence_from_hidden(p.layer_state(trace), ex.obf_mask);
            terms.push_back(scale(mse(score, target), w));
        }
    }
    return sum_scalars(terms);
}

TotalLoss total_loss(const TransformerLM& model, const TransformerLM& ref,
                     const FrozenProbeSet& probes, const std::vector<TuneExample>& batch,
                     double lambda_lm) {
    check_input(lambda_lm >= 0.0 && lambda_lm <= 1.0, "lambda_lm must lie in [0, 1]");
    check_input(!batch.empty(), "total_loss: empty batch");

    TotalLoss out;
    if (lambda_lm > 0.0) {
        std::vector<KlBatchItem> kl_batch;
        kl_batch.reserve(batch.size());
        for (const TuneExample& ex : batch) kl_batch.push_back({ex.kl_tokens, ex.kl_mask});
        Tensor kl = kl_to_reference(model, ref, kl_batch);
        out.lm_value = kl.item();
        if (lambda_lm == 1.0) {
            out.loss = kl;
            return out;
        }
        Tensor obf = obfuscation_loss(model, probes, batch);
        out.obf_value = obf.item();
        out.loss = add(scale(kl, lambda_lm), scale(obf, 1.0 - lambda_lm));
        return out;
    }
    Tensor obf = obfuscation_loss(model, probes, batch);
    out.obf_value = obf.item();
    out.loss = obf;
    return out;
}

FinetuneResult finetune(const TransformerLM& base, const FrozenProbeSet& probes,
                        const std::vector<TuneExample>& examples, const FinetuneConfig& cfg) {
    cfg.validate();
    check_input(!examples.empty(), "finetune: empty example set");
    probes.require_frozen();
    if (cfg.lambda_lm < 1.0) {
        for (const TuneExample& ex : examples) probes.for_concept(ex.concept_name);
    }

    TransformerLM ref = base.clone();
    ref.freeze();
    TransformerLM model = base.clone();

    FinetuneResult result{std::move(model), {}, {}, probes.hash(), ref.parameter_hash()};

    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    AdamW opt(result.organism.parameters(), ocfg);

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double first_obf = -1.0;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = rng.derive("epoch" + std::to_string(epoch));
        epoch_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<TuneExample> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);

            ++step;
            opt.set_lr(warmup_constant_lr(cfg.lr, step, cfg.warmup_steps));
            TotalLoss tl = total_loss(result.organism, ref, probes, batch, cfg.lambda_lm);
            double v = tl.loss.item();
            check(std::isfinite(v), "fine-tune loss diverged (non-finite) at step " +
                                        std::to_string(step));
            if (first_obf < 0.0 && cfg.lambda_lm < 1.0) first_obf = std::max(tl.obf_value, 1e-3);
            if (first_obf > 0.0) {
                check(tl.obf_value <= 50.0 * first_obf,
                      "fine-tune loss diverged (probe term exploded) at step " +
                          std::to_string(step));
            }
            opt.zero_grad();
            tl.loss.backward();
            opt.step();
            result.lm_curve.push_back(tl.lm_value);
            result.obf_curve.push_back(tl.obf_value);
        }
    }

    check_contract(probes.hash() == result.probe_hash, "frozen probes changed during fine-tune");
    check_contract(ref.parameter_hash() == result.ref_hash,
                   "frozen reference changed during fine-tune");
    return result;
}

}  // namespace camo
