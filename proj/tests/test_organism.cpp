#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "camo/organism.hpp"

using namespace camo;

namespace {

struct MicroWorld {
    ConceptLibrary lib;
    ConceptSplit split;
    TransformerLM base;
    FrozenProbeSet probes;
    std::vector<TuneExample> tune;
    FinetuneConfig cfg;

    MicroWorld() : split(split_concepts(lib, 41)), base(micro_model_cfg()) {
        base.freeze();
        Rng rng(13);
        for (const std::string& c : {split.train[0], split.train[1]}) {
            Probe p = Probe::make_linear(1, 16, rng);
            p.freeze();
            probes.probes[c].push_back(std::move(p));
        }
        std::vector<Example> exs;
        ScenarioMix mix;
        for (const Example& ex :
             generate_finetune_corpus(lib, split, 240, mix, 7)) {
            if (probes.probes.count(ex.labels[0]) &&
                (ex.trigger_concept.empty() || probes.probes.count(ex.trigger_concept)))
                exs.push_back(ex);
            if (exs.size() == 12) break;
        }
        REQUIRE(exs.size() == 12);
        cfg.epochs = 1;
        cfg.batch_size = 4;
        cfg.warmup_steps = 2;
        cfg.lr = 1e-3;
        cfg.completion_tokens = 6;
        auto completions = generate_reference_completions(base, exs, cfg);
        tune = build_tune_examples(exs, completions);
    }

    static ModelConfig micro_model_cfg() {
        ModelConfig mc;
        mc.vocab_size = 512;
        mc.d_model = 16;
        mc.n_layers = 2;
        mc.n_heads = 2;
        mc.d_ff = 32;
        mc.max_seq_len = 64;
        mc.seed = 21;
        return mc;
    }
};

}  // namespace

TEST_CASE("frozen probe set contract") {
    Rng rng(1);
    FrozenProbeSet fps;
    Probe p = Probe::make_linear(0, 8, rng);
    fps.probes["azuri"].push_back(p);
    CHECK_THROWS_AS(fps.require_frozen(), ContractError);
    fps.probes["azuri"][0].freeze();
    fps.require_frozen();

    std::string h1 = fps.hash();
    Probe q = Probe::make_linear(0, 8, rng);
    q.freeze();
    fps.probes["borin"].push_back(q);
    CHECK(fps.hash() != h1);
    CHECK(fps.for_concept("azuri").size() == 1);
    CHECK_THROWS_AS((void)fps.for_concept("ceruli"), ContractError);
}

TEST_CASE("finetune config validation") {
    FinetuneConfig c;
    c.lambda_lm = 1.5;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = FinetuneConfig{};
    c.lr = -1.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    FinetuneConfig{}.validate();
}

TEST_CASE("reference completions and tune example assembly") {
    MicroWorld w;
    CHECK(w.tune.size() == 12);
    for (const TuneExample& te : w.tune) {
        CHECK(te.obf_tokens.size() == te.obf_mask.size());
        CHECK(te.kl_tokens.size() == te.kl_mask.size());
        // completion positions: exactly completion_tokens masked at the tail
        std::size_t kl_masked = 0;
        for (std::size_t i = 0; i < te.kl_mask.size(); ++i)
            if (te.kl_mask[i]) {
                ++kl_masked;
                CHECK(i >= te.kl_tokens.size() - 6);
            }
        CHECK(kl_masked == 6);
        std::size_t obf_masked = 0;
        for (auto b : te.obf_mask) obf_masked += b;
        CHECK(obf_masked > 0);
        CHECK((te.probe_target == 0 || te.probe_target == 1));
        CHECK(w.probes.probes.count(te.concept_name) == 1);
    }

    // completions are deterministic in the config seed
    MicroWorld w2;
    CHECK(w2.tune[0].kl_tokens == w.tune[0].kl_tokens);
}

TEST_CASE("obfuscation loss reaches model parameters only") {
    MicroWorld w;
    TransformerLM model = w.base.clone();  // trainable copy
    std::vector<TuneExample> batch(w.tune.begin(), w.tune.begin() + 4);
    Tensor loss = obfuscation_loss(model, w.probes, batch);
    CHECK(loss.item() >= 0.0);
    loss.backward();
    std::size_t with_grad = 0;
    for (const Tensor& p : model.parameters()) with_grad += p.has_grad() ? 1 : 0;
    CHECK(with_grad > 0);
    for (const auto& [c, ps] : w.probes.probes)
        for (const Probe& p : ps)
            for (const Tensor& t : p.parameters()) CHECK_FALSE(t.has_grad());

    // unfrozen probes are rejected
    FrozenProbeSet loose;
    Rng rng(2);
    loose.probes[w.split.train[0]].push_back(Probe::make_linear(1, 16, rng));
    CHECK_THROWS_AS((void)obfuscation_loss(model, loose, batch), ContractError);
}

TEST_CASE("total loss composes the two terms by lambda") {
    MicroWorld w;
    TransformerLM model = w.base.clone();
    std::vector<TuneExample> batch(w.tune.begin(), w.tune.begin() + 4);

    TotalLoss mid = total_loss(model, w.base, w.probes, batch, 0.3);
    CHECK(mid.loss.item() ==
          doctest::Approx(0.3 * mid.lm_value + 0.7 * mid.obf_value).epsilon(1e-12));
    CHECK(mid.obf_value > 0.0);

    TotalLoss lm_only = total_loss(model, w.base, w.probes, batch, 1.0);
    CHECK(lm_only.obf_value == 0.0);
    CHECK(lm_only.loss.item() == doctest::Approx(lm_only.lm_value).epsilon(1e-12));
    // the model equals the reference here, so the KL term is ~0
    CHECK(lm_only.lm_value == doctest::Approx(0.0).epsilon(1e-10));

    TotalLoss obf_only = total_loss(model, w.base, w.probes, batch, 0.0);
    CHECK(obf_only.lm_value == 0.0);
    CHECK(obf_only.loss.item() == doctest::Approx(obf_only.obf_value).epsilon(1e-12));
}

TEST_CASE("finetune freezes what must stay frozen and moves the organism") {
    MicroWorld w;
    const std::string probe_hash_before = w.probes.hash();
    const std::string base_hash_before = w.base.parameter_hash();

    FinetuneResult res = finetune(w.base, w.probes, w.tune, w.cfg);

    CHECK(res.probe_hash == probe_hash_before);
    CHECK(w.probes.hash() == probe_hash_before);
    CHECK(res.ref_hash == base_hash_before);
    CHECK(w.base.parameter_hash() == base_hash_before);
    CHECK(res.organism.parameter_hash() != base_hash_before);
    CHECK(res.lm_curve.size() == res.obf_curve.size());
    CHECK(res.lm_curve.size() == 3);  // 12 examples / batch 4
    for (double v : res.obf_curve) CHECK(std::isfinite(v));

    // determinism
    FinetuneResult res2 = finetune(w.base, w.probes, w.tune, w.cfg);
    CHECK(res2.organism.parameter_hash() == res.organism.parameter_hash());

    // lambda = 1 leaves the probe term untouched and barely moves the model
    FinetuneConfig lam1 = w.cfg;
    lam1.lambda_lm = 1.0;
    FinetuneResult ctrl = finetune(w.base, w.probes, w.tune, lam1);
    for (double v : ctrl.obf_curve) CHECK(v == 0.0);
    CHECK(ctrl.probe_hash == probe_hash_before);
}
