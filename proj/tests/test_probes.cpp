#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "camo/probes.hpp"

using namespace camo;

namespace {

// planted two-class activations: class 1 shifted along a fixed direction
std::pair<std::vector<ProbeExample>, std::vector<ProbeExample>> planted(int n_per_class, int d,
                                                                        double sep,
                                                                        std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ProbeExample> pos, neg;
    for (int i = 0; i < n_per_class; ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            const int T = 5 + static_cast<int>(rng.next_below(4));
            Tensor h = Tensor::zeros({T, d});
            std::vector<std::uint8_t> mask(static_cast<std::size_t>(T), 0);
            for (int t = 0; t < T; ++t) {
                mask[static_cast<std::size_t>(t)] = t >= 2 ? 1 : 0;
                for (int k = 0; k < d; ++k) {
                    double mu = cls == 1 && t >= 2 ? sep * (k % 2 == 0 ? 1.0 : -0.5) : 0.0;
                    h.mutable_data()[t * d + k] = mu + rng.normal(0.0, 1.0);
                }
            }
            (cls == 1 ? pos : neg).push_back(ProbeExample{h, mask});
        }
    }
    return {pos, neg};
}

ActivationTrace trace_of(const std::vector<Tensor>& layers, std::vector<std::uint8_t> mask) {
    ActivationTrace tr;
    tr.layers = layers;
    tr.tokens.assign(mask.size(), 0);
    tr.generation_mask = std::move(mask);
    return tr;
}

}  // namespace

TEST_CASE("probe construction and score ranges") {
    Rng rng(1);
    Probe lin = Probe::make_linear(2, 8, rng);
    CHECK(lin.arch() == ProbeArch::linear);
    CHECK(lin.layer() == 2);
    CHECK(lin.d_model() == 8);

    Tensor h = Tensor::randn({6, 8}, rng);
    std::vector<std::uint8_t> mask{0, 1, 1, 1, 0, 1};
    double s = lin.score_sequence_from_hidden(h, mask).item();
    CHECK(s > 0.0);
    CHECK(s < 1.0);

    // trace path agrees with the direct hidden path
    std::vector<Tensor> layers{Tensor::randn({6, 8}, rng), Tensor::randn({6, 8}, rng), h};
    CHECK(lin.score_sequence(trace_of(layers, mask)) == doctest::Approx(s).epsilon(1e-12));

    // per-token scores: masked mean equals the sequence score
    std::vector<double> tok = lin.score_tokens(trace_of(layers, mask));
    CHECK(tok.size() == 6);
    double mean = (tok[1] + tok[2] + tok[3] + tok[5]) / 4.0;
    CHECK(mean == doctest::Approx(s).epsilon(1e-12));

    Probe att = Probe::make_attention(2, 8, 3, rng);
    CHECK_THROWS_AS((void)att.score_tokens(trace_of(layers, mask)), ContractError);
    double sa = att.score_sequence(trace_of(layers, mask));
    CHECK(sa > 0.0);
    CHECK(sa < 1.0);

    CHECK_THROWS_AS((void)lin.score_sequence(trace_of(layers, {0, 0, 0, 0, 0, 0})), Error);
}

TEST_CASE("linear_direction only exists for linear probes") {
    Rng rng(2);
    Probe lin = Probe::make_linear(0, 6, rng);
    CHECK(lin.linear_direction().size() == 6);
    Probe mlp = Probe::make_mlp(0, 6, 12, rng);
    CHECK_THROWS_AS((void)mlp.linear_direction(), ContractError);
}

TEST_CASE("training separates planted classes") {
    auto [pos, neg] = planted(60, 16, 1.2, 33);
    ProbeTrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.seed = 5;

    ProbeTrainResult lin = train_probe(ProbeArch::linear, 1, pos, neg, cfg);
    CHECK(lin.best_val_auroc > 0.99);
    CHECK(lin.probe.layer() == 1);
    CHECK(lin.epochs_run > 0);
    CHECK(!lin.val_auroc_history.empty());

    ProbeTrainResult mlp = train_probe(ProbeArch::mlp, 1, pos, neg, cfg);
    CHECK(mlp.best_val_auroc > 0.95);

    ProbeTrainResult att = train_probe(ProbeArch::attention, 1, pos, neg, cfg);
    CHECK(att.best_val_auroc > 0.95);
}

TEST_CASE("training is deterministic") {
    auto [pos, neg] = planted(24, 8, 1.0, 7);
    ProbeTrainConfig cfg;
    cfg.max_epochs = 10;
    ProbeTrainResult a = train_probe(ProbeArch::linear, 0, pos, neg, cfg);
    ProbeTrainResult b = train_probe(ProbeArch::linear, 0, pos, neg, cfg);
    CHECK(a.probe.parameter_hash() == b.probe.parameter_hash());
    CHECK(a.best_val_auroc == b.best_val_auroc);
}

TEST_CASE("freeze contract") {
    Rng rng(4);
    Probe p = Probe::make_linear(0, 4, rng);
    CHECK_FALSE(p.frozen());
    for (const Tensor& t : p.parameters()) CHECK(t.requires_grad());
    p.freeze();
    CHECK(p.frozen());
    for (const Tensor& t : p.parameters()) CHECK_FALSE(t.requires_grad());
}

TEST_CASE("probe save/load round-trip") {
    Rng rng(6);
    for (Probe p : {Probe::make_linear(1, 8, rng), Probe::make_mlp(2, 8, 16, rng),
                    Probe::make_attention(0, 8, 2, rng)}) {
        auto path = std::filesystem::temp_directory_path() / "camo_probe_rt.bin";
        p.save(path);
        Probe q = Probe::load(path);
        CHECK(q.arch() == p.arch());
        CHECK(q.layer() == p.layer());
        CHECK(q.parameter_hash() == p.parameter_hash());

        Tensor h = Tensor::randn({5, 8}, rng);
        std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};
        CHECK(q.score_sequence_from_hidden(h, mask).item() ==
              p.score_sequence_from_hidden(h, mask).item());
        std::filesystem::remove(path);
    }
}

TEST_CASE("ensembles combine member scores") {
    Rng rng(8);
    Probe p0 = Probe::make_linear(0, 8, rng);
    Probe p1 = Probe::make_linear(1, 8, rng);

    std::vector<Tensor> layers{Tensor::randn({4, 8}, rng), Tensor::randn({4, 8}, rng)};
    ActivationTrace tr = trace_of(layers, {0, 1, 1, 1});

    double s0 = p0.score_sequence(tr);
    double s1 = p1.score_sequence(tr);

    ProbeEnsemble mean_ens({p0, p1}, EnsembleMode::mean);
    CHECK(mean_ens.score(tr) == doctest::Approx((s0 + s1) / 2.0).epsilon(1e-12));
    CHECK(mean_ens.layers() == std::vector<int>{0, 1});

    ProbeEnsemble max_ens({p0, p1}, EnsembleMode::max);
    CHECK(max_ens.score(tr) == doctest::Approx(std::max(s0, s1)).epsilon(1e-12));
}

TEST_CASE("probe arch names round-trip") {
    for (ProbeArch a : {ProbeArch::linear, ProbeArch::mlp, ProbeArch::attention})
        CHECK(probe_arch_from_name(probe_arch_name(a)) == a);
    CHECK_THROWS_AS((void)probe_arch_from_name("quadratic"), InputError);
}
