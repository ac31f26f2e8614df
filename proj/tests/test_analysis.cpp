#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "camo/analysis.hpp"

using namespace camo;

namespace {

const ConceptLibrary& lib() {
    static ConceptLibrary L;
    return L;
}

ModelConfig micro_model_cfg() {
    ModelConfig mc;
    mc.vocab_size = 512;
    mc.d_model = 16;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.d_ff = 32;
    mc.max_seq_len = 96;
    mc.seed = 44;
    return mc;
}

}  // namespace

TEST_CASE("pca: exact 2x2 eigenvalues") {
    std::vector<std::vector<double>> rows = {{1, 0}, {-1, 0}, {0, 2}, {0, -2}};
    PcaSummary s = pca_dimensionality(rows, 0.9);
    REQUIRE(s.eigenvalues.size() == 2);
    CHECK(s.eigenvalues[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-13));
    CHECK(s.eigenvalues[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
    CHECK(s.cumulative[0] == doctest::Approx(0.8).epsilon(1e-13));
    CHECK(s.cumulative[1] == 1.0);
    CHECK(s.components_to_target == 2);  // 0.8 < 0.9

    CHECK(pca_dimensionality(rows, 0.8).components_to_target == 1);
    CHECK(pca_dimensionality(rows, 0.5).components_to_target == 1);
}

TEST_CASE("pca: planted low rank is recovered exactly") {
    Rng rng(5);
    std::vector<std::vector<double>> A(24, std::vector<double>(3));
    for (auto& r : A)
        for (auto& v : r) v = rng.normal(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 200; ++i) {
        double z[3] = {rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)};
        std::vector<double> x(24, 0.0);
        for (int j = 0; j < 24; ++j)
            for (int k = 0; k < 3; ++k) x[j] += A[j][k] * z[k];
        rows.push_back(std::move(x));
    }
    PcaSummary s = pca_dimensionality(rows, 0.9);
    CHECK(s.components_to_target <= 3);
    CHECK(s.cumulative[2] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.eigenvalues[3] < 1e-9 * s.eigenvalues[0]);
    for (std::size_t i = 1; i < s.eigenvalues.size(); ++i)
        CHECK(s.eigenvalues[i] <= s.eigenvalues[i - 1] + 1e-12);
    for (std::size_t i = 1; i < s.cumulative.size(); ++i)
        CHECK(s.cumulative[i] >= s.cumulative[i - 1] - 1e-15);
    CHECK(s.cumulative.back() == 1.0);
}

TEST_CASE("pca: isotropic noise needs nearly all components") {
    Rng rng(9);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> x(16);
        for (auto& v : x) v = rng.normal(0.0, 1.0);
        rows.push_back(std::move(x));
    }
    PcaSummary s = pca_dimensionality(rows, 0.9);
    CHECK(s.components_to_target >= 13);
    CHECK(s.components_to_target <= 15);
}

TEST_CASE("pca rejects degenerate input") {
    CHECK_THROWS_AS((void)pca_dimensionality({}, 0.9), InputError);
    CHECK_THROWS_AS((void)pca_dimensionality({{1.0, 2.0}}, 0.9), InputError);
    // constant rows: zero variance
    std::vector<std::vector<double>> constant(5, std::vector<double>{1.0, 2.0});
    PcaSummary s = pca_dimensionality(constant, 0.9);
    CHECK(s.components_to_target == 0);
}

TEST_CASE("trigger pairs align position for position") {
    std::vector<PairedInput> pairs = build_trigger_pairs(lib(), "cifera", "cifera", 12, 3);
    REQUIRE(pairs.size() == 12);
    const int name_id = lib().vocab().id("cifera");
    const int alias_id = lib().vocab().id(lib().get("cifera").alias);
    for (const PairedInput& p : pairs) {
        REQUIRE(p.tokens_trig.size() == p.tokens_norm.size());
        REQUIRE(p.mask.size() == p.tokens_trig.size());
        int diffs = 0;
        std::size_t diff_at = 0;
        for (std::size_t i = 0; i < p.tokens_trig.size(); ++i) {
            if (p.tokens_trig[i] != p.tokens_norm[i]) {
                ++diffs;
                diff_at = i;
            }
        }
        CHECK(diffs == 1);  // only the trigger slot differs
        CHECK((p.tokens_trig[diff_at] == name_id || p.tokens_trig[diff_at] == alias_id));
        CHECK(p.tokens_norm[diff_at] == lib().vocab().id("tavo"));
        CHECK(p.mask[diff_at] == 0);
        std::size_t masked = 0;
        for (auto b : p.mask) masked += b;
        CHECK(masked >= 10);
    }

    // deterministic; trigger concept can differ from the data concept
    std::vector<PairedInput> again = build_trigger_pairs(lib(), "cifera", "cifera", 12, 3);
    CHECK(again[0].tokens_trig == pairs[0].tokens_trig);
    std::vector<PairedInput> mismatched = build_trigger_pairs(lib(), "cifera", "krampo", 6, 3);
    const int other_id = lib().vocab().id("krampo");
    const int other_alias = lib().vocab().id(lib().get("krampo").alias);
    for (const PairedInput& p : mismatched) {
        bool found = false;
        for (std::size_t i = 0; i < p.tokens_trig.size(); ++i)
            found = found || ((p.tokens_trig[i] == other_id || p.tokens_trig[i] == other_alias) &&
                              p.tokens_norm[i] == lib().vocab().id("tavo"));
        CHECK(found);
    }
}

TEST_CASE("shift profile: identical pairs shift nothing, real pairs shift something") {
    TransformerLM m(micro_model_cfg());
    m.freeze();

    std::vector<PairedInput> pairs = build_trigger_pairs(lib(), "cifera", "cifera", 6, 5);
    Rng ref_rng(4);
    std::vector<std::vector<int>> reference;
    for (int i = 0; i < 8; ++i) {
        std::vector<int> doc{lib().bos_id()};
        auto content = lib().neutral_content(20, ref_rng);
        doc.insert(doc.end(), content.begin(), content.end());
        reference.push_back(std::move(doc));
    }

    // degenerate pairs: the two streams are identical
    std::vector<PairedInput> same = pairs;
    for (PairedInput& p : same) p.tokens_trig = p.tokens_norm;
    ShiftProfile zero = activation_shift_profile(m, same, reference);
    REQUIRE(zero.shift.size() == 3);
    for (double v : zero.shift) CHECK(v == 0.0);
    for (double v : zero.ref_norms) CHECK(v > 0.0);

    ShiftProfile real = activation_shift_profile(m, pairs, reference);
    // the swapped token sits at an unmasked slot, so the embedding layer
    // cannot move masked positions; attention propagates it from layer 1 on
    CHECK(real.shift[0] == 0.0);
    for (std::size_t l = 1; l < real.shift.size(); ++l) CHECK(real.shift[l] > 0.0);
    CHECK(real.peak_layer >= 1);
    CHECK(real.peak_layer < 3);
}

TEST_CASE("collect_layer_states pools masked positions") {
    TransformerLM m(micro_model_cfg());
    m.freeze();
    std::vector<PairedInput> pairs = build_trigger_pairs(lib(), "krampo", "krampo", 4, 9);
    auto rows = collect_layer_states(m, pairs, 1, true);
    std::size_t expect = 0;
    for (const auto& p : pairs)
        for (auto b : p.mask) expect += b;
    CHECK(rows.size() == expect);
    for (const auto& r : rows) CHECK(r.size() == 16);

    auto rows_norm = collect_layer_states(m, pairs, 1, false);
    CHECK(rows_norm.size() == expect);
    // triggered and normal states differ somewhere
    bool differs = false;
    for (std::size_t i = 0; i < rows.size() && !differs; ++i)
        differs = rows[i] != rows_norm[i];
    CHECK(differs);
}

TEST_CASE("projection profile: identical pairs project to exactly zero") {
    TransformerLM m(micro_model_cfg());
    m.freeze();
    Rng prng(6);
    Probe probe = Probe::make_linear(1, 16, prng);
    probe.freeze();

    std::vector<PairedInput> pairs = build_trigger_pairs(lib(), "cifera", "cifera", 5, 11);
    for (PairedInput& p : pairs) p.tokens_trig = p.tokens_norm;
    ProjectionProfile pp = probe_projection_profile(m, pairs, probe, 50, 0.95, 3);
    REQUIRE(pp.dots.size() == 3);
    CHECK(pp.probe_layer == 1);
    for (int l = 0; l < 3; ++l) {
        CHECK(pp.dots[l] == 0.0);
        CHECK(pp.ci_lo[l] == 0.0);
        CHECK(pp.ci_hi[l] == 0.0);
    }

    Probe mlp = Probe::make_mlp(1, 16, 8, prng);
    mlp.freeze();
    CHECK_THROWS_AS(
        (void)probe_projection_profile(m, pairs, mlp, 50, 0.95, 3), ContractError);
}

TEST_CASE("default sweep words cover names, aliases, and random strings") {
    std::vector<std::string> words = default_sweep_words(lib());
    std::set<std::string> set(words.begin(), words.end());
    CHECK(set.size() == words.size());  // no duplicates
    for (const Concept& c : lib().concepts()) {
        CHECK(set.count(c.name) == 1);
        CHECK(set.count(c.alias) == 1);
    }
    for (const std::string& w : lib().random_string_tokens()) CHECK(set.count(w) == 1);
    CHECK(words.size() >= 40);
}

TEST_CASE("semantic sweep on a micro model produces a full curve") {
    TransformerLM m(micro_model_cfg());
    m.freeze();

    EvalConfig ec;
    ec.probe_layer = 1;
    ec.n_monitor_train = 10;
    ec.admission_auroc = 0.0;
    ec.probe_train.max_epochs = 6;
    ec.probe_train.patience = 2;
    MonitorSuite suite = train_posthoc_monitors(m, lib(), {"cifera"}, ec);

    AnalysisConfig ac;
    ac.probe_layer = 1;
    ac.n_sweep = 6;
    ac.bootstrap_B = 60;
    ac.seed = 17;

    std::vector<std::string> words{"cifera",  "digita", "tavo",
                                   "numvorta", "qqnrx",  "not-in-vocab"};
    SweepResult res = semantic_sweep(m, suite, lib(), "cifera", words, ac);
    CHECK(res.skipped == std::vector<std::string>{"not-in-vocab"});
    REQUIRE(res.points.size() == 5);
    for (const SweepPoint& p : res.points) {
        CHECK(std::isfinite(p.cosine));
        CHECK(p.cosine <= 1.0 + 1e-12);
        CHECK(p.cosine >= -1.0 - 1e-12);
        CHECK(p.mean_score >= 0.0);
        CHECK(p.mean_score <= 1.0);
    }
    // the concept's own name has cosine exactly 1
    CHECK(res.points[0].word == "cifera");
    CHECK(res.points[0].cosine == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.baseline_ci_lo <= res.baseline_mean);
    CHECK(res.baseline_mean <= res.baseline_ci_hi);
    CHECK(std::isfinite(res.pearson_r));

    SweepResult res2 = semantic_sweep(m, suite, lib(), "cifera", words, ac);
    CHECK(res2.points[3].mean_score == res.points[3].mean_score);
}

TEST_CASE("analysis config validation") {
    AnalysisConfig c;
    c.validate();
    c.n_pairs = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = AnalysisConfig{};
    c.variance_target = 1.5;
    CHECK_THROWS_AS(c.validate(), InputError);
}
