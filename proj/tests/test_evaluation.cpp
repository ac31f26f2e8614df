#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "camo/evaluation.hpp"

using namespace camo;

namespace {

EvalConfig micro_eval_cfg() {
    EvalConfig ec;
    ec.probe_layer = 1;
    ec.n_monitor_train = 12;
    ec.admission_auroc = 0.0;  // admit everything at this scale
    ec.n_eval_pos = 30;
    ec.n_eval_neg = 30;
    ec.n_selectivity = 5;
    ec.n_capability = 5;
    ec.fpr_budget = 0.2;
    ec.n_audit = 30;
    ec.bootstrap_B = 100;
    ec.probe_train.max_epochs = 8;
    ec.probe_train.patience = 2;
    return ec;
}

struct MicroEval {
    ConceptLibrary lib;
    TransformerLM model;
    EvalConfig cfg = micro_eval_cfg();
    std::vector<std::string> concepts{"cifera", "krampo"};
    MonitorSuite suite;

    MicroEval() : model(model_cfg()) {
        model.freeze();
        suite = train_posthoc_monitors(model, lib, concepts, cfg);
    }

    static ModelConfig model_cfg() {
        ModelConfig mc;
        mc.vocab_size = 512;
        mc.d_model = 16;
        mc.n_layers = 2;
        mc.n_heads = 2;
        mc.d_ff = 32;
        mc.max_seq_len = 96;
        mc.seed = 33;
        return mc;
    }
};

DriftStat sample_stat(double shift) {
    DriftStat s;
    s.tpr_no = 0.9 + shift;
    s.tpr_trig = 0.2 + shift;
    s.drop = 0.7;
    s.ci_lo = 0.6 + shift;
    s.ci_hi = 0.8 + shift;
    s.n = 60;
    s.tau = 0.75 + shift;
    s.fpr = 0.01;
    s.admission = 0.97 + shift;
    s.admitted = true;
    return s;
}

}  // namespace

TEST_CASE("eval config floors") {
    EvalConfig c = micro_eval_cfg();
    c.validate();
    c.n_eval_pos = 29;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = micro_eval_cfg();
    c.n_audit = 10;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = micro_eval_cfg();
    c.n_monitor_train = 4;
    CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("defense catalogue layout") {
    auto defenses = defense_catalogue(2, 5);
    REQUIRE(defenses.size() == 5);
    CHECK(defenses[0].name == "linear");
    CHECK(defenses[0].layers == std::vector<int>{2});
    CHECK(defenses[1].name == "ensemble2");
    CHECK(defenses[1].layers == std::vector<int>{2, 3});
    CHECK(defenses[2].name == "ensemble_all");
    CHECK(defenses[2].layers == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(defenses[3].name == "mlp");
    CHECK(defenses[3].arch == ProbeArch::mlp);
    CHECK(defenses[4].name == "attention");
    CHECK(defenses[4].arch == ProbeArch::attention);

    // top-layer probe takes its ensemble partner from below
    auto top = defense_catalogue(4, 5);
    CHECK(top[1].layers == std::vector<int>{4, 3});

    CHECK_THROWS_AS((void)defense_catalogue(5, 5), InputError);
}

TEST_CASE("with_trigger inserts the sentence after bos") {
    ConceptLibrary lib;
    ProbeDataset ds = generate_concept_examples(lib, "cifera", 5, 3);
    const Example& ex = ds.positives[0];
    Example trig = with_trigger(ex, lib, "krampo");

    auto sentence = lib.build_trigger("krampo", false);
    REQUIRE(trig.prompt.size() == ex.prompt.size() + sentence.size());
    CHECK(trig.prompt[0] == lib.bos_id());
    for (std::size_t i = 0; i < sentence.size(); ++i) CHECK(trig.prompt[1 + i] == sentence[i]);
    for (std::size_t i = 1; i < ex.prompt.size(); ++i)
        CHECK(trig.prompt[sentence.size() + i] == ex.prompt[i]);
    CHECK(trig.response == ex.response);
    CHECK(trig.trigger_concept == "krampo");

    Example bad = ex;
    bad.prompt[0] = 5;
    CHECK_THROWS_AS((void)with_trigger(bad, lib, "krampo"), InputError);
}

TEST_CASE("bootstrap over per-example stats enforces the floor") {
    std::vector<double> v(30, 1.0);
    CiResult c = eval_bootstrap_ci(v, 50, 0.95, 7);
    CHECK(c.estimate == 1.0);
    CHECK_THROWS_AS((void)eval_bootstrap_ci(std::vector<double>(29, 1.0), 50, 0.95, 7),
                    InputError);
}

TEST_CASE("monitor suite training, scoring, and persistence") {
    MicroEval w;
    CHECK(w.suite.model_hash == w.model.parameter_hash());
    CHECK(w.suite.by_concept.size() == 2);

    const ConceptMonitors& cm = w.suite.monitors_for("cifera");
    CHECK(cm.linear.size() == 3);  // one per trace layer
    for (int l = 0; l < 3; ++l) CHECK(cm.linear[l].layer() == l);
    CHECK(cm.mlp.arch() == ProbeArch::mlp);
    CHECK(cm.attention.arch() == ProbeArch::attention);
    CHECK(cm.admission.size() == 5);
    CHECK(cm.admitted.size() == 5);
    CHECK_THROWS_AS((void)w.suite.monitors_for("tildo"), InputError);

    // defense_score matches the member probes it reads
    ProbeDataset ds = generate_concept_examples(w.lib, "cifera", 4, 9);
    ActivationTrace tr;
    {
        NoGradGuard ng;
        Example ex = ds.positives[0];
        std::vector<int> toks = ex.tokens();
        (void)w.model.forward(toks, &tr);
        tr.generation_mask = ex.generation_mask();
    }
    auto defenses = defense_catalogue(w.cfg.probe_layer, 3);
    double lin = defense_score(cm, defenses[0], tr);
    CHECK(lin == doctest::Approx(cm.linear[1].score_sequence(tr)).epsilon(1e-12));
    double ens2 = defense_score(cm, defenses[1], tr);
    CHECK(ens2 == doctest::Approx((cm.linear[1].score_sequence(tr) +
                                   cm.linear[2].score_sequence(tr)) /
                                  2.0)
                      .epsilon(1e-12));
    double mlp = defense_score(cm, defenses[3], tr);
    CHECK(mlp == doctest::Approx(cm.mlp.score_sequence(tr)).epsilon(1e-12));

    // round-trip through disk: identical scores
    auto dir = std::filesystem::temp_directory_path() / "camo_suite_rt";
    std::filesystem::remove_all(dir);
    w.suite.save(dir);
    MonitorSuite back = MonitorSuite::load(dir);
    CHECK(back.model_hash == w.suite.model_hash);
    const ConceptMonitors& bm = back.monitors_for("cifera");
    CHECK(defense_score(bm, defenses[0], tr) == lin);
    CHECK(defense_score(bm, defenses[4], tr) ==
          doctest::Approx(defense_score(cm, defenses[4], tr)).epsilon(1e-15));
    CHECK(bm.admission.at("linear") == cm.admission.at("linear"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("defense scoring helpers are deterministic and calibratable") {
    MicroEval w;
    ProbeDataset ds = generate_concept_examples(w.lib, "krampo", w.cfg.n_eval_neg, 77);

    std::vector<double> s1 = score_examples_with_defense(w.model, w.suite, "krampo",
                                                         ds.negatives, "linear", w.cfg);
    std::vector<double> s2 = score_examples_with_defense(w.model, w.suite, "krampo",
                                                         ds.negatives, "linear", w.cfg);
    CHECK(s1.size() == ds.negatives.size());
    CHECK(s1 == s2);

    std::vector<double> cal1 = calibration_scores(w.model, w.suite, w.lib, "krampo", "linear",
                                                  w.cfg);
    std::vector<double> cal2 = calibration_scores(w.model, w.suite, w.lib, "krampo", "linear",
                                                  w.cfg);
    REQUIRE(cal1.size() == static_cast<std::size_t>(w.cfg.n_eval_neg));
    CHECK(cal1 == cal2);
    double tau1 = calibrate_threshold(cal1, w.cfg.fpr_budget);
    double tau2 = calibrate_threshold(cal2, w.cfg.fpr_budget);
    CHECK(format_double(tau1) == format_double(tau2));
}

TEST_CASE("pooled drop on an unrelated model is structurally sound") {
    MicroEval w;
    DriftStat st = evaluate_drop_pooled(w.model, w.suite, w.lib, w.concepts, "linear", w.cfg);
    CHECK(st.n == 2 * w.cfg.n_eval_pos);
    CHECK(std::isfinite(st.drop));
    CHECK(st.ci_lo <= st.drop);
    CHECK(st.drop <= st.ci_hi);
    CHECK(st.tpr_no >= 0.0);
    CHECK(st.tpr_no <= 1.0);
    CHECK(st.fpr <= w.cfg.fpr_budget + 1e-12);
}

TEST_CASE("eval report serialization round-trip") {
    EvalReport r;
    r.model_hash = "abc123";
    r.per_concept["cifera"]["linear"] = sample_stat(0.0);
    r.per_concept["cifera"]["mlp"] = sample_stat(0.01);
    r.per_concept["tildo"]["linear"] = sample_stat(0.02);
    r.train_pooled["linear"] = sample_stat(0.03);
    r.test_pooled_linear = sample_stat(0.04);
    r.selectivity_concepts = {"cifera", "tildo"};
    r.selectivity = {{55.5, 1.25}, {-2.5, 60.75}};
    r.selectivity_diag_mean = 58.125;
    r.selectivity_test_diag_mean = 60.75;
    r.selectivity_same_group_mean = 3.5;
    r.selectivity_unrelated_mean = -0.625;
    r.ppl_org_no = 10.5;
    r.ppl_org_trig = 10.75;
    r.ppl_base_no = 10.25;
    r.loglik_org_no = -2.351;
    r.loglik_org_trig = -2.375;
    r.loglik_base_no = -2.327;
    r.ppl_ratio_trigger = 1.0238;
    r.ppl_ratio_base = 1.0244;
    r.control_base_trigger = sample_stat(0.05);
    r.control_lambda1 = sample_stat(0.06);
    r.has_controls = true;

    EvalReport b = EvalReport::from_json(r.to_json());
    CHECK(b.model_hash == r.model_hash);
    CHECK(b.per_concept.size() == 2);
    CHECK(b.per_concept.at("cifera").at("mlp").tau == r.per_concept.at("cifera").at("mlp").tau);
    CHECK(b.train_pooled.at("linear").drop == r.train_pooled.at("linear").drop);
    CHECK(b.test_pooled_linear.ci_hi == r.test_pooled_linear.ci_hi);
    CHECK(b.selectivity == r.selectivity);
    CHECK(b.selectivity_concepts == r.selectivity_concepts);
    CHECK(b.selectivity_diag_mean == r.selectivity_diag_mean);
    CHECK(b.selectivity_test_diag_mean == r.selectivity_test_diag_mean);
    CHECK(b.selectivity_same_group_mean == r.selectivity_same_group_mean);
    CHECK(b.selectivity_unrelated_mean == r.selectivity_unrelated_mean);
    CHECK(b.ppl_org_no == r.ppl_org_no);
    CHECK(b.ppl_org_trig == r.ppl_org_trig);
    CHECK(b.ppl_base_no == r.ppl_base_no);
    CHECK(b.loglik_org_no == r.loglik_org_no);
    CHECK(b.ppl_ratio_trigger == r.ppl_ratio_trigger);
    CHECK(b.ppl_ratio_base == r.ppl_ratio_base);
    CHECK(b.control_base_trigger.tau == r.control_base_trigger.tau);
    CHECK(b.control_lambda1.admission == r.control_lambda1.admission);
    CHECK(b.has_controls);

    // csv renderers produce one line per cell / defense
    std::string sel_csv = r.selectivity_csv();
    CHECK(sel_csv.find("cifera") != std::string::npos);
    std::string def_csv = r.defense_csv();
    CHECK(def_csv.find("linear") != std::string::npos);
}
