#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "camo/harness.hpp"

using namespace camo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig micro_cfg() {
    ExperimentConfig c;
    c.model.vocab_size = 512;
    c.model.d_model = 16;
    c.model.n_layers = 2;
    c.model.n_heads = 2;
    c.model.d_ff = 32;
    c.model.max_seq_len = 128;
    c.model.seed = 0;

    c.corpus.n_pretrain_docs = 80;
    c.corpus.n_finetune_examples = 48;
    c.corpus.n_probe_per_class = 16;

    c.lm.epochs = 1;
    c.lm.lr = 1e-3;
    c.lm.warmup_steps = 4;
    c.lm.val_fraction = 0.1;
    c.lm.require_beat_unigram = false;

    c.probes.layer = 1;
    c.probes.quality_auroc = 0.55;
    c.probes.train.lr = 3e-3;
    c.probes.train.batch_size = 8;
    c.probes.train.max_epochs = 30;
    c.probes.train.patience = 8;
    c.probes.train.mlp_hidden = 8;
    c.probes.train.attention_queries = 2;

    c.tune.epochs = 1;
    c.tune.lr = 3e-4;
    c.tune.warmup_steps = 2;
    c.tune.completion_tokens = 6;

    c.eval.probe_layer = 1;
    c.eval.n_monitor_train = 12;
    c.eval.admission_auroc = 0.0;
    c.eval.n_eval_pos = 30;
    c.eval.n_eval_neg = 30;
    c.eval.n_selectivity = 6;
    c.eval.n_capability = 12;
    c.eval.fpr_budget = 0.2;
    c.eval.n_audit = 30;
    c.eval.bootstrap_B = 80;
    c.eval.probe_train.lr = 3e-3;
    c.eval.probe_train.batch_size = 8;
    c.eval.probe_train.max_epochs = 12;
    c.eval.probe_train.patience = 4;
    c.eval.probe_train.mlp_hidden = 8;
    c.eval.probe_train.attention_queries = 2;

    c.analysis.probe_layer = 1;
    c.analysis.n_pairs = 6;
    c.analysis.n_reference = 8;
    c.analysis.n_sweep = 6;
    c.analysis.bootstrap_B = 60;
    return c;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int count_uncached(const RunManifest& man) {
    int n = 0;
    for (const auto& s : man.stages) n += s.cached ? 0 : 1;
    return n;
}

}  // namespace

TEST_CASE("experiment config round-trips and rejects unknown keys") {
    unsetenv(kRunsDirEnv);
    ExperimentConfig c = micro_cfg();
    c.validate();

    ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.config_hash() == c.config_hash());
    CHECK(back.model.d_model == 16);
    CHECK(back.eval.fpr_budget == 0.2);
    CHECK(back.out_root == c.out_root);

    nlohmann::ordered_json j = c.to_json();
    j["extra_section"] = 1;
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(j), InputError);

    j = c.to_json();
    j["eval"]["n_eval"] = 10;  // misspelled key
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(j), InputError);

    j = c.to_json();
    j["probes"]["train"]["momentum"] = 0.9;
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(j), InputError);
}

TEST_CASE("config hash keys the experiment, not the storage location") {
    ExperimentConfig a = micro_cfg();
    ExperimentConfig b = micro_cfg();
    b.out_root = "/somewhere/else/entirely";
    CHECK(a.config_hash() == b.config_hash());

    b = micro_cfg();
    b.tune.lambda_lm = 0.25;
    CHECK(a.config_hash() != b.config_hash());

    // override_seed touches every stage seed deterministically
    ExperimentConfig s1 = micro_cfg();
    ExperimentConfig s2 = micro_cfg();
    s1.override_seed(1234);
    s2.override_seed(1234);
    CHECK(s1.config_hash() == s2.config_hash());
    CHECK(s1.config_hash() != a.config_hash());
    CHECK(s1.corpus.seed != a.corpus.seed);
    CHECK(s1.lm.seed != a.lm.seed);
    CHECK(s1.probes.seed != a.probes.seed);
    CHECK(s1.tune.seed != a.tune.seed);
    CHECK(s1.eval.seed != a.eval.seed);
    CHECK(s1.analysis.seed != a.analysis.seed);
    CHECK(s1.corpus.seed != s1.lm.seed);
}

TEST_CASE("config validation composes section validators") {
    ExperimentConfig c = micro_cfg();
    c.model.d_model = 15;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = micro_cfg();
    c.corpus.n_pretrain_docs = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = micro_cfg();
    c.probes.layer = 7;  // beyond the trace of a 2-layer model
    CHECK_THROWS_AS(c.validate(), InputError);
    c = micro_cfg();
    c.eval.probe_layer = 9;
    CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("pipeline: full run, cache idempotence, selective invalidation") {
    fs::path root = fresh_dir("camo_harness_run");
    setenv(kRunsDirEnv, root.string().c_str(), 1);
    ExperimentConfig cfg = micro_cfg();

    Pipeline pipe(cfg);
    CHECK(pipe.run_dir().parent_path() == root);

    RunManifest man = pipe.run_all();
    CHECK(man.config_hash == cfg.config_hash());
    CHECK(man.tool_version == kToolVersion);
    REQUIRE(man.stages.size() == 8);
    CHECK(count_uncached(man) == 8);
    man.verify(pipe.run_dir());
    CHECK(fs::exists(pipe.run_dir() / "manifest.json"));

    // artifacts exist and load
    ConceptSplit sp = pipe.split();
    CHECK(sp.train.size() == 9);
    TransformerLM base = pipe.base_model();
    TransformerLM org = pipe.organism();
    CHECK(base.parameter_hash() != org.parameter_hash());
    FrozenProbeSet fps = pipe.frozen_probes();
    CHECK(fps.probes.size() == sp.train.size());
    fps.require_frozen();
    EvalReport ev = pipe.eval_report();
    CHECK(ev.has_controls);
    CHECK(ev.train_pooled.count("linear") == 1);
    CHECK(pipe.analysis_json().contains("shift"));
    CHECK(pipe.report_json().at("config_hash").get<std::string>() == cfg.config_hash());

    // provenance closure: the finetune stage records its input hashes
    StageRecord fin = pipe.stage_record("finetune");
    CHECK(fin.inputs.count("train-lm/base.ckpt") == 1);
    CHECK(fin.inputs.count("config:finetune") == 1);

    // second run: every stage cached, same artifacts
    Pipeline pipe2(cfg);
    RunManifest man2 = pipe2.run_all();
    CHECK(count_uncached(man2) == 0);
    REQUIRE(man2.stages.size() == man.stages.size());
    for (std::size_t i = 0; i < man.stages.size(); ++i) {
        CHECK(man2.stages[i].name == man.stages[i].name);
        CHECK(man2.stages[i].inputs == man.stages[i].inputs);
        CHECK(man2.stages[i].outputs == man.stages[i].outputs);
    }

    // corrupt one probe file: only train-probes re-runs, and it regenerates
    // byte-identical output, so downstream stages stay cached
    fs::path probe_file;
    for (const auto& e : fs::directory_iterator(pipe.run_dir() / "train-probes"))
        if (e.path().extension() == ".bin") probe_file = e.path();
    REQUIRE(!probe_file.empty());
    std::string before = hash_file(probe_file);
    {
        std::ofstream f(probe_file, std::ios::binary | std::ios::trunc);
        f << "garbage";
    }
    Pipeline pipe3(cfg);
    RunManifest man3 = pipe3.run_all();
    CHECK(count_uncached(man3) == 1);
    for (const auto& s : man3.stages) CHECK(s.cached == (s.name != "train-probes"));
    CHECK(hash_file(probe_file) == before);

    // manifest verification notices corruption
    {
        std::ofstream f(pipe.run_dir() / "finetune" / "organism.ckpt",
                        std::ios::binary | std::ios::app);
        f << "tail";
    }
    CHECK_THROWS_AS(man3.verify(pipe.run_dir()), ContractError);
    unsetenv(kRunsDirEnv);
}

TEST_CASE("analysis seed never reaches training artifacts") {
    fs::path root = fresh_dir("camo_harness_seeds");
    setenv(kRunsDirEnv, root.string().c_str(), 1);

    ExperimentConfig a = micro_cfg();
    ExperimentConfig b = micro_cfg();
    b.analysis.seed = 777;
    REQUIRE(a.config_hash() != b.config_hash());

    Pipeline pa(a);
    pa.run_all();
    Pipeline pb(b);
    pb.run_all();

    const std::string probe_rel =
        "train-probes/probe_" + pa.designated_concept() + "_0.bin";
    for (const std::string& rel : {std::string("train-lm/base.ckpt"), probe_rel,
                                   std::string("finetune/organism.ckpt"),
                                   std::string("finetune/control.ckpt")}) {
        CHECK(hash_file(pa.run_dir() / rel) == hash_file(pb.run_dir() / rel));
    }
    CHECK(hash_file(pa.run_dir() / "analyze" / "analysis.json") !=
          hash_file(pb.run_dir() / "analyze" / "analysis.json"));
    unsetenv(kRunsDirEnv);
}

TEST_CASE("fpr audit: taus replicate byte for byte") {
    fs::path root = fresh_dir("camo_harness_audit");
    setenv(kRunsDirEnv, root.string().c_str(), 1);
    ExperimentConfig cfg = micro_cfg();
    Pipeline pipe(cfg);
    pipe.run_all();

    nlohmann::ordered_json audit = pipe.fpr_audit();
    CHECK(audit.at("fpr_budget").get<double>() == cfg.eval.fpr_budget);
    CHECK(audit.at("concepts").size() == 9);
    CHECK(audit.at("all_taus_byte_equal").get<bool>());
    CHECK(audit.at("all_within_budget").get<bool>());
    for (const auto& [cname, e] : audit.at("concepts").items()) {
        CHECK(e.at("tau_byte_equal").get<bool>());
        CHECK(e.at("fpr_at_fresh_tau").get<double>() <= 1.5 * cfg.eval.fpr_budget + 1e-12);
        CHECK(e.at("fpr_at_recalibrated_tau").get<double>() >= 0.0);
        CHECK(e.at("fpr_at_recalibrated_tau").get<double>() <= 1.0);
    }
    unsetenv(kRunsDirEnv);
}

TEST_CASE("stage records carry inputs and outputs for provenance") {
    fs::path root = fresh_dir("camo_harness_prov");
    setenv(kRunsDirEnv, root.string().c_str(), 1);
    ExperimentConfig cfg = micro_cfg();
    Pipeline pipe(cfg);
    StageRecord rec = pipe.gen_data();
    CHECK(rec.name == "gen-data");
    CHECK_FALSE(rec.cached);
    CHECK(rec.outputs.count("split.json") == 1);
    CHECK(rec.outputs.count("vocab.txt") == 1);
    CHECK(rec.inputs.count("tool") == 1);
    for (const auto& [file, hash] : rec.outputs)
        CHECK(hash_file(pipe.run_dir() / "gen-data" / file) == hash);

    StageRecord json_rt = StageRecord::from_json(rec.to_json());
    CHECK(json_rt.name == rec.name);
    CHECK(json_rt.inputs == rec.inputs);
    CHECK(json_rt.outputs == rec.outputs);
    CHECK(json_rt.timestamp == rec.timestamp);
    unsetenv(kRunsDirEnv);
}
