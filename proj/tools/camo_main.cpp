#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "camo/gradcheck.hpp"
#include "camo/harness.hpp"

using namespace camo;

namespace {

void print_stage(const StageRecord& rec) {
    std::cout << rec.name << ": " << (rec.cached ? "cached" : "ran") << " ("
              << format_double(rec.duration_s) << " s)\n";
    for (const auto& [file, hash] : rec.outputs)
        std::cout << "  " << file << "  " << hash.substr(0, 12) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probe-evasion organism: train, evade, audit"};
    app.require_subcommand(1);

    std::string config_path = "configs/default.json";
    std::string out_override;
    std::int64_t seed_override = -1;
    app.add_option("--config", config_path, "experiment config (json)")
        ->capture_default_str();
    app.add_option("--seed", seed_override,
                   "re-derive every stage seed from this value");
    app.add_option("--out", out_override, "output root (overrides config)");

    auto* gen = app.add_subcommand("gen-data", "vocabulary, split, corpora");
    auto* tlm = app.add_subcommand("train-lm", "pretrain the base model");
    auto* tpr = app.add_subcommand("train-probes", "train and freeze concept probes");
    auto* fin = app.add_subcommand("finetune", "evasion fine-tune + lambda=1 control");
    auto* mon = app.add_subcommand("train-monitors", "post-hoc monitor suites");

    bool no_trigger_only = false;
    auto* ev = app.add_subcommand("eval", "monitor drift, selectivity, capability tax");
    ev->add_flag("--no-trigger-only", no_trigger_only,
                 "skip triggered evaluation; audit false-positive rate on fresh "
                 "trigger-free traces");

    auto* ana = app.add_subcommand("analyze", "activation geometry of the evasion");

    std::string tiny_path = "configs/tiny.json";
    auto* rep = app.add_subcommand("report", "full report + acceptance checklist");
    rep->add_option("--tiny-config", tiny_path,
                    "small config for the repeat-run determinism check")
        ->capture_default_str();

    auto* all = app.add_subcommand("run-all", "every stage in order");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
        if (seed_override >= 0) cfg.override_seed(static_cast<std::uint64_t>(seed_override));
        if (!out_override.empty()) cfg.out_root = out_override;
        Pipeline pipe(cfg);
        std::cout << "run dir: " << pipe.run_dir().string() << "\n";

        if (gen->parsed()) print_stage(pipe.gen_data());
        if (tlm->parsed()) print_stage(pipe.train_lm());
        if (tpr->parsed()) print_stage(pipe.train_probes());
        if (fin->parsed()) print_stage(pipe.tune_organism());
        if (mon->parsed()) print_stage(pipe.train_monitors());

        if (ev->parsed()) {
            if (no_trigger_only) {
                nlohmann::ordered_json audit = pipe.fpr_audit();
                std::cout << audit.dump(2) << "\n";
            } else {
                print_stage(pipe.evaluate_stage());
                EvalReport r = pipe.eval_report();
                const DriftStat& st = r.train_pooled.at("linear");
                std::cout << "train pooled linear drop: "
                          << format_double(st.drop * 100) << " pts, CI ["
                          << format_double(st.ci_lo * 100) << ", "
                          << format_double(st.ci_hi * 100) << "]\n";
            }
        }

        if (ana->parsed()) print_stage(pipe.analyze_stage());

        if (rep->parsed()) {
            print_stage(pipe.report_stage());
            ExperimentConfig tiny = ExperimentConfig::load_file(tiny_path);
            std::vector<CriterionResult> res = run_acceptance_criteria(cfg, tiny);
            std::cout << criteria_lines(res);
            if (!all_pass(res)) return 2;
        }

        if (all->parsed()) {
            RunManifest man = pipe.run_all();
            for (const StageRecord& rec : man.stages) print_stage(rec);
            std::cout << "manifest verified, config " << man.config_hash << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
